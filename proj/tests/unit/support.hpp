#pragma once

#include <filesystem>
#include <string>

#include "incsim/config.hpp"
#include "incsim/popgen/generator.hpp"
#include "incsim/transmission.hpp"

namespace testing_support {

inline std::filesystem::path data_dir() { return incsim::default_data_dir(); }

inline std::filesystem::path temp_dir(const std::string &name) {
    const auto dir = std::filesystem::path(INCSIM_TEST_TMP) / name;
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

inline const incsim::popgen::DemographicTables &tables() {
    static const auto t =
        incsim::popgen::load_demographic_tables(incsim::popgen::TablePaths::in_directory(data_dir()));
    return t;
}

inline const incsim::TransmissionTable &transmission() {
    static const auto t =
        incsim::TransmissionTable::from_survey(incsim::read_survey_table(data_dir() / "survey_table.csv"));
    return t;
}

/// A reduced population, cheap enough for per-test use.
inline const incsim::popgen::Population &small_population() {
    static const auto pop = [] {
        incsim::popgen::GenerationParams p;
        p.seed_count = 300;
        p.horizon_years = 130;
        p.burn_in_years = 90;
        p.rng_seed = 11;
        return incsim::popgen::generate_population(tables(), p);
    }();
    return pop;
}

} // namespace testing_support
