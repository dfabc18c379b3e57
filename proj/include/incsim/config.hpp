#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <string>
#include <type_traits>
#include <vector>

#include <json.hpp>

#include "error.hpp"
#include "popgen/generator.hpp"
#include "popgen/tables.hpp"
#include "sentencing.hpp"
#include "transmission.hpp"

#ifndef INCSIM_DATA_DIR
#define INCSIM_DATA_DIR "data"
#endif

namespace incsim {

inline constexpr const char *kOutputRootEnv = "INCSIM_OUTPUT_ROOT";
inline constexpr const char *kDefaultOutputRoot = "runs";

inline std::filesystem::path default_data_dir() { return INCSIM_DATA_DIR; }

inline std::filesystem::path default_output_root() {
    const char *env = std::getenv(kOutputRootEnv);
    return env && *env ? std::filesystem::path(env) : std::filesystem::path(kDefaultOutputRoot);
}

struct PopulationConfig {
    popgen::TablePaths tables = popgen::TablePaths::in_directory(default_data_dir());
    double fertility_mean = 2.07;
    popgen::GenerationParams generation;
    /// Load this population instead of generating one.
    std::optional<std::filesystem::path> file;
    /// Give every replicate its own population, seeded from the replicate seed.
    bool regenerate_per_replicate = false;
};

struct TransmissionConfig {
    std::filesystem::path survey_table = default_data_dir() / "survey_table.csv";
    int calibration_sentence = kCalibrationSentence;
};

struct SentenceSpec {
    std::optional<double> mean;
    std::optional<double> median;
    std::optional<double> dispersion;
    std::optional<double> success_prob;
    int floor = 1;

    bool is_fit() const noexcept { return mean.has_value(); }
};

struct ScenarioConfig {
    std::string label;
    SentenceSpec sentence;
    double initial_prevalence = 0.01;
    int duration_months = 600;
    int replicates = 250;
    int eligibility_min_age = 15;
    bool contagion = true;
    double spontaneous_rate = 0.0;
    bool allow_mixed_drivers = false;
};

struct OverlayConfig {
    std::filesystem::path file;
    int start_year = 0;
};

struct AnalysisConfig {
    int recidivism_window = 36;
    std::vector<int> age_band_edges{25, 35, 45, 55};
    /// Labels of the two scenarios compared month by month; defaults to the first two.
    std::vector<std::string> compare;
    std::optional<OverlayConfig> overlay;
};

struct RunConfig {
    PopulationConfig population;
    TransmissionConfig transmission;
    std::vector<ScenarioConfig> scenarios;
    AnalysisConfig analysis;
    std::filesystem::path output_dir;
    std::uint64_t master_seed = 1;
    /// 0 means available parallelism.
    unsigned workers = 0;
};

namespace config_detail {

using nlohmann::json;

inline void check_keys(const json &obj, const std::string &where, std::initializer_list<const char *> allowed) {
    if (!obj.is_object()) {
        throw ConfigError(where + ": expected an object");
    }
    const std::set<std::string> ok(allowed.begin(), allowed.end());
    for (const auto &[key, value] : obj.items()) {
        if (!ok.contains(key)) {
            throw ConfigError(where + ": unknown key '" + key + "'");
        }
    }
}

template <typename T>
void read(const json &obj, const char *key, T &out, const std::string &where) {
    if (!obj.contains(key)) {
        return;
    }
    const auto &value = obj.at(key);
    if constexpr (std::is_integral_v<T> && !std::is_same_v<T, bool>) {
        if (!value.is_number_integer() || (std::is_unsigned_v<T> && !value.is_number_unsigned())) {
            throw ConfigError(where + "." + key + ": expected " +
                              (std::is_unsigned_v<T> ? "a non-negative integer" : "an integer"));
        }
    }
    try {
        out = value.get<T>();
    } catch (const json::exception &) {
        throw ConfigError(where + "." + key + ": wrong type");
    }
}

template <typename T>
void read(const json &obj, const char *key, std::optional<T> &out, const std::string &where) {
    if (obj.contains(key)) {
        T value{};
        read(obj, key, value, where);
        out = value;
    }
}

inline std::filesystem::path resolve(const std::filesystem::path &base, const std::string &p) {
    const std::filesystem::path path(p);
    return path.is_absolute() ? path : base / path;
}

inline void read_path(const json &obj, const char *key, std::filesystem::path &out, const std::filesystem::path &base,
                      const std::string &where) {
    std::string text;
    read(obj, key, text, where);
    if (obj.contains(key)) {
        out = resolve(base, text);
    }
}

} // namespace config_detail

/// Parses a config document. Relative paths resolve against `base_dir`.
inline RunConfig parse_config(const nlohmann::json &doc, const std::filesystem::path &base_dir) {
    using namespace config_detail;
    check_keys(doc, "config", {"population", "transmission", "scenarios", "analysis", "output_dir", "master_seed",
                               "workers"});
    RunConfig cfg;
    read(doc, "master_seed", cfg.master_seed, "config");
    read(doc, "workers", cfg.workers, "config");
    cfg.output_dir = default_output_root();
    read_path(doc, "output_dir", cfg.output_dir, base_dir, "config");

    if (doc.contains("population")) {
        const auto &p = doc["population"];
        const std::string w = "population";
        check_keys(p, w, {"tables_dir", "life_table_female", "life_table_male", "fertility", "friend_counts",
                          "fertility_mean", "seed_count", "horizon_years", "burn_in_years", "seed",
                          "seed_birth_year_max", "friend_count_is_total", "file", "regenerate_per_replicate"});
        auto &pc = cfg.population;
        if (p.contains("tables_dir")) {
            std::filesystem::path dir;
            read_path(p, "tables_dir", dir, base_dir, w);
            pc.tables = popgen::TablePaths::in_directory(dir);
        }
        read_path(p, "life_table_female", pc.tables.life_table_female, base_dir, w);
        read_path(p, "life_table_male", pc.tables.life_table_male, base_dir, w);
        read_path(p, "fertility", pc.tables.fertility, base_dir, w);
        read_path(p, "friend_counts", pc.tables.friend_counts, base_dir, w);
        read(p, "fertility_mean", pc.fertility_mean, w);
        read(p, "seed_count", pc.generation.seed_count, w);
        read(p, "horizon_years", pc.generation.horizon_years, w);
        read(p, "burn_in_years", pc.generation.burn_in_years, w);
        read(p, "seed", pc.generation.rng_seed, w);
        read(p, "seed_birth_year_max", pc.generation.seed_birth_year_max, w);
        read(p, "friend_count_is_total", pc.generation.friend_count_is_total, w);
        read(p, "regenerate_per_replicate", pc.regenerate_per_replicate, w);
        if (p.contains("file")) {
            std::filesystem::path file;
            read_path(p, "file", file, base_dir, w);
            pc.file = file;
        }
    }

    if (doc.contains("transmission")) {
        const auto &t = doc["transmission"];
        check_keys(t, "transmission", {"survey_table", "calibration_sentence"});
        read_path(t, "survey_table", cfg.transmission.survey_table, base_dir, "transmission");
        read(t, "calibration_sentence", cfg.transmission.calibration_sentence, "transmission");
    }

    if (!doc.contains("scenarios") || !doc["scenarios"].is_array() || doc["scenarios"].empty()) {
        throw ConfigError("config: 'scenarios' must be a non-empty array");
    }
    for (std::size_t i = 0; i < doc["scenarios"].size(); ++i) {
        const auto &s = doc["scenarios"][i];
        const std::string w = "scenarios[" + std::to_string(i) + "]";
        check_keys(s, w, {"label", "sentence", "initial_prevalence", "duration_months", "replicates",
                          "eligibility_min_age", "contagion", "spontaneous_rate", "allow_mixed_drivers"});
        ScenarioConfig sc;
        read(s, "label", sc.label, w);
        if (sc.label.empty() || sc.label.find_first_not_of("ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz"
                                                           "0123456789_-.") != std::string::npos ||
            sc.label.front() == '.') {
            throw ConfigError(w + ": label must be non-empty and use only letters, digits, '_', '-' and '.'");
        }
        if (!s.contains("sentence")) {
            throw ConfigError(w + ": sentence is required");
        }
        const auto &sent = s["sentence"];
        check_keys(sent, w + ".sentence", {"mean", "median", "dispersion", "success_prob", "floor"});
        read(sent, "mean", sc.sentence.mean, w + ".sentence");
        read(sent, "median", sc.sentence.median, w + ".sentence");
        read(sent, "dispersion", sc.sentence.dispersion, w + ".sentence");
        read(sent, "success_prob", sc.sentence.success_prob, w + ".sentence");
        read(sent, "floor", sc.sentence.floor, w + ".sentence");
        const bool fit = sc.sentence.mean && sc.sentence.median;
        const bool explicit_params = sc.sentence.dispersion && sc.sentence.success_prob;
        if (fit == explicit_params || (fit && (sc.sentence.dispersion || sc.sentence.success_prob)) ||
            (explicit_params && (sc.sentence.mean || sc.sentence.median))) {
            throw ConfigError(w + ".sentence: give either mean and median, or dispersion and success_prob");
        }
        read(s, "initial_prevalence", sc.initial_prevalence, w);
        read(s, "duration_months", sc.duration_months, w);
        read(s, "replicates", sc.replicates, w);
        read(s, "eligibility_min_age", sc.eligibility_min_age, w);
        read(s, "contagion", sc.contagion, w);
        read(s, "spontaneous_rate", sc.spontaneous_rate, w);
        read(s, "allow_mixed_drivers", sc.allow_mixed_drivers, w);
        for (const auto &other : cfg.scenarios) {
            if (other.label == sc.label) {
                throw ConfigError(w + ": duplicate label '" + sc.label + "'");
            }
        }
        cfg.scenarios.push_back(std::move(sc));
    }

    if (doc.contains("analysis")) {
        const auto &a = doc["analysis"];
        check_keys(a, "analysis", {"recidivism_window", "age_band_edges", "compare", "overlay"});
        read(a, "recidivism_window", cfg.analysis.recidivism_window, "analysis");
        read(a, "age_band_edges", cfg.analysis.age_band_edges, "analysis");
        read(a, "compare", cfg.analysis.compare, "analysis");
        if (a.contains("overlay")) {
            const auto &o = a["overlay"];
            check_keys(o, "analysis.overlay", {"file", "start_year"});
            OverlayConfig oc;
            read_path(o, "file", oc.file, base_dir, "analysis.overlay");
            read(o, "start_year", oc.start_year, "analysis.overlay");
            cfg.analysis.overlay = oc;
        }
    }
    if (!cfg.analysis.compare.empty() && cfg.analysis.compare.size() != 2) {
        throw ConfigError("analysis.compare: expected two scenario labels");
    }
    for (const auto &label : cfg.analysis.compare) {
        if (std::none_of(cfg.scenarios.begin(), cfg.scenarios.end(), [&](const auto &s) { return s.label == label; })) {
            throw ConfigError("analysis.compare: unknown scenario '" + label + "'");
        }
    }
    return cfg;
}

inline RunConfig load_config(const std::filesystem::path &path) {
    std::ifstream in(path);
    if (!in) {
        throw ConfigError("cannot open config " + path.string());
    }
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(in, nullptr, true, true);
    } catch (const nlohmann::json::exception &err) {
        throw ConfigError(path.string() + ": " + err.what());
    }
    return parse_config(doc, path.parent_path().empty() ? std::filesystem::path(".") : path.parent_path());
}

/// Fully resolved config, every default made explicit and every path absolute.
inline nlohmann::ordered_json resolved_config_json(const RunConfig &cfg) {
    using nlohmann::ordered_json;
    const auto abs = [](const std::filesystem::path &p) { return std::filesystem::absolute(p).lexically_normal().string(); };
    const auto &pc = cfg.population;
    ordered_json pop{{"life_table_female", abs(pc.tables.life_table_female)},
                     {"life_table_male", abs(pc.tables.life_table_male)},
                     {"fertility", abs(pc.tables.fertility)},
                     {"friend_counts", abs(pc.tables.friend_counts)},
                     {"fertility_mean", pc.fertility_mean},
                     {"seed_count", pc.generation.seed_count},
                     {"horizon_years", pc.generation.horizon_years},
                     {"burn_in_years", pc.generation.burn_in_years},
                     {"seed", pc.generation.rng_seed},
                     {"seed_birth_year_max", pc.generation.seed_birth_year_max},
                     {"friend_count_is_total", pc.generation.friend_count_is_total},
                     {"regenerate_per_replicate", pc.regenerate_per_replicate}};
    if (pc.file) {
        pop["file"] = abs(*pc.file);
    }
    ordered_json scenarios = ordered_json::array();
    for (const auto &s : cfg.scenarios) {
        ordered_json sent;
        if (s.sentence.is_fit()) {
            sent = {{"mean", *s.sentence.mean}, {"median", *s.sentence.median}};
        } else {
            sent = {{"dispersion", *s.sentence.dispersion}, {"success_prob", *s.sentence.success_prob}};
        }
        sent["floor"] = s.sentence.floor;
        scenarios.push_back({{"label", s.label},
                             {"sentence", sent},
                             {"initial_prevalence", s.initial_prevalence},
                             {"duration_months", s.duration_months},
                             {"replicates", s.replicates},
                             {"eligibility_min_age", s.eligibility_min_age},
                             {"contagion", s.contagion},
                             {"spontaneous_rate", s.spontaneous_rate},
                             {"allow_mixed_drivers", s.allow_mixed_drivers}});
    }
    ordered_json analysis{{"recidivism_window", cfg.analysis.recidivism_window},
                          {"age_band_edges", cfg.analysis.age_band_edges},
                          {"compare", cfg.analysis.compare}};
    if (cfg.analysis.overlay) {
        analysis["overlay"] = {{"file", abs(cfg.analysis.overlay->file)},
                               {"start_year", cfg.analysis.overlay->start_year}};
    }
    return {{"population", pop},
            {"transmission",
             {{"survey_table", abs(cfg.transmission.survey_table)},
              {"calibration_sentence", cfg.transmission.calibration_sentence}}},
            {"scenarios", scenarios},
            {"analysis", analysis},
            {"output_dir", abs(cfg.output_dir)},
            {"master_seed", cfg.master_seed},
            {"workers", cfg.workers}};
}

} // namespace incsim
