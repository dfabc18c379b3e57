#pragma once

#include <cmath>
#include <filesystem>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "../csv.hpp"
#include "../error.hpp"

namespace incsim::popgen {

inline constexpr int kLifeTableAges = 120;

struct DemographicTables {
    /// Probability of death within the year at each age 0..119.
    std::vector<double> life_table_female;
    std::vector<double> life_table_male;
    /// Index = number of children.
    std::vector<double> fertility_dist;
    /// Index = number of friends chosen at age 10.
    std::vector<double> friend_count_dist;
    double age_first_birth_offset_mean = 10.6;
    double child_gap_mean = 4.5;
    int partner_age_gap_min = 0;
    int partner_age_gap_max = 9;

    void validate() const;
};

inline double distribution_mean(std::span<const double> dist) {
    double mean = 0.0;
    for (std::size_t k = 0; k < dist.size(); ++k) {
        mean += static_cast<double>(k) * dist[k];
    }
    return mean;
}

namespace detail {

inline void check_probability_map(std::span<const double> dist, const std::string &name) {
    if (dist.empty()) {
        throw ConfigError(name + " is empty");
    }
    for (double p : dist) {
        if (!(p >= 0.0 && p <= 1.0)) {
            throw ConfigError(name + " has a probability outside [0,1]");
        }
    }
    const double total = std::accumulate(dist.begin(), dist.end(), 0.0);
    if (std::abs(total - 1.0) > 1e-9) {
        throw ConfigError(name + " sums to " + csv::format(total) + ", expected 1");
    }
}

inline void check_life_table(std::span<const double> table, const std::string &name) {
    if (table.size() != static_cast<std::size_t>(kLifeTableAges)) {
        throw ConfigError(name + " must cover ages 0-119, has " + std::to_string(table.size()) +
                          " rows");
    }
    for (double q : table) {
        if (!(q >= 0.0 && q <= 1.0)) {
            throw ConfigError(name + " has a death probability outside [0,1]");
        }
    }
}

} // namespace detail

inline void DemographicTables::validate() const {
    detail::check_life_table(life_table_female, "life_table_female");
    detail::check_life_table(life_table_male, "life_table_male");
    detail::check_probability_map(fertility_dist, "fertility_dist");
    detail::check_probability_map(friend_count_dist, "friend_count_dist");
    if (!(age_first_birth_offset_mean >= 0.0) || !(child_gap_mean >= 0.0)) {
        throw ConfigError("Poisson means must be non-negative");
    }
    if (partner_age_gap_min > partner_age_gap_max) {
        throw ConfigError("partner age gap range is empty");
    }
}

/// Exponentially tilts `dist` (p_k ∝ p_k θ^k) so that its mean equals `target`.
/// Keeps the support and the ordering of odds between neighbouring counts.
inline std::vector<double> tilt_to_mean(std::span<const double> dist, double target) {
    detail::check_probability_map(dist, "distribution");
    const auto tilted = [&](double log_theta) {
        std::vector<double> out(dist.size());
        double total = 0.0;
        for (std::size_t k = 0; k < dist.size(); ++k) {
            out[k] = dist[k] * std::exp(log_theta * static_cast<double>(k));
            total += out[k];
        }
        for (double &p : out) {
            p /= total;
        }
        return out;
    };
    std::size_t lo_k = dist.size();
    std::size_t hi_k = 0;
    for (std::size_t k = 0; k < dist.size(); ++k) {
        if (dist[k] > 0.0) {
            lo_k = std::min(lo_k, k);
            hi_k = std::max(hi_k, k);
        }
    }
    if (!(target > static_cast<double>(lo_k) && target < static_cast<double>(hi_k))) {
        if (std::abs(distribution_mean(dist) - target) < 1e-12) {
            return {dist.begin(), dist.end()};
        }
        throw ConfigError("target mean " + csv::format(target) + " outside the support of the distribution");
    }
    double lo = -50.0;
    double hi = 50.0;
    for (int iter = 0; iter < 200; ++iter) {
        const double mid = 0.5 * (lo + hi);
        if (distribution_mean(tilted(mid)) < target) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    return tilted(0.5 * (lo + hi));
}

/// Reads a two-column (key, probability) CSV whose keys must be 0..n-1 in order.
inline std::vector<double> read_indexed_table(const std::filesystem::path &path,
                                              const std::string &key_column,
                                              const std::string &value_column) {
    const auto table = csv::read_file(path);
    const auto key_col = table.column(key_column);
    const auto value_col = table.column(value_column);
    std::vector<double> out;
    for (const auto &row : table.rows) {
        const auto key = csv::parse<int>(row.fields[key_col], table.where(row));
        if (key != static_cast<int>(out.size())) {
            throw InputError(table.where(row) + ": expected " + key_column + " " +
                             std::to_string(out.size()) + ", found " + std::to_string(key));
        }
        out.push_back(csv::parse<double>(row.fields[value_col], table.where(row)));
    }
    if (out.empty()) {
        throw ConfigError(path.string() + ": table has no rows");
    }
    return out;
}

struct TablePaths {
    std::filesystem::path life_table_female;
    std::filesystem::path life_table_male;
    std::filesystem::path fertility;
    std::filesystem::path friend_counts;

    static TablePaths in_directory(const std::filesystem::path &dir) {
        return {dir / "life_table_female.csv", dir / "life_table_male.csv", dir / "fertility.csv",
                dir / "friend_counts.csv"};
    }
};

/// Loads the four CSV tables; the fertility distribution is tilted to `fertility_target_mean`.
inline DemographicTables load_demographic_tables(const TablePaths &paths,
                                                 double fertility_target_mean = 2.07) {
    DemographicTables tables;
    tables.life_table_female = read_indexed_table(paths.life_table_female, "age", "death_prob");
    tables.life_table_male = read_indexed_table(paths.life_table_male, "age", "death_prob");
    const auto raw_fertility = read_indexed_table(paths.fertility, "children", "probability");
    detail::check_probability_map(raw_fertility, paths.fertility.string());
    tables.fertility_dist = tilt_to_mean(raw_fertility, fertility_target_mean);
    tables.friend_count_dist = read_indexed_table(paths.friend_counts, "friends", "probability");
    tables.validate();
    return tables;
}

} // namespace incsim::popgen
