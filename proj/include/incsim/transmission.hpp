#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>

#include "csv.hpp"
#include "error.hpp"
#include "rng.hpp"
#include "sentencing.hpp"
#include "types.hpp"

namespace incsim {

/// Row of the survey and transmission tables: the susceptible's relation to the inmate.
enum class Role : std::uint8_t { mother, father, sister, brother, spouse, adult_child };

inline constexpr std::array kRoles{Role::mother, Role::father, Role::sister,
                                   Role::brother, Role::spouse, Role::adult_child};
inline constexpr std::array kSexes{Sex::female, Sex::male};

inline constexpr std::string_view to_string(Role role) noexcept {
    constexpr std::array<std::string_view, 6> names{"mother", "father", "sister", "brother", "spouse", "adult_child"};
    return names[static_cast<std::size_t>(role)];
}

inline std::optional<Role> role_from_string(std::string_view text) {
    for (auto role : kRoles) {
        if (to_string(role) == text) {
            return role;
        }
    }
    return std::nullopt;
}

/// Probabilities keyed by (role, inmate sex); columns are women then men.
class RoleTable {
  public:
    double at(Role role, Sex inmate) const {
        return cells_[static_cast<std::size_t>(role)][static_cast<std::size_t>(inmate)];
    }
    void set(Role role, Sex inmate, double value) {
        if (!(value >= 0.0 && value <= 1.0)) {
            throw ConfigError(std::string(to_string(role)) + ": probability outside [0,1]");
        }
        cells_[static_cast<std::size_t>(role)][static_cast<std::size_t>(inmate)] = value;
    }

  private:
    std::array<std::array<double, 2>, 6> cells_{};
};

/// Whole-sentence probabilities that an inmate's relation is also incarcerated.
struct SurveyTable : RoleTable {};

inline constexpr int kCalibrationSentence = 14;

inline double derive_monthly_prob(double p_sentence, int sentence_months) {
    if (!(p_sentence >= 0.0 && p_sentence < 1.0)) {
        throw DomainError("whole-sentence probability must lie in [0, 1)");
    }
    if (sentence_months < 1) {
        throw DomainError("sentence must be at least one month");
    }
    return 1.0 - std::pow(1.0 - p_sentence, 1.0 / sentence_months);
}

/// Probability of at least one transmission over s monthly attempts.
inline double prob_over_sentence(double p_monthly, int sentence_months) {
    return 1.0 - std::pow(1.0 - p_monthly, sentence_months);
}

/// Monthly per-edge probabilities, derived from a survey table at a calibration sentence.
struct TransmissionTable : RoleTable {
    int calibration_sentence = kCalibrationSentence;

    static TransmissionTable from_survey(const SurveyTable &survey, int sentence_months = kCalibrationSentence) {
        TransmissionTable table;
        table.calibration_sentence = sentence_months;
        for (auto role : kRoles) {
            for (auto sex : kSexes) {
                table.set(role, sex, derive_monthly_prob(survey.at(role, sex), sentence_months));
            }
        }
        return table;
    }
};

/// Survey CSV: columns role,women,men with one row per role.
inline SurveyTable read_survey_table(const std::filesystem::path &path) {
    const auto table = csv::read_file(path);
    const auto role_col = table.column("role");
    const auto women_col = table.column("women");
    const auto men_col = table.column("men");
    SurveyTable survey;
    std::array<bool, 6> seen{};
    for (const auto &row : table.rows) {
        const auto role = role_from_string(row.fields[role_col]);
        if (!role) {
            throw InputError(table.where(row) + ": unknown role '" + row.fields[role_col] + "'");
        }
        if (seen[static_cast<std::size_t>(*role)]) {
            throw InputError(table.where(row) + ": duplicate role '" + row.fields[role_col] + "'");
        }
        seen[static_cast<std::size_t>(*role)] = true;
        try {
            survey.set(*role, Sex::female, csv::parse<double>(row.fields[women_col], table.where(row)));
            survey.set(*role, Sex::male, csv::parse<double>(row.fields[men_col], table.where(row)));
        } catch (const ConfigError &err) {
            throw InputError(table.where(row) + ": " + err.what());
        }
    }
    for (auto role : kRoles) {
        if (!seen[static_cast<std::size_t>(role)]) {
            throw InputError(path.string() + ": missing role '" + std::string(to_string(role)) + "'");
        }
    }
    return survey;
}

struct MarginalEstimate {
    double value = 0.0;
    double std_error = 0.0;
};

inline constexpr int kMinMarginalSamples = 10'000;

/// Monte Carlo estimate of the sentence-averaged transmission probability.
inline MarginalEstimate marginal_transmission_prob(double p_monthly, const SentenceSampler &sampler, int n_samples,
                                                   CounterRng &rng) {
    if (n_samples < kMinMarginalSamples) {
        throw ConfigError("marginal estimate needs at least 10^4 samples");
    }
    double sum = 0.0;
    double sum_sq = 0.0;
    for (int i = 0; i < n_samples; ++i) {
        const double v = prob_over_sentence(p_monthly, sampler(rng));
        sum += v;
        sum_sq += v * v;
    }
    const double n = n_samples;
    const double mean = sum / n;
    const double var = std::max(0.0, (sum_sq - n * mean * mean) / (n - 1.0));
    return {mean, std::sqrt(var / n)};
}

/// Exact sum over the floored pmf truncated at kSentenceSupport.
inline double marginal_transmission_exact(double p_monthly, const SentenceDistribution &dist) {
    const auto pmf = sentence_pmf_table(dist);
    double total = 0.0;
    for (std::size_t s = 0; s < pmf.size(); ++s) {
        total += pmf[s] * prob_over_sentence(p_monthly, static_cast<int>(s));
    }
    return total;
}

/// How the susceptible endpoint is related to the inmate.
enum class Relation : std::uint8_t { parent, sibling, spouse, child, friend_tie };

inline constexpr int kAdultAgeMonths = 18 * 12;

struct EdgeDirection {
    Relation relation = Relation::friend_tie;
    Sex susceptible_sex = Sex::female;
    int susceptible_age_months = 0;
};

/// Table row for a direction, or none when the direction never transmits (minor child).
inline std::optional<Role> resolve_role(const EdgeDirection &dir) {
    const bool female = dir.susceptible_sex == Sex::female;
    switch (dir.relation) {
    case Relation::parent:
        return female ? Role::mother : Role::father;
    case Relation::sibling:
    case Relation::friend_tie:
        return female ? Role::sister : Role::brother;
    case Relation::spouse:
        return Role::spouse;
    case Relation::child:
        if (dir.susceptible_age_months < kAdultAgeMonths) {
            return std::nullopt;
        }
        return Role::adult_child;
    }
    throw InvariantError("unknown relation in edge direction");
}

inline double lookup_edge_prob(const EdgeDirection &dir, Sex inmate_sex, const TransmissionTable &table) {
    const auto role = resolve_role(dir);
    return role ? table.at(*role, inmate_sex) : 0.0;
}

} // namespace incsim
