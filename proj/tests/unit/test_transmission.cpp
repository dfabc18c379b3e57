#include <gtest/gtest.h>

#include <cmath>
#include <fstream>

#include "incsim/sentencing.hpp"
#include "support.hpp"

using namespace incsim;

namespace {

struct Cell {
    Role role;
    double women;
    double men;
};

// Derived monthly probabilities as printed (3 decimals).
const Cell kPublishedMonthly[] = {
    {Role::mother, 0.001, 0.003}, {Role::father, 0.011, 0.011},  {Role::sister, 0.008, 0.004},
    {Role::brother, 0.033, 0.030}, {Role::spouse, 0.004, 0.001}, {Role::adult_child, 0.017, 0.006},
};

struct MarginalCell {
    Role role;
    double white_women, white_men, black_women, black_men;
};

const MarginalCell kPublishedMarginals[] = {
    {Role::mother, 0.012, 0.046, 0.014, 0.056},      {Role::father, 0.138, 0.138, 0.163, 0.163},
    {Role::sister, 0.101, 0.058, 0.121, 0.069},      {Role::brother, 0.324, 0.303, 0.370, 0.347},
    {Role::spouse, 0.057, 0.011, 0.069, 0.013},      {Role::adult_child, 0.194, 0.082, 0.227, 0.098},
};

const SentenceDistribution &white() {
    static const auto d = fit_negative_binomial(14, 10, "White").dist;
    return d;
}

const SentenceDistribution &black() {
    static const auto d = fit_negative_binomial(17, 12, "Black").dist;
    return d;
}

SurveyTable survey() { return read_survey_table(testing_support::data_dir() / "survey_table.csv"); }

double round3(double v) { return std::round(v * 1000.0) / 1000.0; }

} // namespace

TEST(Monthly, BrotherWomenExample) {
    EXPECT_NEAR(derive_monthly_prob(0.377, 14), 0.0332, 5e-5);
    EXPECT_DOUBLE_EQ(round3(derive_monthly_prob(0.377, 14)), 0.033);
}

TEST(Monthly, TrivialCases) {
    for (int s : {1, 5, 14, 100}) {
        EXPECT_EQ(derive_monthly_prob(0.0, s), 0.0);
    }
    EXPECT_NEAR(derive_monthly_prob(0.42, 1), 0.42, 1e-15);
    EXPECT_THROW(derive_monthly_prob(1.0, 14), DomainError);
    EXPECT_THROW(derive_monthly_prob(0.1, 0), DomainError);
    EXPECT_THROW(derive_monthly_prob(-0.1, 3), DomainError);
}

TEST(OverSentence, Examples) {
    EXPECT_NEAR(prob_over_sentence(0.1, 1), 0.1, 1e-15);
    EXPECT_NEAR(prob_over_sentence(0.1, 24), 1.0 - std::pow(0.9, 24), 1e-15);
    EXPECT_NEAR(prob_over_sentence(0.1, 24), 0.920, 5e-4);
    EXPECT_NEAR(prob_over_sentence(derive_monthly_prob(0.377, 14), 14), 0.377, 1e-12);
    EXPECT_EQ(prob_over_sentence(0.3, 0), 0.0);
}

TEST(OverSentence, StrictlyIncreasingInSentence) {
    for (double p : {1e-4, 0.01, 0.2, 0.9}) {
        for (int s = 0; s < 300; ++s) {
            const double lo = prob_over_sentence(p, s);
            const double hi = prob_over_sentence(p, s + 1);
            ASSERT_LE(lo, hi) << p << " " << s;
            if (hi < 1.0 - 1e-12) {
                ASSERT_LT(lo, hi) << p << " " << s;
            }
        }
    }
}

TEST(Survey, RoundTripEveryCell) {
    const auto sv = survey();
    for (auto role : kRoles) {
        for (auto sex : kSexes) {
            const double v = sv.at(role, sex);
            EXPECT_NEAR(prob_over_sentence(derive_monthly_prob(v, 14), 14), v, 1e-12);
        }
    }
}

TEST(Survey, MatchesPublishedSurveyColumns) {
    const auto sv = survey();
    EXPECT_DOUBLE_EQ(sv.at(Role::mother, Sex::female), 0.012);
    EXPECT_DOUBLE_EQ(sv.at(Role::brother, Sex::male), 0.349);
    EXPECT_DOUBLE_EQ(sv.at(Role::adult_child, Sex::female), 0.213);
    EXPECT_DOUBLE_EQ(sv.at(Role::spouse, Sex::male), 0.011);
}

TEST(Survey, ReproducesPublishedMonthlyTable) {
    const auto table = TransmissionTable::from_survey(survey(), 14);
    EXPECT_EQ(table.calibration_sentence, 14);
    std::vector<std::string> mismatched;
    for (const auto &c : kPublishedMonthly) {
        if (round3(table.at(c.role, Sex::female)) != c.women) {
            mismatched.push_back(std::string(to_string(c.role)) + "/women");
        }
        if (round3(table.at(c.role, Sex::male)) != c.men) {
            mismatched.push_back(std::string(to_string(c.role)) + "/men");
        }
    }
    // 1 - (1 - 0.048)^(1/14) = 0.003507 rounds up; the published cell reads 0.003.
    EXPECT_EQ(mismatched, std::vector<std::string>{"mother/men"});
    EXPECT_NEAR(table.at(Role::mother, Sex::male), 0.0035074234404, 1e-12);
}

TEST(Survey, RejectsMalformedFiles) {
    const auto dir = testing_support::temp_dir("survey");
    {
        std::ofstream(dir / "unknown.csv") << "role,women,men\nmother,0.1,0.1\ncousin,0.1,0.1\n";
        std::ofstream(dir / "missing.csv") << "role,women,men\nmother,0.1,0.1\n";
        std::ofstream(dir / "range.csv") << "role,women,men\nmother,1.2,0.1\n";
    }
    EXPECT_THROW(read_survey_table(dir / "unknown.csv"), InputError);
    EXPECT_THROW(read_survey_table(dir / "missing.csv"), InputError);
    EXPECT_THROW(read_survey_table(dir / "range.csv"), InputError);
    EXPECT_THROW(read_survey_table(dir / "absent.csv"), InputError);
}

TEST(Marginal, ExactOracleValues) {
    // Frozen from an independent scipy summation over the floored pmf.
    const auto &t = testing_support::transmission();
    EXPECT_NEAR(marginal_transmission_exact(t.at(Role::mother, Sex::female), black()), 0.014451547852410335, 1e-9);
    EXPECT_NEAR(marginal_transmission_exact(t.at(Role::brother, Sex::male), black()), 0.3442636583145815, 1e-9);
    EXPECT_NEAR(marginal_transmission_exact(t.at(Role::mother, Sex::female), white()), 0.011933290634140743, 1e-9);
    EXPECT_NEAR(marginal_transmission_exact(t.at(Role::brother, Sex::male), white()), 0.30284786321636975, 1e-9);
}

TEST(Marginal, BrotherMenNearPublished) {
    const auto &t = testing_support::transmission();
    const double p = t.at(Role::brother, Sex::male);
    CounterRng rng(17);
    EXPECT_NEAR(marginal_transmission_prob(p, SentenceSampler(white()), 100000, rng).value, 0.303, 0.01);
    EXPECT_NEAR(marginal_transmission_prob(p, SentenceSampler(black()), 100000, rng).value, 0.347, 0.01);
}

TEST(Marginal, ZeroMonthlyGivesZero) {
    CounterRng rng(1);
    EXPECT_EQ(marginal_transmission_prob(0.0, SentenceSampler(black()), 10000, rng).value, 0.0);
    EXPECT_EQ(marginal_transmission_exact(0.0, white()), 0.0);
}

TEST(Marginal, RejectsTooFewSamples) {
    CounterRng rng(1);
    EXPECT_THROW(marginal_transmission_prob(0.01, SentenceSampler(black()), 9999, rng), ConfigError);
}

TEST(Marginal, BlackExceedsWhiteEverywhere) {
    const auto &t = testing_support::transmission();
    for (auto role : kRoles) {
        for (auto sex : kSexes) {
            const double p = t.at(role, sex);
            EXPECT_GT(marginal_transmission_exact(p, black()), marginal_transmission_exact(p, white()))
                << to_string(role) << "/" << to_string(sex);
        }
    }
}

TEST(Marginal, MonteCarloAgreesWithExactWithinThreeSe) {
    const auto &t = testing_support::transmission();
    CounterRng rng(2718);
    for (const auto *dist : {&white(), &black()}) {
        const SentenceSampler sampler(*dist);
        for (auto role : kRoles) {
            for (auto sex : kSexes) {
                const double p = t.at(role, sex);
                const auto est = marginal_transmission_prob(p, sampler, 100000, rng);
                EXPECT_LE(std::abs(est.value - marginal_transmission_exact(p, *dist)), 3.0 * est.std_error + 1e-12)
                    << dist->label << " " << to_string(role) << "/" << to_string(sex);
            }
        }
    }
}

TEST(Marginal, ExactWithinHalfPointOfPublished) {
    const auto &t = testing_support::transmission();
    for (const auto &c : kPublishedMarginals) {
        EXPECT_NEAR(marginal_transmission_exact(t.at(c.role, Sex::female), white()), c.white_women, 0.005);
        EXPECT_NEAR(marginal_transmission_exact(t.at(c.role, Sex::male), white()), c.white_men, 0.005);
        EXPECT_NEAR(marginal_transmission_exact(t.at(c.role, Sex::female), black()), c.black_women, 0.005);
        EXPECT_NEAR(marginal_transmission_exact(t.at(c.role, Sex::male), black()), c.black_men, 0.005);
    }
}

TEST(Roles, FriendsResolveBySusceptibleSex) {
    EXPECT_EQ(resolve_role({Relation::friend_tie, Sex::female, 400}), Role::sister);
    EXPECT_EQ(resolve_role({Relation::friend_tie, Sex::male, 400}), Role::brother);
    EXPECT_EQ(resolve_role({Relation::sibling, Sex::male, 400}), Role::brother);
    EXPECT_EQ(resolve_role({Relation::parent, Sex::female, 600}), Role::mother);
    EXPECT_EQ(resolve_role({Relation::parent, Sex::male, 600}), Role::father);
    EXPECT_EQ(resolve_role({Relation::spouse, Sex::male, 600}), Role::spouse);
    EXPECT_EQ(resolve_role({Relation::child, Sex::male, 18 * 12}), Role::adult_child);
    EXPECT_FALSE(resolve_role({Relation::child, Sex::male, 18 * 12 - 1}).has_value());
}

TEST(Roles, PublishedLookups) {
    const auto &t = testing_support::transmission();
    // Female inmate, her brother.
    EXPECT_DOUBLE_EQ(round3(lookup_edge_prob({Relation::sibling, Sex::male, 300}, Sex::female, t)), 0.033);
    // Male inmate, male friend.
    EXPECT_DOUBLE_EQ(round3(lookup_edge_prob({Relation::friend_tie, Sex::male, 300}, Sex::male, t)), 0.030);
    EXPECT_EQ(lookup_edge_prob({Relation::friend_tie, Sex::male, 300}, Sex::male, t), t.at(Role::brother, Sex::male));
    // Female inmate, her 10-year-old child.
    EXPECT_EQ(lookup_edge_prob({Relation::child, Sex::female, 120}, Sex::female, t), 0.0);
}
