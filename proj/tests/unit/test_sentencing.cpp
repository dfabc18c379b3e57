#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "incsim/sentencing.hpp"

using namespace incsim;

namespace {

const SentenceFit &white() {
    static const auto fit = fit_negative_binomial(14, 10, "White");
    return fit;
}

const SentenceFit &black() {
    static const auto fit = fit_negative_binomial(17, 12, "Black");
    return fit;
}

double survival(const SentenceDistribution &d, int s) { return 1.0 - sentence_cdf(d, s); }

} // namespace

TEST(Pmf, FlooredNegativeBinomialOracle) {
    // Reference values from scipy.stats.nbinom(2, 0.3) with mass at 0 moved to 1.
    const SentenceDistribution d{2.0, 0.3, 1, {}};
    EXPECT_EQ(sentence_pmf(d, 0), 0.0);
    EXPECT_NEAR(sentence_pmf(d, 1), 0.09 + 0.126, 1e-12);
    EXPECT_NEAR(sentence_pmf(d, 5), 0.0907578, 1e-10);
    EXPECT_NEAR(sentence_mean(d), 4.756666666666665, 1e-12);
}

TEST(Pmf, FloorCollectsSubFloorMass) {
    const auto &d = white().dist;
    EXPECT_DOUBLE_EQ(sentence_pmf(d, 0), 0.0);
    EXPECT_NEAR(sentence_pmf(d, 1), unfloored_cdf(d, 1), 1e-15);
    SentenceDistribution shifted = d;
    shifted.floor = 3;
    EXPECT_NEAR(sentence_pmf(shifted, 3), unfloored_cdf(d, 3), 1e-15);
    EXPECT_EQ(sentence_pmf(shifted, 2), 0.0);
}

TEST(Pmf, NormalisedOverSupport) {
    for (const auto *fit : {&white(), &black()}) {
        const auto pmf = sentence_pmf_table(fit->dist, 2000);
        double total = 0.0;
        for (int s = 1; s <= 2000; ++s) {
            total += pmf[static_cast<std::size_t>(s)];
        }
        EXPECT_NEAR(total, 1.0, 1e-9);
        EXPECT_LT(1.0 - unfloored_cdf(fit->dist, 2000), 1e-12);
    }
}

TEST(Fit, WhiteTargets) {
    const auto &f = white();
    EXPECT_NEAR(f.achieved_mean, 14.0, 0.25);
    EXPECT_EQ(f.achieved_median, 10);
    EXPECT_EQ(sentence_median(f.dist), 10);
    EXPECT_NEAR(sentence_mean(f.dist), 14.0, 1e-9);
    EXPECT_EQ(f.dist.label, "White");
    EXPECT_EQ(f.dist.floor, 1);
    // Frozen from the reference fit; the scipy oracle confirms mean 14 and median 10 here.
    EXPECT_NEAR(f.dist.dispersion, 1.1416437750166166, 1e-9);
    EXPECT_NEAR(f.dist.success_prob, 0.07565988636335466, 1e-9);
}

TEST(Fit, BlackTargets) {
    const auto &f = black();
    EXPECT_NEAR(f.achieved_mean, 17.0, 0.25);
    EXPECT_EQ(f.achieved_median, 12);
    EXPECT_NEAR(f.dist.dispersion, 1.0927543578358716, 1e-9);
    EXPECT_NEAR(f.dist.success_prob, 0.060553594300767344, 1e-9);
    EXPECT_NEAR(sentence_cdf(f.dist, 11), 0.48538, 1e-4);
    EXPECT_NEAR(sentence_cdf(f.dist, 12), 0.51462, 1e-4);
}

TEST(Fit, Deterministic) {
    const auto again = fit_negative_binomial(14, 10, "White");
    EXPECT_EQ(again.dist.dispersion, white().dist.dispersion);
    EXPECT_EQ(again.dist.success_prob, white().dist.success_prob);
}

TEST(Fit, BoundaryPairNeverSilent) {
    try {
        const auto f = fit_negative_binomial(2, 1);
        EXPECT_EQ(f.achieved_median, 1);
        EXPECT_NEAR(f.achieved_mean, 2.0, 0.25);
    } catch (const FitError &e) {
        EXPECT_NE(std::string(e.what()).find("residuals"), std::string::npos);
    }
}

TEST(Fit, InfeasiblePairReportsResiduals) {
    try {
        // Dispersion is capped, so the median cannot sit this close to a large mean.
        fit_negative_binomial(300.01, 300);
        FAIL() << "expected FitError";
    } catch (const FitError &e) {
        EXPECT_NE(std::string(e.what()).find("residuals"), std::string::npos);
    }
    EXPECT_THROW(fit_negative_binomial(10, 14), FitError);
    EXPECT_THROW(fit_negative_binomial(14, 10.5), FitError);
    EXPECT_THROW(fit_negative_binomial(14, 13.5), FitError);
    EXPECT_THROW(fit_negative_binomial(14, 0), FitError);
}

TEST(Fit, BlackStochasticallyDominatesWhiteInTail) {
    EXPECT_GT(sentence_mean(black().dist), sentence_mean(white().dist));
    for (int s = 14; s <= 500; ++s) {
        ASSERT_GE(survival(black().dist, s), survival(white().dist, s)) << "s=" << s;
    }
}

TEST(Sampler, FloorAndMean) {
    const SentenceSampler sampler(white().dist);
    CounterRng rng(123);
    constexpr int n = 1000000;
    double sum = 0.0;
    for (int i = 0; i < n; ++i) {
        const int s = sampler(rng);
        ASSERT_GE(s, 1);
        sum += s;
    }
    EXPECT_NEAR(sum / n, 14.0, 0.05);
}

TEST(Sampler, EmpiricalMedian) {
    const SentenceSampler sampler(black().dist);
    CounterRng rng(321);
    constexpr int n = 1000000;
    std::vector<int> draws(n);
    for (auto &d : draws) {
        d = sampler(rng);
    }
    std::nth_element(draws.begin(), draws.begin() + n / 2, draws.end());
    EXPECT_EQ(draws[n / 2], 12);
}

TEST(Sampler, FreeFunctionMatchesSampler) {
    CounterRng a(9);
    CounterRng b(9);
    const SentenceSampler sampler(white().dist);
    for (int i = 0; i < 100; ++i) {
        ASSERT_EQ(sample_sentence(white().dist, a), sampler(b));
    }
}

TEST(Distribution, RejectsInvalidParameters) {
    EXPECT_THROW(sentence_mean({0.0, 0.5, 1, {}}), DomainError);
    EXPECT_THROW(sentence_pmf_table({1.0, 1.0, 1, {}}), DomainError);
    EXPECT_THROW(unfloored_cdf({1.0, 0.0, 1, {}}, 3), DomainError);
}
