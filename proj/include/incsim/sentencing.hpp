#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <string>
#include <tuple>
#include <vector>

#include "csv.hpp"
#include "error.hpp"
#include "rng.hpp"

namespace incsim {

/// Support used for normalisation, exact sums and the sampler's inverse CDF.
inline constexpr int kSentenceSupport = 2000;

/// Negative binomial over months served, P(X = k) = C(k + r - 1, k) p^r (1 - p)^k,
/// with every draw below `floor` mapped to `floor`.
struct SentenceDistribution {
    double dispersion = 1.0;
    double success_prob = 0.5;
    int floor = 1;
    std::string label;
};

namespace detail {

/// Unfloored pmf over 0..support by the ratio recurrence.
inline std::vector<double> nb_pmf(double r, double p, int support) {
    std::vector<double> pmf(static_cast<std::size_t>(support) + 1);
    double value = std::exp(r * std::log(p));
    pmf[0] = value;
    for (int k = 1; k <= support; ++k) {
        value *= (static_cast<double>(k - 1) + r) / static_cast<double>(k) * (1.0 - p);
        pmf[static_cast<std::size_t>(k)] = value;
    }
    return pmf;
}

inline void check(const SentenceDistribution &dist) {
    if (!(dist.dispersion > 0.0) || !(dist.success_prob > 0.0 && dist.success_prob < 1.0) || dist.floor < 0) {
        throw DomainError("invalid sentence distribution parameters");
    }
}

} // namespace detail

/// Unfloored P(X <= s).
inline double unfloored_cdf(const SentenceDistribution &dist, int s) {
    detail::check(dist);
    if (s < 0) {
        return 0.0;
    }
    const auto pmf = detail::nb_pmf(dist.dispersion, dist.success_prob, s);
    double total = 0.0;
    for (double v : pmf) {
        total += v;
    }
    return total;
}

/// Floored pmf over 0..support.
inline std::vector<double> sentence_pmf_table(const SentenceDistribution &dist, int support = kSentenceSupport) {
    detail::check(dist);
    if (support < 0) {
        throw DomainError("pmf support must be non-negative");
    }
    auto pmf = detail::nb_pmf(dist.dispersion, dist.success_prob, support);
    const auto floor = std::min(static_cast<std::size_t>(dist.floor), pmf.size() - 1);
    for (std::size_t k = 0; k < floor; ++k) {
        pmf[floor] += pmf[k];
        pmf[k] = 0.0;
    }
    return pmf;
}

inline double sentence_pmf(const SentenceDistribution &dist, int s) {
    if (s < dist.floor || s < 0) {
        return 0.0;
    }
    return sentence_pmf_table(dist, s)[static_cast<std::size_t>(s)];
}

inline double sentence_cdf(const SentenceDistribution &dist, int s) {
    return s < dist.floor ? 0.0 : unfloored_cdf(dist, s);
}

/// Analytic mean of the floored distribution: E[X] + sum_{k < floor} (floor - k) P(X = k).
inline double sentence_mean(const SentenceDistribution &dist) {
    detail::check(dist);
    const double r = dist.dispersion;
    const double p = dist.success_prob;
    double mean = r * (1.0 - p) / p;
    if (dist.floor > 0) {
        const auto pmf = detail::nb_pmf(r, p, dist.floor);
        for (int k = 0; k < dist.floor; ++k) {
            mean += static_cast<double>(dist.floor - k) * pmf[static_cast<std::size_t>(k)];
        }
    }
    return mean;
}

/// Smallest s with CDF(s) >= 1/2.
inline int sentence_median(const SentenceDistribution &dist) {
    const auto pmf = sentence_pmf_table(dist);
    double cdf = 0.0;
    for (std::size_t s = 0; s < pmf.size(); ++s) {
        cdf += pmf[s];
        if (cdf >= 0.5) {
            return static_cast<int>(s);
        }
    }
    return kSentenceSupport;
}

struct SentenceFit {
    SentenceDistribution dist;
    double achieved_mean = 0.0;
    int achieved_median = 0;
    double mean_residual = 0.0;
    int median_residual = 0;
    /// |(CDF(median - 1) + CDF(median)) / 2 - 1/2|: how centrally the median step straddles 1/2.
    double median_centring = 0.0;
};

inline constexpr double kSentenceMeanTolerance = 0.25;

namespace detail {

/// success_prob giving the floored mean `target` at dispersion r (mean is decreasing in p).
inline double success_prob_for_mean(double r, double target, int floor) {
    double lo = 1e-9;
    double hi = 1.0 - 1e-12;
    for (int iter = 0; iter < 200; ++iter) {
        const double mid = 0.5 * (lo + hi);
        if (sentence_mean({r, mid, floor, {}}) > target) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    return 0.5 * (lo + hi);
}

inline SentenceFit evaluate_candidate(double r, double target_mean, int target_median, int floor) {
    SentenceFit fit;
    fit.dist = {r, success_prob_for_mean(r, target_mean, floor), floor, {}};
    fit.achieved_mean = sentence_mean(fit.dist);
    fit.mean_residual = fit.achieved_mean - target_mean;
    const auto pmf = sentence_pmf_table(fit.dist);
    double cdf = 0.0;
    double below = 0.0;
    fit.achieved_median = kSentenceSupport;
    for (std::size_t s = 0; s < pmf.size(); ++s) {
        below = cdf;
        cdf += pmf[s];
        if (cdf >= 0.5) {
            fit.achieved_median = static_cast<int>(s);
            break;
        }
    }
    fit.median_residual = fit.achieved_median - target_median;
    fit.median_centring = std::abs(0.5 * (below + cdf) - 0.5);
    return fit;
}

/// Lexicographic: median error, mean error (to 1e-6), then median centring.
inline auto fit_rank(const SentenceFit &fit) {
    return std::make_tuple(std::abs(fit.median_residual), std::llround(std::abs(fit.mean_residual) * 1e6),
                           fit.median_centring);
}

} // namespace detail

/// Fits a floored negative binomial to a (mean, median) pair. For each dispersion on a
/// log-spaced grid the success probability is solved to match the mean exactly; the grid
/// is refined around the best candidate. Throws FitError with the best residuals when the
/// median cannot be hit exactly or the mean misses by more than kSentenceMeanTolerance.
inline SentenceFit fit_negative_binomial(double target_mean, double target_median, std::string label = {},
                                         int floor = 1) {
    if (!(target_median >= floor) || !(target_mean > target_median)) {
        throw FitError("targets must satisfy mean > median >= " + std::to_string(floor));
    }
    if (std::floor(target_median) != target_median) {
        throw FitError("median target must be a whole number of months");
    }
    const int median = static_cast<int>(target_median);

    double log_lo = std::log(0.02);
    double log_hi = std::log(200.0);
    constexpr int kGrid = 120;
    SentenceFit best;
    bool have_best = false;
    double best_log_r = 0.0;
    for (int pass = 0; pass < 5; ++pass) {
        const double step = (log_hi - log_lo) / kGrid;
        for (int i = 0; i <= kGrid; ++i) {
            const double log_r = log_lo + step * i;
            const auto candidate = detail::evaluate_candidate(std::exp(log_r), target_mean, median, floor);
            if (!have_best || detail::fit_rank(candidate) < detail::fit_rank(best)) {
                best = candidate;
                best_log_r = log_r;
                have_best = true;
            }
        }
        log_lo = best_log_r - 2.0 * step;
        log_hi = best_log_r + 2.0 * step;
    }
    best.dist.label = std::move(label);
    if (best.median_residual != 0 || std::abs(best.mean_residual) > kSentenceMeanTolerance) {
        throw FitError("no negative binomial matches mean " + csv::format(target_mean) + " and median " +
                       std::to_string(median) + "; best residuals: mean " + csv::format(best.mean_residual) +
                       ", median " + std::to_string(best.median_residual));
    }
    return best;
}

/// Inverse-CDF sampler over the floored distribution.
class SentenceSampler {
  public:
    explicit SentenceSampler(const SentenceDistribution &dist) : dist_(dist) {
        const auto pmf = sentence_pmf_table(dist);
        cdf_.resize(pmf.size());
        double total = 0.0;
        for (std::size_t s = 0; s < pmf.size(); ++s) {
            total += pmf[s];
            cdf_[s] = total;
        }
    }

    int operator()(CounterRng &rng) const {
        const double u = rng.uniform() * cdf_.back();
        const auto it = std::upper_bound(cdf_.begin(), cdf_.end(), u);
        const auto s = static_cast<int>(it - cdf_.begin());
        return std::max(std::min(s, kSentenceSupport), dist_.floor);
    }

    const SentenceDistribution &distribution() const noexcept { return dist_; }

  private:
    SentenceDistribution dist_;
    std::vector<double> cdf_;
};

inline int sample_sentence(const SentenceDistribution &dist, CounterRng &rng) { return SentenceSampler(dist)(rng); }

} // namespace incsim
