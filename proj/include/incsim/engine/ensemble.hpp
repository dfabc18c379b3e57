#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstddef>
#include <exception>
#include <functional>
#include <mutex>
#include <optional>
#include <thread>
#include <vector>

#include "../error.hpp"
#include "../rng.hpp"
#include "simulation.hpp"

namespace incsim::engine {

inline unsigned default_worker_count() {
    const unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : hw;
}

/// Runs task(i) for i in [0, n) on up to `workers` threads. The first exception is rethrown.
inline void parallel_for(std::size_t n, unsigned workers, const std::function<void(std::size_t)> &task) {
    workers = std::max(1u, std::min<unsigned>(workers, static_cast<unsigned>(std::max<std::size_t>(n, 1))));
    if (workers == 1) {
        for (std::size_t i = 0; i < n; ++i) {
            task(i);
        }
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (unsigned w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
            for (std::size_t i = next++; i < n; i = next++) {
                try {
                    task(i);
                } catch (...) {
                    const std::lock_guard lock(failure_mutex);
                    if (!failure) {
                        failure = std::current_exception();
                    }
                }
            }
        });
    }
    for (auto &t : pool) {
        t.join();
    }
    if (failure) {
        std::rethrow_exception(failure);
    }
}

inline std::uint64_t replicate_seed(std::uint64_t master_seed, int replicate) {
    return derive_seed(master_seed, static_cast<std::uint64_t>(replicate));
}

/// All replicates of a scenario, in replicate order; independent of the worker count.
inline std::vector<EpidemicTrace> run_ensemble(const World &world, const Scenario &scenario,
                                               unsigned workers = default_worker_count(),
                                               const std::string &fingerprint = {}) {
    const Simulation sim(world, scenario);
    std::vector<EpidemicTrace> traces(static_cast<std::size_t>(scenario.n_replicates));
    parallel_for(traces.size(), workers, [&](std::size_t i) {
        traces[i] = sim.run_replicate(replicate_seed(scenario.master_seed, static_cast<int>(i)));
        traces[i].fingerprint = fingerprint;
    });
    return traces;
}

/// Ensemble where replicate i runs on a freshly generated population; the callback receives
/// the replicate index and its seed.
inline std::vector<EpidemicTrace>
run_ensemble_regenerating(const std::function<EpidemicTrace(int, std::uint64_t)> &run_on_fresh_population,
                          const Scenario &scenario, unsigned workers = default_worker_count()) {
    scenario.validate();
    std::vector<EpidemicTrace> traces(static_cast<std::size_t>(scenario.n_replicates));
    parallel_for(traces.size(), workers, [&](std::size_t i) {
        const auto r = static_cast<int>(i);
        traces[i] = run_on_fresh_population(r, replicate_seed(scenario.master_seed, r));
    });
    return traces;
}

inline double mean_end_prevalence(const std::vector<EpidemicTrace> &traces) {
    if (traces.empty()) {
        return 0.0;
    }
    double total = 0.0;
    for (const auto &t : traces) {
        total += t.prevalence(t.duration());
    }
    return total / static_cast<double>(traces.size());
}

struct CalibrationOptions {
    int replicates = 50;
    /// Accept when the ensemble end prevalence is within this of the target.
    double tolerance = 0.001;
    double lower = 0.0;
    double upper = 0.05;
    int max_iterations = 40;
    unsigned workers = default_worker_count();
};

struct CalibrationResult {
    double rate = 0.0;
    double achieved = 0.0;
    int evaluations = 0;
};

/// Bisection on the spontaneous monthly probability so that the contagion-free ensemble's
/// mean end prevalence hits `target`. Replicate seeds are shared across evaluations.
inline CalibrationResult calibrate_spontaneous_rate(const World &world, Scenario scenario, double target,
                                                    const CalibrationOptions &opts = {}) {
    if (scenario.contagion_enabled) {
        throw ConfigError(scenario.label + ": calibration requires contagion disabled");
    }
    if (!(target >= 0.0 && target < 1.0)) {
        throw ConfigError("target prevalence must lie in [0, 1)");
    }
    scenario.n_replicates = opts.replicates;
    CalibrationResult result;
    const auto evaluate = [&](double rate) {
        scenario.spontaneous_monthly_prob = rate;
        ++result.evaluations;
        return mean_end_prevalence(run_ensemble(world, scenario, opts.workers));
    };
    if (target == 0.0) {
        result.rate = 0.0;
        result.achieved = evaluate(0.0);
        return result;
    }
    double lo = opts.lower;
    double hi = opts.upper;
    const double f_lo = evaluate(lo);
    const double f_hi = evaluate(hi);
    if (target < f_lo - opts.tolerance || target > f_hi + opts.tolerance) {
        throw CalibrationError("target " + csv::format(target) + " outside bracket [" + csv::format(lo) + ", " +
                               csv::format(hi) + "] with end prevalence [" + csv::format(f_lo) + ", " +
                               csv::format(f_hi) + "]");
    }
    if (std::abs(f_lo - target) <= opts.tolerance) {
        return {lo, f_lo, result.evaluations};
    }
    if (std::abs(f_hi - target) <= opts.tolerance) {
        return {hi, f_hi, result.evaluations};
    }
    for (int iter = 0; iter < opts.max_iterations; ++iter) {
        const double mid = 0.5 * (lo + hi);
        const double f_mid = evaluate(mid);
        result.rate = mid;
        result.achieved = f_mid;
        if (std::abs(f_mid - target) <= opts.tolerance) {
            return result;
        }
        (f_mid < target ? lo : hi) = mid;
    }
    throw CalibrationError("bisection did not reach tolerance; last rate " + csv::format(result.rate) +
                           " gave " + csv::format(result.achieved));
}

} // namespace incsim::engine
