#pragma once

#include <span>

#include "engine/simulation.hpp"
#include "error.hpp"

namespace incsim::ode {

struct OdeParams {
    /// Mean transmissions per infected person per month.
    double p = 0.0;
    /// Mean infectious duration in months.
    double s = 0.0;
};

/// Mean-field SIS equilibrium without vital dynamics: 0 at or below threshold, 1 - 1/(ps) above.
inline double steady_state_prevalence(double p, double s) {
    if (!(p >= 0.0) || !(s >= 0.0)) {
        throw DomainError("p and s must be non-negative");
    }
    const double ps = p * s;
    return ps <= 1.0 ? 0.0 : 1.0 - 1.0 / ps;
}

inline double steady_state_prevalence(const OdeParams &params) { return steady_state_prevalence(params.p, params.s); }

inline double critical_sentence(double p) {
    if (!(p > 0.0)) {
        throw DomainError("no finite critical sentence for p <= 0");
    }
    return 1.0 / p;
}

struct RateEstimate {
    long long transmissions = 0;
    long long person_months = 0;
    double p = 0.0;
};

/// Pooled edge-sourced infections per incarcerated person-month. Person-months are the sum
/// of recorded incarcerated counts over every month of every trace.
inline RateEstimate calibrate_mean_rate(std::span<const engine::EpidemicTrace> traces) {
    RateEstimate est;
    for (const auto &t : traces) {
        for (const auto &e : t.events) {
            est.transmissions += e.kind == engine::EventKind::transmission;
        }
        for (const auto &c : t.counts) {
            est.person_months += c.incarcerated;
        }
    }
    if (est.person_months == 0) {
        throw DomainError("no incarcerated person-months; transmission rate undefined");
    }
    est.p = static_cast<double>(est.transmissions) / static_cast<double>(est.person_months);
    return est;
}

} // namespace incsim::ode
