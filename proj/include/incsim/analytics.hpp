#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <boost/math/distributions/students_t.hpp>

#include "csv.hpp"
#include "engine/simulation.hpp"
#include "error.hpp"

namespace incsim::analytics {

using engine::EpidemicTrace;
using engine::EventKind;

inline constexpr double kZ95 = 1.959963984540054;

struct PrevalencePoint {
    int month = 0;
    double mean = 0.0;
    double std_error = 0.0;
    double ci_lower = 0.0;
    double ci_upper = 0.0;

    friend bool operator==(const PrevalencePoint &, const PrevalencePoint &) = default;
};

struct PrevalenceSummary {
    std::string label;
    int replicates = 0;
    /// Fewer than two replicates: the standard error is undefined and reported as 0.
    bool degenerate = false;
    std::vector<PrevalencePoint> points;

    friend bool operator==(const PrevalenceSummary &, const PrevalenceSummary &) = default;
};

namespace detail {

inline int common_duration(std::span<const EpidemicTrace> traces) {
    if (traces.empty()) {
        throw InputError("no traces to summarise");
    }
    const int duration = traces.front().duration();
    for (const auto &t : traces) {
        if (t.duration() != duration) {
            throw InputError("trace durations differ (" + std::to_string(duration) + " vs " +
                             std::to_string(t.duration()) + ")");
        }
    }
    return duration;
}

struct Moments {
    double mean = 0.0;
    double variance = 0.0; // sample variance, 0 for n < 2
    std::size_t n = 0;
};

inline Moments moments(std::span<const double> xs) {
    Moments m;
    m.n = xs.size();
    if (xs.empty()) {
        return m;
    }
    double sum = 0.0;
    for (double x : xs) {
        sum += x;
    }
    m.mean = sum / static_cast<double>(m.n);
    if (m.n > 1) {
        double ss = 0.0;
        for (double x : xs) {
            ss += (x - m.mean) * (x - m.mean);
        }
        m.variance = ss / static_cast<double>(m.n - 1);
    }
    return m;
}

/// Replicate prevalences at one month, in a fixed order so sums do not depend on scheduling.
inline std::vector<double> prevalences_at(std::span<const EpidemicTrace> traces, int month) {
    std::vector<double> out;
    out.reserve(traces.size());
    for (const auto &t : traces) {
        out.push_back(t.prevalence(month));
    }
    std::sort(out.begin(), out.end());
    return out;
}

} // namespace detail

/// Per-month mean, standard error and normal 95% interval (clamped to [0, 1]) across replicates.
inline PrevalenceSummary summarize_ensemble(std::span<const EpidemicTrace> traces, std::string label = {}) {
    const int duration = detail::common_duration(traces);
    PrevalenceSummary summary;
    summary.label = label.empty() ? traces.front().label : std::move(label);
    summary.replicates = static_cast<int>(traces.size());
    summary.degenerate = traces.size() < 2;
    summary.points.reserve(static_cast<std::size_t>(duration) + 1);
    for (int month = 0; month <= duration; ++month) {
        const auto xs = detail::prevalences_at(traces, month);
        const auto m = detail::moments(xs);
        const double se = std::sqrt(m.variance / static_cast<double>(m.n));
        summary.points.push_back({month, m.mean, se, std::max(0.0, m.mean - kZ95 * se),
                                  std::min(1.0, m.mean + kZ95 * se)});
    }
    return summary;
}

struct WelchResult {
    double t_statistic = 0.0;
    double df = 0.0;
    double log_p = 0.0;
};

/// Two-sided unequal-variance t-test. Both variances zero: p = 1 for equal means, else p = 0.
inline WelchResult welch_t_test(std::span<const double> a, std::span<const double> b) {
    if (a.size() < 2 || b.size() < 2) {
        throw InputError("t-test needs at least two observations per sample");
    }
    const auto ma = detail::moments(a);
    const auto mb = detail::moments(b);
    const double va = ma.variance / static_cast<double>(ma.n);
    const double vb = mb.variance / static_cast<double>(mb.n);
    WelchResult r;
    if (va + vb == 0.0) {
        r.t_statistic = ma.mean == mb.mean ? 0.0 : std::copysign(std::numeric_limits<double>::infinity(), ma.mean - mb.mean);
        r.df = static_cast<double>(ma.n + mb.n - 2);
        r.log_p = ma.mean == mb.mean ? 0.0 : -std::numeric_limits<double>::infinity();
        return r;
    }
    r.t_statistic = (ma.mean - mb.mean) / std::sqrt(va + vb);
    r.df = (va + vb) * (va + vb) /
           (va * va / static_cast<double>(ma.n - 1) + vb * vb / static_cast<double>(mb.n - 1));
    const boost::math::students_t dist(r.df);
    const double p = 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(r.t_statistic)));
    r.log_p = std::log(std::min(1.0, p));
    return r;
}

struct LogPPoint {
    int month = 0;
    double mean_a = 0.0;
    double mean_b = 0.0;
    double t_statistic = 0.0;
    double df = 0.0;
    double log_p = 0.0;
};

struct LogPSeries {
    std::string label_a;
    std::string label_b;
    std::vector<LogPPoint> points;
};

inline LogPSeries log_pvalue_series(std::span<const EpidemicTrace> a, std::span<const EpidemicTrace> b) {
    if (a.size() < 2 || b.size() < 2) {
        throw InputError("log p-value series needs at least two traces per ensemble");
    }
    const int duration = detail::common_duration(a);
    if (detail::common_duration(b) != duration) {
        throw InputError("ensembles have different durations");
    }
    LogPSeries series{a.front().label, b.front().label, {}};
    for (int month = 0; month <= duration; ++month) {
        const auto xa = detail::prevalences_at(a, month);
        const auto xb = detail::prevalences_at(b, month);
        const auto w = welch_t_test(xa, xb);
        series.points.push_back(
            {month, detail::moments(xa).mean, detail::moments(xb).mean, w.t_statistic, w.df, w.log_p});
    }
    return series;
}

// Recidivism

enum class ReleaseOutcome { recidivated, survived, censored };

struct ReleaseRecord {
    int month = 0;
    AgentId agent = kNoAgent;
    /// Incarcerations so far in the replicate, including the one just ended.
    int spell = 0;
    int age_months = 0;
    ReleaseOutcome outcome = ReleaseOutcome::censored;
    /// Months from release to reincarceration, for recidivists.
    int return_months = 0;
};

/// Classifies every release in one trace. A release is censored when fewer than `window`
/// months remain in the run or the agent dies within the window without returning.
inline std::vector<ReleaseRecord> classify_releases(const EpidemicTrace &trace, int window) {
    const int duration = trace.duration();
    std::map<AgentId, int> spells;
    std::map<AgentId, std::vector<std::size_t>> open; // releases awaiting the next infection or death
    std::vector<ReleaseRecord> records;
    std::vector<int> next_infection;
    std::vector<int> death;
    for (const auto &e : trace.events) {
        if (engine::is_infection(e.kind)) {
            ++spells[e.agent];
            for (auto idx : open[e.agent]) {
                next_infection[idx] = e.month;
            }
            open[e.agent].clear();
        } else if (e.kind == EventKind::release) {
            records.push_back({e.month, e.agent, spells[e.agent], e.age_months, ReleaseOutcome::censored, 0});
            next_infection.push_back(-1);
            death.push_back(-1);
            open[e.agent].push_back(records.size() - 1);
        } else if (e.kind == EventKind::death) {
            for (auto idx : open[e.agent]) {
                death[idx] = e.month;
            }
            open[e.agent].clear();
        }
    }
    for (std::size_t i = 0; i < records.size(); ++i) {
        auto &r = records[i];
        if (r.month + window > duration) {
            r.outcome = ReleaseOutcome::censored;
        } else if (next_infection[i] >= 0 && next_infection[i] - r.month <= window) {
            r.outcome = ReleaseOutcome::recidivated;
            r.return_months = next_infection[i] - r.month;
        } else if (death[i] >= 0 && death[i] - r.month <= window) {
            r.outcome = ReleaseOutcome::censored;
        } else {
            r.outcome = ReleaseOutcome::survived;
        }
    }
    return records;
}

struct RateCell {
    std::string group;
    long releases = 0;
    long recidivated = 0;
    long survived = 0;
    long censored = 0;

    long observed() const noexcept { return recidivated + survived; }
    /// NaN when no release in the cell has full follow-up.
    double rate() const noexcept {
        return observed() == 0 ? std::numeric_limits<double>::quiet_NaN()
                               : static_cast<double>(recidivated) / static_cast<double>(observed());
    }
    void add(ReleaseOutcome o) noexcept {
        ++releases;
        (o == ReleaseOutcome::recidivated ? recidivated : o == ReleaseOutcome::survived ? survived : censored) += 1;
    }
};

struct ReturnTimeCell {
    int month = 0;
    long count = 0;
    double fraction = 0.0;
};

struct RecidivismOptions {
    int window_months = 36;
    /// Lower edges, in years, of every age band after the first.
    std::vector<int> age_band_edges{25, 35, 45, 55};
    /// Spell counts at or above this share the last bin.
    int max_spell_bin = 4;
};

struct RecidivismReport {
    int window_months = 36;
    /// No release events at all.
    bool empty = true;
    RateCell total{"all"};
    std::vector<RateCell> by_prior_count;
    std::vector<RateCell> by_age_band;
    std::vector<ReturnTimeCell> return_times;
};

inline std::vector<std::string> age_band_labels(const std::vector<int> &edges) {
    std::vector<std::string> labels;
    if (edges.empty()) {
        return {"all"};
    }
    labels.push_back("<" + std::to_string(edges.front()));
    for (std::size_t i = 0; i + 1 < edges.size(); ++i) {
        labels.push_back(std::to_string(edges[i]) + "-" + std::to_string(edges[i + 1] - 1));
    }
    labels.push_back(std::to_string(edges.back()) + "+");
    return labels;
}

inline RecidivismReport recidivism_report(std::span<const EpidemicTrace> traces, const RecidivismOptions &opts = {}) {
    if (opts.window_months < 1 || opts.max_spell_bin < 1 || !std::is_sorted(opts.age_band_edges.begin(), opts.age_band_edges.end())) {
        throw ConfigError("invalid recidivism options");
    }
    RecidivismReport report;
    report.window_months = opts.window_months;
    for (int k = 1; k <= opts.max_spell_bin; ++k) {
        report.by_prior_count.push_back({std::to_string(k) + (k == opts.max_spell_bin ? "+" : "")});
    }
    for (auto &label : age_band_labels(opts.age_band_edges)) {
        report.by_age_band.push_back({std::move(label)});
    }
    std::vector<long> returns(static_cast<std::size_t>(opts.window_months) + 1, 0);
    for (const auto &trace : traces) {
        for (const auto &r : classify_releases(trace, opts.window_months)) {
            report.empty = false;
            report.total.add(r.outcome);
            const int bin = std::clamp(r.spell, 1, opts.max_spell_bin) - 1;
            report.by_prior_count[static_cast<std::size_t>(bin)].add(r.outcome);
            const int age_years = r.age_months / 12;
            const auto band = std::upper_bound(opts.age_band_edges.begin(), opts.age_band_edges.end(), age_years) -
                              opts.age_band_edges.begin();
            report.by_age_band[static_cast<std::size_t>(band)].add(r.outcome);
            if (r.outcome == ReleaseOutcome::recidivated) {
                ++returns[static_cast<std::size_t>(r.return_months)];
            }
        }
    }
    for (int m = 1; m <= opts.window_months; ++m) {
        const auto count = returns[static_cast<std::size_t>(m)];
        report.return_times.push_back(
            {m, count, report.total.recidivated == 0 ? 0.0 : static_cast<double>(count) / report.total.recidivated});
    }
    return report;
}

// External overlay

struct ExternalPoint {
    int year = 0;
    std::string group;
    double prevalence = 0.0;
};

struct OverlayRow {
    std::string group;
    int year = 0;
    int month = 0;
    double simulated = 0.0;
    std::optional<double> observed;

    std::optional<double> residual() const {
        return observed ? std::optional<double>(std::abs(simulated - *observed)) : std::nullopt;
    }
};

struct Overlay {
    std::vector<OverlayRow> rows;
    std::vector<std::string> warnings;
};

/// External CSV with columns year,group,prevalence.
inline std::vector<ExternalPoint> read_external_series(const std::filesystem::path &path) {
    std::ifstream in(path);
    if (!in) {
        throw InputError("cannot open " + path.string());
    }
    std::string first;
    if (!std::getline(in, first) || first.find_first_not_of(" \t\r\n") == std::string::npos) {
        return {};
    }
    in.clear();
    in.seekg(0);
    const auto table = csv::read(in, path.string());
    const auto year_col = table.column("year");
    const auto group_col = table.column("group");
    const auto prev_col = table.column("prevalence");
    std::vector<ExternalPoint> out;
    for (const auto &row : table.rows) {
        const double p = csv::parse<double>(row.fields[prev_col], table.where(row));
        if (!(p >= 0.0 && p <= 1.0)) {
            throw InputError(table.where(row) + ": prevalence outside [0,1]");
        }
        out.push_back({csv::parse<int>(row.fields[year_col], table.where(row)), row.fields[group_col], p});
    }
    return out;
}

/// Joins yearly simulated means (month 12k, year start_year + k) with external observations
/// whose group matches a summary label. Unmatched or out-of-range rows are skipped with a warning.
inline Overlay overlay_external_series(std::span<const PrevalenceSummary> summaries,
                                       std::span<const ExternalPoint> external, int start_year) {
    Overlay overlay;
    std::map<std::pair<std::string, int>, std::size_t> index;
    for (const auto &s : summaries) {
        for (std::size_t m = 0; m < s.points.size(); m += 12) {
            const int year = start_year + static_cast<int>(m / 12);
            index[{s.label, year}] = overlay.rows.size();
            overlay.rows.push_back({s.label, year, static_cast<int>(m), s.points[m].mean, std::nullopt});
        }
    }
    for (const auto &p : external) {
        const auto it = index.find({p.group, p.year});
        if (it == index.end()) {
            overlay.warnings.push_back("skipped external row " + p.group + " " + std::to_string(p.year) +
                                       ": no simulated value for that group and year");
            continue;
        }
        overlay.rows[it->second].observed = p.prevalence;
    }
    return overlay;
}

// CSV export and import

inline constexpr const char *kSummaryHeader = "scenario,month,mean,std_error,ci_lower,ci_upper,replicates";
inline constexpr const char *kLogPHeader = "month,mean_a,mean_b,t_statistic,df,log_p";
inline constexpr const char *kRecidivismHeader = "breakdown,group,releases,recidivated,survived,censored,rate";
inline constexpr const char *kReturnTimeHeader = "months_since_release,count,fraction";
inline constexpr const char *kOverlayHeader = "group,year,month,simulated,observed,residual";

namespace detail {

inline std::ofstream open_output(const std::filesystem::path &path) {
    std::ofstream out(path);
    if (!out) {
        throw InputError("cannot write " + path.string());
    }
    return out;
}

inline void finish(std::ofstream &out, const std::filesystem::path &path) {
    out.flush();
    if (!out) {
        throw InputError("write failed for " + path.string());
    }
}

} // namespace detail

inline void write_summaries(std::span<const PrevalenceSummary> summaries, const std::filesystem::path &path) {
    auto out = detail::open_output(path);
    out << kSummaryHeader << '\n';
    for (const auto &s : summaries) {
        for (const auto &p : s.points) {
            csv::write_row(out, s.label, p.month, p.mean, p.std_error, p.ci_lower, p.ci_upper, s.replicates);
        }
    }
    detail::finish(out, path);
}

inline void write_summary(const PrevalenceSummary &summary, const std::filesystem::path &path) {
    write_summaries(std::span(&summary, 1), path);
}

/// Summaries in file order of first appearance.
inline std::vector<PrevalenceSummary> read_summaries(const std::filesystem::path &path) {
    const auto table = csv::read_file(path);
    const auto c_label = table.column("scenario");
    const auto c_month = table.column("month");
    const auto c_mean = table.column("mean");
    const auto c_se = table.column("std_error");
    const auto c_lo = table.column("ci_lower");
    const auto c_hi = table.column("ci_upper");
    const auto c_n = table.column("replicates");
    std::vector<PrevalenceSummary> out;
    for (const auto &row : table.rows) {
        const auto &label = row.fields[c_label];
        auto it = std::find_if(out.begin(), out.end(), [&](const auto &s) { return s.label == label; });
        if (it == out.end()) {
            out.push_back({label, csv::parse<int>(row.fields[c_n], table.where(row)), false, {}});
            it = out.end() - 1;
            it->degenerate = it->replicates < 2;
        }
        const auto w = table.where(row);
        const int month = csv::parse<int>(row.fields[c_month], w);
        if (month != static_cast<int>(it->points.size())) {
            throw InputError(w + ": months must be consecutive from 0");
        }
        it->points.push_back({month, csv::parse<double>(row.fields[c_mean], w), csv::parse<double>(row.fields[c_se], w),
                              csv::parse<double>(row.fields[c_lo], w), csv::parse<double>(row.fields[c_hi], w)});
    }
    return out;
}

inline void write_log_pvalues(const LogPSeries &series, const std::filesystem::path &path) {
    auto out = detail::open_output(path);
    out << "# a=" << series.label_a << " b=" << series.label_b << '\n' << kLogPHeader << '\n';
    for (const auto &p : series.points) {
        csv::write_row(out, p.month, p.mean_a, p.mean_b, p.t_statistic, p.df, p.log_p);
    }
    detail::finish(out, path);
}

inline void write_recidivism(const RecidivismReport &report, const std::filesystem::path &rates_path,
                             const std::filesystem::path &return_times_path) {
    auto out = detail::open_output(rates_path);
    out << kRecidivismHeader << '\n';
    const auto row = [&](const char *breakdown, const RateCell &c) {
        csv::write_row(out, breakdown, c.group, static_cast<long long>(c.releases), static_cast<long long>(c.recidivated),
                       static_cast<long long>(c.survived), static_cast<long long>(c.censored), c.rate());
    };
    row("total", report.total);
    for (const auto &c : report.by_prior_count) {
        row("prior_count", c);
    }
    for (const auto &c : report.by_age_band) {
        row("age_band", c);
    }
    detail::finish(out, rates_path);

    auto rt = detail::open_output(return_times_path);
    rt << kReturnTimeHeader << '\n';
    for (const auto &c : report.return_times) {
        csv::write_row(rt, c.month, static_cast<long long>(c.count), c.fraction);
    }
    detail::finish(rt, return_times_path);
}

inline void write_overlay(const Overlay &overlay, const std::filesystem::path &path) {
    auto out = detail::open_output(path);
    out << kOverlayHeader << '\n';
    for (const auto &r : overlay.rows) {
        const auto opt = [](const std::optional<double> &v) { return v ? csv::format(*v) : std::string(); };
        csv::write_row(out, r.group, r.year, r.month, r.simulated, opt(r.observed), opt(r.residual()));
    }
    detail::finish(out, path);
}

} // namespace incsim::analytics
