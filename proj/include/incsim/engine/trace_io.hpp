#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include <zlib.h>

#include "../csv.hpp"
#include "../error.hpp"
#include "simulation.hpp"

namespace incsim::engine {

inline constexpr const char *kEventLogHeader = "month,agent,kind,source,sentence,age_months";
inline constexpr const char *kCountsHeader = "replicate,month,alive,incarcerated";

inline EventKind event_kind_from_string(const std::string &text) {
    for (auto kind : {EventKind::seed, EventKind::transmission, EventKind::spontaneous, EventKind::release,
                      EventKind::death, EventKind::birth}) {
        if (to_string(kind) == text) {
            return kind;
        }
    }
    throw InputError("unknown event kind '" + text + "'");
}

namespace detail {

struct GzCloser {
    void operator()(gzFile f) const noexcept { gzclose(f); }
};
using GzHandle = std::unique_ptr<std::remove_pointer_t<gzFile>, GzCloser>;

inline std::string gunzip_file(const std::filesystem::path &path) {
    GzHandle f(gzopen(path.string().c_str(), "rb"));
    if (!f) {
        throw InputError("cannot open " + path.string());
    }
    std::string out;
    char buf[1 << 15];
    int n = 0;
    while ((n = gzread(f.get(), buf, sizeof(buf))) > 0) {
        out.append(buf, static_cast<std::size_t>(n));
    }
    if (n < 0) {
        throw InputError("corrupt gzip stream in " + path.string());
    }
    return out;
}

} // namespace detail

/// Gzipped CSV event log. Leading '#' lines carry key=value metadata needed to rebuild the
/// count series: label, seed, fingerprint, initial_alive, duration.
inline void write_event_log(const EpidemicTrace &trace, const std::filesystem::path &path) {
    std::ostringstream text;
    text << "# label=" << trace.label << '\n'
         << "# seed=" << trace.seed << '\n'
         << "# fingerprint=" << trace.fingerprint << '\n'
         << "# initial_alive=" << trace.initial_alive << '\n'
         << "# duration=" << trace.duration() << '\n'
         << kEventLogHeader << '\n';
    for (const auto &e : trace.events) {
        csv::write_row(text, e.month, e.agent, std::string(to_string(e.kind)), e.source, e.sentence, e.age_months);
    }
    const auto data = text.str();
    // Fixed level and no embedded name or timestamp, so identical traces give identical bytes.
    detail::GzHandle f(gzopen(path.string().c_str(), "wb6"));
    if (!f) {
        throw InputError("cannot write " + path.string());
    }
    if (!data.empty() && gzwrite(f.get(), data.data(), static_cast<unsigned>(data.size())) == 0) {
        throw InputError("write failed for " + path.string());
    }
    if (gzclose(f.release()) != Z_OK) {
        throw InputError("write failed for " + path.string());
    }
}

/// Reads an event log and rebuilds the trace, replaying the counts from the events.
inline EpidemicTrace read_event_log(const std::filesystem::path &path) {
    const auto data = detail::gunzip_file(path);
    std::istringstream in(data);
    std::map<std::string, std::string> meta;
    std::string line;
    std::istringstream scan(data);
    while (std::getline(scan, line) && !line.empty() && line.front() == '#') {
        const auto eq = line.find('=');
        if (eq != std::string::npos && line.size() > 2) {
            meta[line.substr(2, eq - 2)] = line.substr(eq + 1);
        }
    }
    for (const char *key : {"label", "seed", "initial_alive", "duration"}) {
        if (!meta.contains(key)) {
            throw InputError(path.string() + ": missing '" + key + "' metadata");
        }
    }
    const auto table = csv::read(in, path.string());
    const auto c_month = table.column("month");
    const auto c_agent = table.column("agent");
    const auto c_kind = table.column("kind");
    const auto c_source = table.column("source");
    const auto c_sentence = table.column("sentence");
    const auto c_age = table.column("age_months");
    EpidemicTrace trace;
    trace.label = meta["label"];
    trace.seed = csv::parse<std::uint64_t>(meta["seed"], path.string());
    trace.fingerprint = meta["fingerprint"];
    trace.initial_alive = csv::parse<int>(meta["initial_alive"], path.string());
    const int duration = csv::parse<int>(meta["duration"], path.string());
    trace.events.reserve(table.rows.size());
    for (const auto &row : table.rows) {
        const auto w = table.where(row);
        Event e;
        e.month = csv::parse<int>(row.fields[c_month], w);
        e.agent = csv::parse<AgentId>(row.fields[c_agent], w);
        try {
            e.kind = event_kind_from_string(row.fields[c_kind]);
        } catch (const InputError &err) {
            throw InputError(w + ": " + err.what());
        }
        e.source = csv::parse<AgentId>(row.fields[c_source], w);
        e.sentence = csv::parse<int>(row.fields[c_sentence], w);
        e.age_months = csv::parse<int>(row.fields[c_age], w);
        trace.events.push_back(e);
    }
    trace.counts = replay_counts(trace.initial_alive, duration, trace.events);
    return trace;
}

/// One ensemble's monthly counts, replicates in order.
inline void write_counts(const std::vector<EpidemicTrace> &traces, const std::filesystem::path &path) {
    std::ofstream out(path);
    if (!out) {
        throw InputError("cannot write " + path.string());
    }
    out << kCountsHeader << '\n';
    for (std::size_t r = 0; r < traces.size(); ++r) {
        for (std::size_t m = 0; m < traces[r].counts.size(); ++m) {
            csv::write_row(out, r, m, traces[r].counts[m].alive, traces[r].counts[m].incarcerated);
        }
    }
    out.flush();
    if (!out) {
        throw InputError("write failed for " + path.string());
    }
}

/// Counts per replicate index, as written by write_counts.
inline std::map<int, std::vector<MonthCounts>> read_counts(const std::filesystem::path &path) {
    const auto table = csv::read_file(path);
    const auto c_rep = table.column("replicate");
    const auto c_month = table.column("month");
    const auto c_alive = table.column("alive");
    const auto c_inc = table.column("incarcerated");
    std::map<int, std::vector<MonthCounts>> out;
    for (const auto &row : table.rows) {
        const auto w = table.where(row);
        auto &series = out[csv::parse<int>(row.fields[c_rep], w)];
        if (csv::parse<int>(row.fields[c_month], w) != static_cast<int>(series.size())) {
            throw InputError(w + ": months must be consecutive from 0");
        }
        series.push_back({csv::parse<int>(row.fields[c_alive], w), csv::parse<int>(row.fields[c_inc], w)});
    }
    return out;
}

} // namespace incsim::engine
