#pragma once

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "analytics.hpp"
#include "config.hpp"
#include "engine/ensemble.hpp"
#include "engine/trace_io.hpp"
#include "hash.hpp"
#include "ode.hpp"
#include "popgen/generator.hpp"
#include "popgen/population_io.hpp"

namespace incsim::pipeline {

inline constexpr const char *kToolVersion = "1.0.0";
inline constexpr const char *kResolvedConfigName = "config.json";
inline constexpr const char *kMetadataName = "metadata.json";
inline constexpr const char *kPopulationName = "population.json";

inline unsigned worker_count(const RunConfig &cfg) {
    return cfg.workers == 0 ? engine::default_worker_count() : cfg.workers;
}

inline popgen::DemographicTables load_tables(const PopulationConfig &pc) {
    return popgen::load_demographic_tables(pc.tables, pc.fertility_mean);
}

inline TransmissionTable load_transmission(const TransmissionConfig &tc) {
    return TransmissionTable::from_survey(read_survey_table(tc.survey_table), tc.calibration_sentence);
}

inline SentenceDistribution resolve_sentence(const ScenarioConfig &sc) {
    if (sc.sentence.is_fit()) {
        return fit_negative_binomial(*sc.sentence.mean, *sc.sentence.median, sc.label, sc.sentence.floor).dist;
    }
    SentenceDistribution d{*sc.sentence.dispersion, *sc.sentence.success_prob, sc.sentence.floor, sc.label};
    sentence_mean(d); // validates
    return d;
}

inline engine::Scenario make_scenario(const ScenarioConfig &sc, const TransmissionTable &table,
                                      std::uint64_t master_seed) {
    engine::Scenario s;
    s.label = sc.label;
    s.sentence = resolve_sentence(sc);
    s.transmission = table;
    s.initial_prevalence = sc.initial_prevalence;
    s.duration_months = sc.duration_months;
    s.n_replicates = sc.replicates;
    s.eligibility_min_age = sc.eligibility_min_age;
    s.spontaneous_monthly_prob = sc.spontaneous_rate;
    s.contagion_enabled = sc.contagion;
    s.allow_mixed_drivers = sc.allow_mixed_drivers;
    s.master_seed = derive_seed(master_seed, sc.label);
    s.validate();
    return s;
}

/// Hash over the generation parameters and the content of every table file.
inline std::string generation_hash(const PopulationConfig &pc) {
    Fnv1a h;
    for (const auto &path : {pc.tables.life_table_female, pc.tables.life_table_male, pc.tables.fertility,
                             pc.tables.friend_counts}) {
        h.update(hash_file(path)).update("|");
    }
    const auto &g = pc.generation;
    for (const auto &v : {csv::format(pc.fertility_mean), csv::format(g.seed_count), csv::format(g.horizon_years),
                          csv::format(g.burn_in_years), std::to_string(g.rng_seed), csv::format(g.seed_birth_year_max),
                          csv::format(static_cast<int>(g.friend_count_is_total))}) {
        h.update(v).update("|");
    }
    return h.hex();
}

inline std::string population_hash(const popgen::Population &pop) {
    return Fnv1a{}.update(popgen::population_to_json(pop, {}).dump()).hex();
}

inline popgen::Population build_population(const PopulationConfig &pc) {
    if (pc.file) {
        return popgen::read_population(*pc.file);
    }
    return popgen::generate_population(load_tables(pc), pc.generation);
}

inline std::string replicate_file_name(int replicate) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "replicate_%04d.csv.gz", replicate);
    return buf;
}

struct ScenarioRun {
    engine::Scenario scenario;
    std::string fingerprint;
    std::vector<engine::EpidemicTrace> traces;
    /// Replicate index and message for every replicate that threw.
    std::vector<std::pair<int, std::string>> failures;
    double seconds = 0.0;
};

/// Runs one scenario, collecting per-replicate failures instead of aborting.
inline ScenarioRun run_scenario(const engine::Scenario &scenario, const engine::World *shared_world,
                                const std::string &population_hash_value, const PopulationConfig &pc,
                                const TransmissionTable &table, unsigned workers) {
    ScenarioRun run;
    run.scenario = scenario;
    run.fingerprint = engine::scenario_fingerprint(scenario, population_hash_value);
    const auto start = std::chrono::steady_clock::now();
    const auto n = static_cast<std::size_t>(scenario.n_replicates);
    run.traces.resize(n);
    std::vector<std::string> errors(n);
    std::optional<engine::Simulation> shared_sim;
    if (shared_world) {
        shared_sim.emplace(*shared_world, scenario);
    }
    const auto tables = shared_world ? popgen::DemographicTables{} : load_tables(pc);
    engine::parallel_for(n, workers, [&](std::size_t i) {
        const auto r = static_cast<int>(i);
        const auto seed = engine::replicate_seed(scenario.master_seed, r);
        try {
            if (shared_sim) {
                run.traces[i] = shared_sim->run_replicate(seed);
            } else {
                auto params = pc.generation;
                params.rng_seed = derive_seed(derive_seed(pc.generation.rng_seed, "replicate-population"),
                                              static_cast<std::uint64_t>(r));
                const auto pop = popgen::generate_population(tables, params);
                const engine::World world(pop, table);
                run.traces[i] = engine::Simulation(world, scenario).run_replicate(seed);
            }
            run.traces[i].fingerprint = run.fingerprint;
        } catch (const std::exception &err) {
            errors[i] = err.what();
        }
    });
    for (std::size_t i = 0; i < n; ++i) {
        if (!errors[i].empty()) {
            run.failures.emplace_back(static_cast<int>(i), errors[i]);
        }
    }
    run.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return run;
}

struct RunResult {
    std::filesystem::path run_dir;
    std::vector<ScenarioRun> scenarios;
    bool complete = true;
};

namespace detail {

inline void write_json(const nlohmann::ordered_json &doc, const std::filesystem::path &path) {
    std::ofstream out(path);
    if (!out) {
        throw InputError("cannot write " + path.string());
    }
    out << doc.dump(2) << '\n';
}

inline nlohmann::ordered_json read_json(const std::filesystem::path &path) {
    std::ifstream in(path);
    if (!in) {
        throw InputError("cannot open " + path.string());
    }
    try {
        return nlohmann::ordered_json::parse(in);
    } catch (const nlohmann::json::exception &err) {
        throw InputError(path.string() + ": " + err.what());
    }
}

} // namespace detail

/// Executes every scenario and writes a self-describing run directory:
/// config.json, metadata.json, population.json, and per scenario counts.csv, summary.csv
/// and events/replicate_NNNN.csv.gz.
inline RunResult run(const RunConfig &cfg, const std::filesystem::path &run_dir, std::ostream &log) {
    const auto wall_start = std::chrono::steady_clock::now();
    const unsigned workers = worker_count(cfg);
    const auto table = load_transmission(cfg.transmission);
    std::vector<engine::Scenario> scenarios;
    for (const auto &sc : cfg.scenarios) {
        scenarios.push_back(make_scenario(sc, table, cfg.master_seed));
    }
    std::filesystem::create_directories(run_dir);
    detail::write_json(resolved_config_json(cfg), run_dir / kResolvedConfigName);

    nlohmann::ordered_json meta{{"tool", "incsim"}, {"version", kToolVersion}, {"master_seed", cfg.master_seed}};
    nlohmann::ordered_json inputs{{"survey_table", hash_file(cfg.transmission.survey_table)}};

    std::optional<popgen::Population> pop;
    std::optional<engine::World> world;
    std::string pop_hash = "per-replicate";
    if (!cfg.population.regenerate_per_replicate) {
        log << "population: " << (cfg.population.file ? "loading " + cfg.population.file->string() : "generating")
            << '\n';
        pop = build_population(cfg.population);
        pop_hash = population_hash(*pop);
        popgen::write_population(*pop, run_dir / kPopulationName,
                                 cfg.population.file ? std::string("loaded") : generation_hash(cfg.population));
        world.emplace(*pop, table);
        meta["population"] = {{"hash", pop_hash},
                              {"generation_seed", pop->generation_seed},
                              {"agents", pop->agents.size()},
                              {"edges", pop->edges.size()},
                              {"stats", popgen::stats_to_json(pop->stats)}};
        log << "population: " << pop->agents.size() << " agents, " << pop->edges.size() << " edges\n";
    } else {
        meta["population"] = {{"hash", pop_hash}, {"generation", generation_hash(cfg.population)}};
    }
    if (cfg.population.file) {
        inputs["population_file"] = hash_file(*cfg.population.file);
    } else {
        inputs["generation"] = generation_hash(cfg.population);
    }
    meta["inputs"] = inputs;

    RunResult result;
    result.run_dir = run_dir;
    nlohmann::ordered_json scenario_meta = nlohmann::ordered_json::array();
    for (const auto &scenario : scenarios) {
        log << scenario.label << ": " << scenario.n_replicates << " replicates x " << scenario.duration_months
            << " months\n";
        auto sr = run_scenario(scenario, world ? &*world : nullptr, pop_hash, cfg.population, table, workers);
        const auto dir = run_dir / scenario.label;
        std::filesystem::create_directories(dir / "events");
        std::vector<engine::EpidemicTrace> good;
        for (std::size_t i = 0; i < sr.traces.size(); ++i) {
            const bool failed = std::any_of(sr.failures.begin(), sr.failures.end(),
                                            [&](const auto &f) { return f.first == static_cast<int>(i); });
            if (!failed) {
                engine::write_event_log(sr.traces[i], dir / "events" / replicate_file_name(static_cast<int>(i)));
                good.push_back(sr.traces[i]);
            }
        }
        if (sr.failures.empty()) {
            engine::write_counts(sr.traces, dir / "counts.csv");
        }
        if (!good.empty()) {
            analytics::write_summary(analytics::summarize_ensemble(good, scenario.label), dir / "summary.csv");
        }
        nlohmann::ordered_json failures = nlohmann::ordered_json::array();
        for (const auto &[i, msg] : sr.failures) {
            failures.push_back({{"replicate", i}, {"error", msg}});
            log << scenario.label << ": replicate " << i << " failed: " << msg << '\n';
        }
        std::vector<std::uint64_t> seeds;
        for (int i = 0; i < scenario.n_replicates; ++i) {
            seeds.push_back(engine::replicate_seed(scenario.master_seed, i));
        }
        scenario_meta.push_back({{"label", scenario.label},
                                 {"fingerprint", sr.fingerprint},
                                 {"master_seed", scenario.master_seed},
                                 {"sentence",
                                  {{"dispersion", scenario.sentence.dispersion},
                                   {"success_prob", scenario.sentence.success_prob},
                                   {"floor", scenario.sentence.floor}}},
                                 {"replicates", scenario.n_replicates},
                                 {"replicate_seeds", seeds},
                                 {"failures", failures},
                                 {"wall_seconds", sr.seconds}});
        result.complete = result.complete && sr.failures.empty();
        log << scenario.label << ": done in " << sr.seconds << " s, mean end prevalence "
            << engine::mean_end_prevalence(good) << '\n';
        result.scenarios.push_back(std::move(sr));
    }
    meta["scenarios"] = scenario_meta;
    meta["workers"] = workers;
    meta["complete"] = result.complete;
    meta["wall_seconds"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - wall_start).count();
    detail::write_json(meta, run_dir / kMetadataName);
    return result;
}

/// Loads a completed scenario's traces from its event logs, checking them against counts.csv.
inline std::vector<engine::EpidemicTrace> load_traces(const std::filesystem::path &run_dir, const ScenarioConfig &sc) {
    const auto dir = run_dir / sc.label;
    std::vector<engine::EpidemicTrace> traces;
    std::map<int, std::vector<engine::MonthCounts>> counts;
    if (std::filesystem::exists(dir / "counts.csv")) {
        counts = engine::read_counts(dir / "counts.csv");
    }
    for (int i = 0; i < sc.replicates; ++i) {
        const auto path = dir / "events" / replicate_file_name(i);
        if (!std::filesystem::exists(path)) {
            throw InputError(sc.label + ": missing trace for replicate " + std::to_string(i) + " (" + path.string() +
                             ")");
        }
        auto trace = engine::read_event_log(path);
        const auto it = counts.find(i);
        if (it != counts.end() && it->second != trace.counts) {
            throw InvariantError(sc.label + ": replicate " + std::to_string(i) +
                                 " event log does not replay to counts.csv");
        }
        traces.push_back(std::move(trace));
    }
    return traces;
}

inline RunConfig load_run_config(const std::filesystem::path &run_dir) {
    const auto path = run_dir / kResolvedConfigName;
    if (!std::filesystem::exists(path)) {
        throw InputError(run_dir.string() + ": not a run directory (no " + kResolvedConfigName + ")");
    }
    return load_config(path);
}

struct AnalysisOutputs {
    std::vector<std::filesystem::path> files;
    std::vector<std::string> warnings;
};

/// Recomputes every report from the event logs of a run into run_dir/analysis.
inline AnalysisOutputs analyze(const std::filesystem::path &run_dir, const AnalysisConfig &opts) {
    const auto cfg = load_run_config(run_dir);
    const auto out_dir = run_dir / "analysis";
    std::filesystem::create_directories(out_dir);
    AnalysisOutputs outputs;

    std::map<std::string, std::vector<engine::EpidemicTrace>> traces;
    std::vector<analytics::PrevalenceSummary> summaries;
    for (const auto &sc : cfg.scenarios) {
        traces[sc.label] = load_traces(run_dir, sc);
        summaries.push_back(analytics::summarize_ensemble(traces[sc.label], sc.label));
        const auto summary_path = out_dir / ("summary_" + sc.label + ".csv");
        analytics::write_summary(summaries.back(), summary_path);
        outputs.files.push_back(summary_path);

        analytics::RecidivismOptions ro;
        ro.window_months = opts.recidivism_window;
        ro.age_band_edges = opts.age_band_edges;
        const auto report = analytics::recidivism_report(traces[sc.label], ro);
        if (report.empty) {
            outputs.warnings.push_back(sc.label + ": no release events; recidivism report is empty");
        }
        const auto rates = out_dir / ("recidivism_" + sc.label + ".csv");
        const auto returns = out_dir / ("return_times_" + sc.label + ".csv");
        analytics::write_recidivism(report, rates, returns);
        outputs.files.push_back(rates);
        outputs.files.push_back(returns);
    }

    auto compare = opts.compare.empty() ? cfg.analysis.compare : opts.compare;
    if (compare.empty() && cfg.scenarios.size() >= 2) {
        compare = {cfg.scenarios[0].label, cfg.scenarios[1].label};
    }
    if (compare.size() == 2) {
        for (const auto &label : compare) {
            if (!traces.contains(label)) {
                throw ConfigError("compare: unknown scenario '" + label + "'");
            }
        }
        const auto &a = traces[compare[0]];
        const auto &b = traces[compare[1]];
        if (a.size() >= 2 && b.size() >= 2) {
            const auto path = out_dir / ("logp_" + compare[0] + "_vs_" + compare[1] + ".csv");
            analytics::write_log_pvalues(analytics::log_pvalue_series(a, b), path);
            outputs.files.push_back(path);
        } else {
            outputs.warnings.push_back("log p-values skipped: need at least two replicates per scenario");
        }
    }

    const auto rate_path = out_dir / "transmission_rate.csv";
    {
        std::ofstream out(rate_path);
        if (!out) {
            throw InputError("cannot write " + rate_path.string());
        }
        out << "scope,transmissions,person_months,p,critical_sentence\n";
        std::vector<engine::EpidemicTrace> pooled;
        const auto row = [&](const std::string &scope, const std::vector<engine::EpidemicTrace> &ts) {
            long long person_months = 0;
            for (const auto &t : ts) {
                for (const auto &c : t.counts) {
                    person_months += c.incarcerated;
                }
            }
            if (person_months == 0) {
                csv::write_row(out, scope, 0LL, 0LL, "nan", "nan");
                return;
            }
            const auto est = ode::calibrate_mean_rate(ts);
            csv::write_row(out, scope, est.transmissions, est.person_months, est.p,
                           est.p > 0.0 ? csv::format(ode::critical_sentence(est.p)) : std::string("inf"));
        };
        for (const auto &sc : cfg.scenarios) {
            row(sc.label, traces[sc.label]);
            pooled.insert(pooled.end(), traces[sc.label].begin(), traces[sc.label].end());
        }
        row("pooled", pooled);
    }
    outputs.files.push_back(rate_path);

    const auto overlay_cfg = opts.overlay ? opts.overlay : cfg.analysis.overlay;
    if (overlay_cfg) {
        const auto external = analytics::read_external_series(overlay_cfg->file);
        auto overlay = analytics::overlay_external_series(summaries, external, overlay_cfg->start_year);
        const auto path = out_dir / "overlay.csv";
        analytics::write_overlay(overlay, path);
        outputs.files.push_back(path);
        outputs.warnings.insert(outputs.warnings.end(), overlay.warnings.begin(), overlay.warnings.end());
    }
    return outputs;
}

} // namespace incsim::pipeline
