// incsim command-line entry point.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "incsim/analytics.hpp"
#include "incsim/config.hpp"
#include "incsim/engine/ensemble.hpp"
#include "incsim/error.hpp"
#include "incsim/ode.hpp"
#include "incsim/pipeline.hpp"
#include "incsim/popgen/population_io.hpp"
#include "incsim/sentencing.hpp"
#include "incsim/transmission.hpp"

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitContract = 1;
constexpr int kExitInput = 2;

incsim::RunConfig config_or_default(const std::string &path) {
    if (!path.empty()) {
        return incsim::load_config(path);
    }
    nlohmann::json doc = {{"scenarios",
                           {{{"label", "Black"}, {"sentence", {{"mean", 17}, {"median", 12}}}},
                            {{"label", "White"}, {"sentence", {{"mean", 14}, {"median", 10}}}}}}};
    return incsim::parse_config(doc, fs::current_path());
}

std::string timestamped_run_dir_name() {
    const auto now = std::chrono::system_clock::now();
    const auto t = std::chrono::system_clock::to_time_t(now);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[64];
    std::strftime(buf, sizeof(buf), "run-%Y%m%dT%H%M%SZ", &tm);
    return buf;
}

int cmd_synth_pop(const std::string &config_path, std::string out, const std::string &edges_out,
                  std::optional<std::uint64_t> seed) {
    auto cfg = config_or_default(config_path);
    if (seed) {
        cfg.population.generation.rng_seed = *seed;
    }
    const auto tables = incsim::pipeline::load_tables(cfg.population);
    const auto pop = incsim::popgen::generate_population(tables, cfg.population.generation);
    if (out.empty()) {
        out = (cfg.output_dir / "population.json").string();
    }
    if (fs::path(out).has_parent_path()) {
        fs::create_directories(fs::path(out).parent_path());
    }
    incsim::popgen::write_population(pop, out, incsim::pipeline::generation_hash(cfg.population));
    if (!edges_out.empty()) {
        std::ofstream edges(edges_out);
        if (!edges) {
            throw incsim::InputError("cannot write " + edges_out);
        }
        incsim::popgen::write_edge_list(pop, edges);
    }
    ordered_json report{{"population_file", out},
                        {"file_hash", incsim::hash_file(out)},
                        {"stats", incsim::popgen::stats_to_json(pop.stats)}};
    std::cout << report.dump(2) << '\n';
    return kExitOk;
}

int cmd_fit_sentences(const std::string &config_path, std::optional<double> mean, std::optional<double> median,
                      const std::string &label) {
    std::vector<std::tuple<std::string, double, double>> targets;
    if (mean || median) {
        if (!mean || !median) {
            throw incsim::ConfigError("--mean and --median must be given together");
        }
        targets.emplace_back(label, *mean, *median);
    } else {
        for (const auto &sc : config_or_default(config_path).scenarios) {
            if (sc.sentence.is_fit()) {
                targets.emplace_back(sc.label, *sc.sentence.mean, *sc.sentence.median);
            }
        }
    }
    std::cout << "label,target_mean,target_median,dispersion,success_prob,achieved_mean,achieved_median\n";
    for (const auto &[l, m, md] : targets) {
        const auto fit = incsim::fit_negative_binomial(m, md, l);
        incsim::csv::write_row(std::cout, l, m, md, fit.dist.dispersion, fit.dist.success_prob, fit.achieved_mean,
                               fit.achieved_median);
    }
    return kExitOk;
}

int cmd_derive_probs(const std::string &config_path, const std::string &survey_path, int sentence,
                     bool marginals, int samples, std::uint64_t seed) {
    auto cfg = config_or_default(config_path);
    const auto survey = incsim::read_survey_table(survey_path.empty() ? cfg.transmission.survey_table : fs::path(survey_path));
    const auto table = incsim::TransmissionTable::from_survey(survey, sentence);
    std::vector<incsim::SentenceDistribution> dists;
    if (marginals) {
        for (const auto &sc : cfg.scenarios) {
            dists.push_back(incsim::pipeline::resolve_sentence(sc));
        }
    }
    std::cout << "role,inmate_sex,survey,monthly";
    for (const auto &d : dists) {
        std::cout << ",marginal_mc_" << d.label << ",marginal_exact_" << d.label;
    }
    std::cout << '\n';
    for (auto role : incsim::kRoles) {
        for (auto sex : incsim::kSexes) {
            std::cout << incsim::to_string(role) << ',' << incsim::to_string(sex) << ','
                      << incsim::csv::format(survey.at(role, sex)) << ',' << incsim::csv::format(table.at(role, sex));
            for (const auto &d : dists) {
                incsim::CounterRng rng(incsim::derive_seed(seed, d.label + "/" + std::string(incsim::to_string(role)) +
                                                                   "/" + std::string(incsim::to_string(sex))));
                const auto mc = incsim::marginal_transmission_prob(table.at(role, sex), incsim::SentenceSampler(d),
                                                                   samples, rng);
                std::cout << ',' << incsim::csv::format(mc.value) << ','
                          << incsim::csv::format(incsim::marginal_transmission_exact(table.at(role, sex), d));
            }
            std::cout << '\n';
        }
    }
    return kExitOk;
}

int cmd_run(const std::string &config_path, std::string out, std::optional<unsigned> workers,
            std::optional<int> replicates, bool regenerate) {
    auto cfg = config_or_default(config_path);
    if (workers) {
        cfg.workers = *workers;
    }
    if (replicates) {
        for (auto &sc : cfg.scenarios) {
            sc.replicates = *replicates;
        }
    }
    if (regenerate) {
        cfg.population.regenerate_per_replicate = true;
    }
    const fs::path run_dir = out.empty() ? cfg.output_dir / timestamped_run_dir_name() : fs::path(out);
    const auto result = incsim::pipeline::run(cfg, run_dir, std::cerr);
    std::cout << run_dir.string() << '\n';
    if (!result.complete) {
        std::cerr << "run incomplete: some replicates failed (see metadata.json)\n";
        return kExitContract;
    }
    return kExitOk;
}

int cmd_analyze(const std::string &run_dir, const std::string &overlay, std::optional<int> start_year,
                std::optional<int> window, const std::vector<std::string> &compare) {
    auto opts = incsim::pipeline::load_run_config(run_dir).analysis;
    if (window) {
        opts.recidivism_window = *window;
    }
    if (!compare.empty()) {
        opts.compare = compare;
    }
    if (!overlay.empty()) {
        opts.overlay = incsim::OverlayConfig{overlay, start_year.value_or(0)};
    }
    const auto outputs = incsim::pipeline::analyze(run_dir, opts);
    for (const auto &w : outputs.warnings) {
        std::cerr << "warning: " << w << '\n';
    }
    for (const auto &f : outputs.files) {
        std::cout << f.string() << '\n';
    }
    return kExitOk;
}

int cmd_ode(std::optional<double> p, std::vector<double> sentences, const std::string &run_dir) {
    std::vector<std::pair<std::string, double>> rates;
    if (!run_dir.empty()) {
        const auto cfg = incsim::pipeline::load_run_config(run_dir);
        std::vector<incsim::engine::EpidemicTrace> pooled;
        std::vector<double> scenario_means;
        for (const auto &sc : cfg.scenarios) {
            const auto traces = incsim::pipeline::load_traces(run_dir, sc);
            rates.emplace_back(sc.label, incsim::ode::calibrate_mean_rate(traces).p);
            pooled.insert(pooled.end(), traces.begin(), traces.end());
            scenario_means.push_back(incsim::sentence_mean(incsim::pipeline::resolve_sentence(sc)));
        }
        if (sentences.empty()) {
            sentences = scenario_means;
        }
        rates.emplace_back("pooled", incsim::ode::calibrate_mean_rate(pooled).p);
    }
    if (p) {
        rates.emplace_back("given", *p);
    }
    if (rates.empty()) {
        throw incsim::ConfigError("give --p or --run-dir");
    }
    if (sentences.empty()) {
        sentences = {14.0, 17.0};
    }
    std::cout << "scope,p,critical_sentence,sentence,steady_state_prevalence\n";
    for (const auto &[scope, rate] : rates) {
        const std::string sc = rate > 0.0 ? incsim::csv::format(incsim::ode::critical_sentence(rate)) : "inf";
        for (double s : sentences) {
            incsim::csv::write_row(std::cout, scope, rate, sc, s, incsim::ode::steady_state_prevalence(rate, s));
        }
    }
    return kExitOk;
}

int cmd_calibrate(const std::string &config_path, double target, std::string label, std::optional<int> replicates,
                  double tolerance, std::optional<unsigned> workers) {
    auto cfg = config_or_default(config_path);
    if (label.empty()) {
        label = cfg.scenarios.front().label;
    }
    const auto table = incsim::pipeline::load_transmission(cfg.transmission);
    const auto pop = incsim::pipeline::build_population(cfg.population);
    const incsim::engine::World world(pop, table);
    std::vector<incsim::engine::Scenario> nulls;
    const incsim::engine::Scenario *anchor = nullptr;
    for (auto sc : cfg.scenarios) {
        sc.contagion = false;
        sc.spontaneous_rate = 0.0;
        nulls.push_back(incsim::pipeline::make_scenario(sc, table, cfg.master_seed));
    }
    for (const auto &s : nulls) {
        if (s.label == label) {
            anchor = &s;
        }
    }
    if (!anchor) {
        throw incsim::ConfigError("no scenario labelled '" + label + "'");
    }
    incsim::engine::CalibrationOptions opts;
    if (replicates) {
        opts.replicates = *replicates;
    }
    opts.tolerance = tolerance;
    opts.workers = workers.value_or(cfg.workers == 0 ? incsim::engine::default_worker_count() : cfg.workers);
    const auto cal = incsim::engine::calibrate_spontaneous_rate(world, *anchor, target, opts);
    ordered_json report{{"anchor", label},
                        {"target", target},
                        {"rate", cal.rate},
                        {"achieved", cal.achieved},
                        {"evaluations", cal.evaluations}};
    ordered_json ends = ordered_json::object();
    for (auto s : nulls) {
        s.spontaneous_monthly_prob = cal.rate;
        s.n_replicates = opts.replicates;
        ends[s.label] = incsim::engine::mean_end_prevalence(incsim::engine::run_ensemble(world, s, opts.workers));
    }
    report["end_prevalence"] = ends;
    std::cout << report.dump(2) << '\n';
    return kExitOk;
}

} // namespace

int main(int argc, char **argv) {
    CLI::App app{"Agent-based SIS model of incarceration on a synthetic kinship and friendship network"};
    app.require_subcommand(1);
    app.set_version_flag("--version", incsim::pipeline::kToolVersion);

    std::string config;
    std::string out;

    auto *synth = app.add_subcommand("synth-pop", "Generate a synthetic population");
    std::string edges_out;
    std::optional<std::uint64_t> pop_seed;
    synth->add_option("-c,--config", config, "Run config (JSON)")->check(CLI::ExistingFile);
    synth->add_option("-o,--out", out, "Population file to write");
    synth->add_option("--edges", edges_out, "Also write an edge list CSV");
    synth->add_option("--seed", pop_seed, "Override the generation seed");

    auto *fit = app.add_subcommand("fit-sentences", "Fit floored negative binomial sentence distributions");
    std::optional<double> mean;
    std::optional<double> median;
    std::string label;
    fit->add_option("-c,--config", config, "Fit every scenario in this config")->check(CLI::ExistingFile);
    fit->add_option("--mean", mean, "Target mean (months)");
    fit->add_option("--median", median, "Target median (months)");
    fit->add_option("--label", label, "Label for a single fit");

    auto *derive = app.add_subcommand("derive-probs", "Derive monthly transmission probabilities");
    std::string survey;
    int calibration_sentence = incsim::kCalibrationSentence;
    bool marginals = false;
    int samples = 100'000;
    std::uint64_t mc_seed = 1;
    derive->add_option("-c,--config", config, "Config supplying the survey table and scenarios")->check(CLI::ExistingFile);
    derive->add_option("--survey", survey, "Survey table CSV")->check(CLI::ExistingFile);
    derive->add_option("-s,--sentence", calibration_sentence, "Calibration sentence (months)")->capture_default_str();
    derive->add_flag("--marginals", marginals, "Add sentence-averaged probabilities per scenario");
    derive->add_option("--samples", samples, "Monte Carlo samples per cell")->capture_default_str();
    derive->add_option("--seed", mc_seed, "Monte Carlo seed")->capture_default_str();

    auto *run = app.add_subcommand("run", "Run every scenario's ensemble into a run directory");
    std::optional<unsigned> workers;
    std::optional<int> replicates;
    bool regenerate = false;
    run->add_option("-c,--config", config, "Run config (JSON)")->check(CLI::ExistingFile);
    run->add_option("-o,--out", out, "Run directory (default: <output root>/run-<timestamp>)");
    run->add_option("-j,--workers", workers, "Worker threads (0 = all cores)");
    run->add_option("-n,--replicates", replicates, "Override replicates per scenario");
    run->add_flag("--regenerate", regenerate, "Generate a fresh population for every replicate");

    auto *analyze = app.add_subcommand("analyze", "Compute summaries, p-values and recidivism reports for a run");
    std::string run_dir;
    std::string overlay;
    std::optional<int> start_year;
    std::optional<int> window;
    std::vector<std::string> compare;
    analyze->add_option("run_dir", run_dir, "Run directory")->required();
    analyze->add_option("--overlay", overlay, "External series CSV (year,group,prevalence)")->check(CLI::ExistingFile);
    analyze->add_option("--start-year", start_year, "Calendar year of month 0 for the overlay");
    analyze->add_option("--window", window, "Recidivism follow-up window (months)");
    analyze->add_option("--compare", compare, "Two scenario labels to test month by month")->expected(2);

    auto *ode = app.add_subcommand("ode", "Mean-field threshold analysis");
    std::optional<double> rate;
    std::vector<double> sentences;
    std::string ode_run_dir;
    ode->add_option("-p,--p", rate, "Transmissions per infected person per month");
    ode->add_option("-s,--sentence", sentences, "Mean sentence(s) to evaluate");
    ode->add_option("--run-dir", ode_run_dir, "Estimate p from a run's event logs");

    auto *calibrate = app.add_subcommand("calibrate-spontaneous", "Calibrate the contagion-free spontaneous rate");
    double target = 0.03;
    std::string anchor;
    double tolerance = 0.001;
    calibrate->add_option("-c,--config", config, "Run config (JSON)")->check(CLI::ExistingFile);
    calibrate->add_option("-t,--target", target, "Target end prevalence")->capture_default_str();
    calibrate->add_option("--scenario", anchor, "Scenario whose end prevalence is matched (default: first)");
    calibrate->add_option("-n,--replicates", replicates, "Replicates per evaluation (default 50)");
    calibrate->add_option("--tolerance", tolerance, "Accepted distance from the target")->capture_default_str();
    calibrate->add_option("-j,--workers", workers, "Worker threads (0 = all cores)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError &err) {
        const int code = app.exit(err);
        return code == 0 ? kExitOk : kExitInput;
    }

    try {
        if (*synth) {
            return cmd_synth_pop(config, out, edges_out, pop_seed);
        }
        if (*fit) {
            return cmd_fit_sentences(config, mean, median, label);
        }
        if (*derive) {
            return cmd_derive_probs(config, survey, calibration_sentence, marginals, samples, mc_seed);
        }
        if (*run) {
            return cmd_run(config, out, workers, replicates, regenerate);
        }
        if (*analyze) {
            return cmd_analyze(run_dir, overlay, start_year, window, compare);
        }
        if (*ode) {
            return cmd_ode(rate, sentences, ode_run_dir);
        }
        if (*calibrate) {
            return cmd_calibrate(config, target, anchor, replicates, tolerance, workers);
        }
    } catch (const incsim::ConfigError &err) {
        std::cerr << "configuration error: " << err.what() << '\n';
        return kExitInput;
    } catch (const incsim::InputError &err) {
        std::cerr << "input error: " << err.what() << '\n';
        return kExitInput;
    } catch (const fs::filesystem_error &err) {
        std::cerr << "input error: " << err.what() << '\n';
        return kExitInput;
    } catch (const std::exception &err) {
        std::cerr << "error: " << err.what() << '\n';
        return kExitContract;
    }
    return kExitContract;
}
