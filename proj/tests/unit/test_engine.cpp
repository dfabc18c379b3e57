#include <gtest/gtest.h>

#include <cmath>
#include <map>
#include <set>

#include "incsim/engine/ensemble.hpp"
#include "incsim/engine/simulation.hpp"
#include "support.hpp"

using namespace incsim;
using namespace incsim::engine;
using popgen::Population;
using popgen::RelationKind;

namespace {

/// Adults alive across the whole run; births and deaths land far outside it.
Population adults(int n, Sex sex = Sex::male) {
    Population pop;
    pop.burn_in_years = 150;
    pop.horizon_years = 200;
    pop.generation_seed = 4;
    for (int i = 0; i < n; ++i) {
        popgen::Agent a;
        a.id = i;
        a.sex = sex;
        a.birth_year = 110;
        a.death_year = 400;
        a.location = {0.5, 0.5};
        pop.agents.push_back(a);
    }
    return pop;
}

/// Every draw lands on exactly `months`.
SentenceDistribution fixed_sentence(int months) { return {1.0, 1.0 - 1e-15, months, "fixed"}; }

Scenario base_scenario(SentenceDistribution sentence = fit_negative_binomial(14, 10, "White").dist) {
    Scenario s;
    s.label = "test";
    s.sentence = sentence;
    s.transmission = testing_support::transmission();
    s.duration_months = 120;
    s.n_replicates = 4;
    s.master_seed = 77;
    return s;
}

TransmissionTable certain_table() {
    TransmissionTable t;
    for (auto role : kRoles) {
        for (auto sex : kSexes) {
            t.set(role, sex, 1.0);
        }
    }
    return t;
}

int infections_in(const std::vector<Event> &events, int month) {
    int n = 0;
    for (const auto &e : events) {
        n += e.month == month && is_infection(e.kind);
    }
    return n;
}

} // namespace

TEST(Scenario, Validation) {
    auto s = base_scenario();
    EXPECT_NO_THROW(s.validate());
    s.initial_prevalence = 1.0;
    EXPECT_THROW(s.validate(), ConfigError);
    s = base_scenario();
    s.duration_months = 0;
    EXPECT_THROW(s.validate(), ConfigError);
    s = base_scenario();
    s.spontaneous_monthly_prob = 0.01;
    EXPECT_THROW(s.validate(), ConfigError);
    s.allow_mixed_drivers = true;
    EXPECT_NO_THROW(s.validate());
    s = base_scenario();
    s.n_replicates = 0;
    EXPECT_THROW(s.validate(), ConfigError);
}

TEST(Seeding, ZeroPrevalenceSeedsNobody) {
    const auto pop = adults(50);
    const World world(pop, testing_support::transmission());
    auto s = base_scenario();
    s.initial_prevalence = 0.0;
    CounterRng rng(1);
    const auto state = Simulation(world, s).seed_initial_infections(rng);
    EXPECT_EQ(state.incarcerated, 0);
    EXPECT_EQ(state.alive, 50);
    for (auto st : state.status) {
        EXPECT_EQ(st, Status::susceptible);
    }
}

TEST(Seeding, RoundsToExactCount) {
    const auto pop = adults(1000);
    const World world(pop, testing_support::transmission());
    const Simulation sim(world, base_scenario());
    CounterRng rng(1);
    const auto state = sim.seed_initial_infections(rng);
    EXPECT_EQ(state.incarcerated, 10);
    EXPECT_EQ(state.log.size(), 10u);
    std::set<AgentId> distinct;
    for (const auto &e : state.log) {
        EXPECT_EQ(e.kind, EventKind::seed);
        EXPECT_EQ(e.month, 0);
        EXPECT_GE(e.sentence, 1);
        distinct.insert(e.agent);
    }
    EXPECT_EQ(distinct.size(), 10u);
}

TEST(Seeding, SeedSentencesFollowScenarioDistribution) {
    const auto pop = adults(1000);
    const World world(pop, testing_support::transmission());
    const auto s = base_scenario();
    const Simulation sim(world, s);
    double sum = 0.0;
    double sum_sq = 0.0;
    int n = 0;
    for (std::uint64_t seed = 0; seed < 3000; ++seed) {
        CounterRng rng(seed);
        for (const auto &e : sim.seed_initial_infections(rng).log) {
            sum += e.sentence;
            sum_sq += static_cast<double>(e.sentence) * e.sentence;
            ++n;
        }
    }
    const double mean = sum / n;
    const double se = std::sqrt((sum_sq / n - mean * mean) / n);
    EXPECT_NEAR(mean, sentence_mean(s.sentence), 4.0 * se);
}

TEST(Seeding, RejectsSaturatingPrevalence) {
    const auto pop = adults(2);
    const World world(pop, testing_support::transmission());
    auto s = base_scenario();
    s.initial_prevalence = 0.9;
    CounterRng rng(1);
    EXPECT_THROW(Simulation(world, s).seed_initial_infections(rng), ConfigError);
}

TEST(Seeding, SkipsAgentsBelowEligibilityAge) {
    auto pop = adults(200);
    for (int i = 0; i < 100; ++i) {
        pop.agents[static_cast<std::size_t>(i)].birth_year = 140; // about ten at month 0
    }
    const World world(pop, testing_support::transmission());
    auto s = base_scenario();
    s.initial_prevalence = 0.2;
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        CounterRng rng(seed);
        const auto state = Simulation(world, s).seed_initial_infections(rng);
        EXPECT_EQ(state.incarcerated, 20);
        for (const auto &e : state.log) {
            ASSERT_GE(e.agent, 100);
        }
    }
}

TEST(Step, SingleBrotherEdgeFrequency) {
    auto pop = adults(2);
    pop.edges.push_back({0, 1, RelationKind::sibling});
    const auto &table = testing_support::transmission();
    const World world(pop, table);
    auto s = base_scenario(fixed_sentence(5));
    s.initial_prevalence = 0.5;
    const Simulation sim(world, s);
    const double p = table.at(Role::brother, Sex::male);
    constexpr int trials = 100000;
    int hits = 0;
    for (int t = 0; t < trials; ++t) {
        CounterRng rng(derive_seed(2, static_cast<std::uint64_t>(t)));
        auto state = sim.seed_initial_infections(rng);
        const AgentId other = state.inmates.front() == 0 ? 1 : 0;
        if (t == 0) {
            EXPECT_DOUBLE_EQ(sim.infection_hazard(state, other), p);
        }
        sim.step_month(state, rng);
        hits += state.status[static_cast<std::size_t>(other)] == Status::incarcerated;
    }
    const double freq = static_cast<double>(hits) / trials;
    EXPECT_NEAR(freq, p, 3.0 * std::sqrt(p * (1.0 - p) / trials));
}

TEST(Step, ReleasedInmateDoesNotTransmitThatMonth) {
    auto pop = adults(2);
    pop.edges.push_back({0, 1, RelationKind::sibling});
    const World world(pop, certain_table());
    auto s = base_scenario(fixed_sentence(1));
    s.initial_prevalence = 0.5;
    s.transmission = certain_table();
    const Simulation sim(world, s);
    CounterRng rng(3);
    auto state = sim.seed_initial_infections(rng);
    const AgentId inmate = state.inmates.front();
    EXPECT_EQ(sim.infection_hazard(state, 1 - inmate), 0.0);
    sim.step_month(state, rng);
    EXPECT_EQ(state.incarcerated, 0);
    EXPECT_EQ(infections_in(state.log, 1), 0);
    EXPECT_EQ(state.released_at[static_cast<std::size_t>(inmate)], 1);
}

TEST(Step, SentenceOfTwoTransmitsOnce) {
    auto pop = adults(2);
    pop.edges.push_back({0, 1, RelationKind::sibling});
    const World world(pop, certain_table());
    auto s = base_scenario(fixed_sentence(2));
    s.initial_prevalence = 0.5;
    s.transmission = certain_table();
    const Simulation sim(world, s);
    CounterRng rng(3);
    auto state = sim.seed_initial_infections(rng);
    const AgentId first = state.inmates.front();
    const AgentId second = 1 - first;
    EXPECT_DOUBLE_EQ(sim.infection_hazard(state, second), 1.0);
    sim.step_month(state, rng);
    EXPECT_EQ(state.incarcerated, 2);
    EXPECT_EQ(state.log.back().source, first);
    EXPECT_EQ(state.log.back().kind, EventKind::transmission);
    // Month 2: the first inmate is released and cannot be reinfected in the same month.
    sim.step_month(state, rng);
    EXPECT_EQ(state.status[static_cast<std::size_t>(first)], Status::susceptible);
    EXPECT_EQ(state.incarcerated, 1);
    // Month 3: the second inmate is released before it could transmit.
    sim.step_month(state, rng);
    EXPECT_EQ(state.incarcerated, 0);
}

TEST(Step, NoInmatesMeansOnlyDemography) {
    const auto &pop = testing_support::small_population();
    const World world(pop, testing_support::transmission());
    auto s = base_scenario();
    s.initial_prevalence = 0.0;
    s.duration_months = 480;
    const auto trace = Simulation(world, s).run_replicate(5);
    for (const auto &c : trace.counts) {
        ASSERT_EQ(c.incarcerated, 0);
    }
    for (const auto &e : trace.events) {
        ASSERT_TRUE(e.kind == EventKind::birth || e.kind == EventKind::death);
    }
    EXPECT_NE(trace.counts.front().alive, trace.counts.back().alive);
}

TEST(Step, NullModelWithoutSeedsStaysAtZero) {
    const auto &pop = testing_support::small_population();
    const World world(pop, testing_support::transmission());
    auto s = base_scenario();
    s.initial_prevalence = 0.0;
    s.contagion_enabled = false;
    s.duration_months = 480;
    for (const auto &trace : run_ensemble(world, s, 2)) {
        for (int m = 0; m <= trace.duration(); ++m) {
            ASSERT_EQ(trace.prevalence(m), 0.0);
        }
    }
}

TEST(Replicate, CountsConserveAndReplay) {
    const auto &pop = testing_support::small_population();
    const World world(pop, testing_support::transmission());
    auto s = base_scenario();
    s.initial_prevalence = 0.05;
    s.duration_months = 480;
    for (std::uint64_t seed : {1ull, 2ull, 3ull}) {
        const auto trace = Simulation(world, s).run_replicate(seed);
        ASSERT_EQ(trace.counts.size(), 481u);
        EXPECT_EQ(replay_counts(trace.initial_alive, trace.duration(), trace.events), trace.counts);
        for (int m = 0; m <= trace.duration(); ++m) {
            const auto &c = trace.counts[static_cast<std::size_t>(m)];
            ASSERT_GE(c.incarcerated, 0);
            ASSERT_LE(c.incarcerated, c.alive);
            int alive = 0;
            for (std::size_t i = 0; i < pop.size(); ++i) {
                alive += world.timeline.alive_at(static_cast<AgentId>(i), m);
            }
            ASSERT_EQ(alive, c.alive) << "month " << m;
        }
    }
}

TEST(Replicate, LegalTransitionsOnly) {
    const auto &pop = testing_support::small_population();
    const World world(pop, certain_table());
    auto s = base_scenario();
    s.transmission = certain_table();
    s.initial_prevalence = 0.02;
    s.duration_months = 240;
    const auto trace = Simulation(world, s).run_replicate(9);
    std::vector<Status> status(pop.size(), Status::unborn);
    std::vector<int> released(pop.size(), -1);
    for (std::size_t i = 0; i < pop.size(); ++i) {
        const auto id = static_cast<AgentId>(i);
        status[i] = world.timeline.death_month[i] <= 0 ? Status::dead
                    : world.timeline.birth_month[i] <= 0 ? Status::susceptible
                                                          : Status::unborn;
        (void)id;
    }
    int infections = 0;
    for (const auto &e : trace.events) {
        auto &st = status[static_cast<std::size_t>(e.agent)];
        switch (e.kind) {
        case EventKind::birth:
            ASSERT_EQ(st, Status::unborn);
            st = Status::susceptible;
            break;
        case EventKind::death:
            ASSERT_TRUE(st == Status::susceptible || st == Status::incarcerated);
            st = Status::dead;
            break;
        case EventKind::release:
            ASSERT_EQ(st, Status::incarcerated);
            st = Status::susceptible;
            released[static_cast<std::size_t>(e.agent)] = e.month;
            break;
        default:
            ASSERT_EQ(st, Status::susceptible) << "infected while not susceptible";
            ASSERT_NE(released[static_cast<std::size_t>(e.agent)], e.month) << "reinfected in release month";
            ASSERT_GE(e.age_months, 12 * 15);
            ASSERT_GE(e.sentence, 1);
            if (e.kind == EventKind::transmission) {
                ASSERT_EQ(status[static_cast<std::size_t>(e.source)], Status::incarcerated);
            }
            st = Status::incarcerated;
            ++infections;
        }
    }
    EXPECT_GT(infections, 100);
}

TEST(Replicate, AdultChildGateHoldsUntilEighteen) {
    auto pop = adults(2, Sex::female);
    pop.agents[1].birth_year = 145; // about five at month 0
    pop.agents[1].mother = 0;
    pop.edges.push_back({0, 1, RelationKind::parent_child});
    const World world(pop, certain_table());
    auto s = base_scenario(fixed_sentence(400));
    s.transmission = certain_table();
    s.initial_prevalence = 0.5;
    s.eligibility_min_age = 0;
    s.duration_months = 300;
    const auto trace = Simulation(world, s).run_replicate(1);
    const AgentId seeded = trace.events.front().agent;
    if (seeded == 0) {
        for (const auto &e : trace.events) {
            if (e.kind == EventKind::transmission) {
                EXPECT_EQ(e.age_months, 18 * 12);
            }
        }
    } else {
        // The child infects the mother in month 1.
        EXPECT_EQ(infections_in(trace.events, 1), 1);
    }
}

TEST(Replicate, DeterministicBySeed) {
    const auto &pop = testing_support::small_population();
    const World world(pop, testing_support::transmission());
    const Simulation sim(world, base_scenario());
    const auto a = sim.run_replicate(42);
    const auto b = sim.run_replicate(42);
    EXPECT_EQ(a.counts, b.counts);
    EXPECT_EQ(a.events, b.events);
    EXPECT_NE(sim.run_replicate(43).events, a.events);
}

TEST(Hazard, IndependentOfIncarcerationHistory) {
    const auto &pop = testing_support::small_population();
    const World world(pop, testing_support::transmission());
    auto s = base_scenario();
    s.initial_prevalence = 0.1;
    const Simulation sim(world, s);
    CounterRng rng(8);
    auto state = sim.seed_initial_infections(rng);
    for (int m = 0; m < 30; ++m) {
        sim.step_month(state, rng);
    }
    int checked = 0;
    for (std::size_t i = 0; i < pop.size(); ++i) {
        const auto id = static_cast<AgentId>(i);
        const double h = sim.infection_hazard(state, id);
        if (h <= 0.0) {
            continue;
        }
        auto permuted = state;
        permuted.spell_count[i] = (state.spell_count[i] + 3) * 7;
        permuted.released_at[i] = state.released_at[i] >= 0 ? -1 : state.month - 5;
        std::reverse(permuted.log.begin(), permuted.log.end());
        ASSERT_EQ(sim.infection_hazard(permuted, id), h);
        ++checked;
    }
    EXPECT_GT(checked, 0);
}

TEST(Hazard, SpontaneousOnlyIsFlatRate) {
    const auto pop = adults(5);
    const World world(pop, testing_support::transmission());
    auto s = base_scenario();
    s.contagion_enabled = false;
    s.spontaneous_monthly_prob = 0.02;
    s.initial_prevalence = 0.0;
    const Simulation sim(world, s);
    CounterRng rng(1);
    const auto state = sim.seed_initial_infections(rng);
    for (AgentId id = 0; id < 5; ++id) {
        EXPECT_NEAR(sim.infection_hazard(state, id), 0.02, 1e-15);
    }
}

TEST(Ensemble, SingleReplicateMatchesDerivedSeed) {
    const auto &pop = testing_support::small_population();
    const World world(pop, testing_support::transmission());
    auto s = base_scenario();
    s.n_replicates = 1;
    const auto traces = run_ensemble(world, s, 1);
    ASSERT_EQ(traces.size(), 1u);
    const auto direct = Simulation(world, s).run_replicate(replicate_seed(s.master_seed, 0));
    EXPECT_EQ(traces[0].events, direct.events);
    EXPECT_EQ(traces[0].seed, replicate_seed(s.master_seed, 0));
}

TEST(Ensemble, IndependentOfWorkerCount) {
    const auto &pop = testing_support::small_population();
    const World world(pop, testing_support::transmission());
    auto s = base_scenario();
    s.n_replicates = 8;
    const auto one = run_ensemble(world, s, 1);
    for (unsigned workers : {2u, 3u, 8u}) {
        const auto many = run_ensemble(world, s, workers);
        ASSERT_EQ(many.size(), one.size());
        for (std::size_t i = 0; i < one.size(); ++i) {
            EXPECT_EQ(many[i].events, one[i].events);
            EXPECT_EQ(many[i].counts, one[i].counts);
        }
    }
}

TEST(Ensemble, WorkerExceptionsPropagate) {
    EXPECT_THROW(parallel_for(10, 3, [](std::size_t i) {
                     if (i == 7) {
                         throw InvariantError("boom");
                     }
                 }),
                 InvariantError);
}

TEST(Calibration, ZeroTargetGivesZeroRate) {
    const auto &pop = testing_support::small_population();
    const World world(pop, testing_support::transmission());
    auto s = base_scenario();
    s.contagion_enabled = false;
    s.initial_prevalence = 0.0;
    CalibrationOptions opts;
    opts.replicates = 2;
    EXPECT_EQ(calibrate_spontaneous_rate(world, s, 0.0, opts).rate, 0.0);
}

TEST(Calibration, EndPrevalenceMonotoneInRate) {
    const auto &pop = testing_support::small_population();
    const World world(pop, testing_support::transmission());
    auto s = base_scenario();
    s.contagion_enabled = false;
    s.n_replicates = 10;
    double previous = -1.0;
    for (double rate : {0.0, 0.002, 0.01}) {
        s.spontaneous_monthly_prob = rate;
        const double end = mean_end_prevalence(run_ensemble(world, s, 2));
        EXPECT_GE(end, previous) << rate;
        previous = end;
    }
}

TEST(Calibration, HitsReachableTarget) {
    const auto &pop = testing_support::small_population();
    const World world(pop, testing_support::transmission());
    auto s = base_scenario();
    s.contagion_enabled = false;
    CalibrationOptions opts;
    opts.replicates = 10;
    opts.workers = 2;
    const auto result = calibrate_spontaneous_rate(world, s, 0.03, opts);
    EXPECT_NEAR(result.achieved, 0.03, 0.001);
    EXPECT_GT(result.rate, 0.0);
    EXPECT_LT(result.rate, 0.05);
}

TEST(Calibration, UnreachableTargetNamesBracket) {
    const auto &pop = testing_support::small_population();
    const World world(pop, testing_support::transmission());
    auto s = base_scenario();
    s.contagion_enabled = false;
    CalibrationOptions opts;
    opts.replicates = 2;
    opts.upper = 1e-5;
    try {
        calibrate_spontaneous_rate(world, s, 0.5, opts);
        FAIL() << "expected CalibrationError";
    } catch (const CalibrationError &e) {
        EXPECT_NE(std::string(e.what()).find("bracket"), std::string::npos);
    }
    s.contagion_enabled = true;
    EXPECT_THROW(calibrate_spontaneous_rate(world, s, 0.03, opts), ConfigError);
}

TEST(Fingerprint, ChangesWithInputs) {
    const auto s = base_scenario();
    const auto f = scenario_fingerprint(s, "pop");
    EXPECT_EQ(f, scenario_fingerprint(s, "pop"));
    EXPECT_NE(f, scenario_fingerprint(s, "other"));
    auto t = s;
    t.initial_prevalence = 0.02;
    EXPECT_NE(f, scenario_fingerprint(t, "pop"));
}
