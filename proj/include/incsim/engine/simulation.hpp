#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "../error.hpp"
#include "../hash.hpp"
#include "../rng.hpp"
#include "../sentencing.hpp"
#include "../transmission.hpp"
#include "network.hpp"

namespace incsim::engine {

struct Scenario {
    std::string label;
    SentenceDistribution sentence;
    TransmissionTable transmission;
    double initial_prevalence = 0.01;
    int duration_months = 600;
    int n_replicates = 250;
    int eligibility_min_age = 15;
    double spontaneous_monthly_prob = 0.0;
    bool contagion_enabled = true;
    /// Contagion together with spontaneous incarceration must be asked for explicitly.
    bool allow_mixed_drivers = false;
    std::uint64_t master_seed = 0;

    void validate() const {
        if (!(initial_prevalence >= 0.0 && initial_prevalence < 1.0)) {
            throw ConfigError(label + ": initial_prevalence must lie in [0, 1)");
        }
        if (duration_months < 1) {
            throw ConfigError(label + ": duration_months must be at least 1");
        }
        if (n_replicates < 1) {
            throw ConfigError(label + ": n_replicates must be at least 1");
        }
        if (eligibility_min_age < 0) {
            throw ConfigError(label + ": eligibility_min_age must be non-negative");
        }
        if (!(spontaneous_monthly_prob >= 0.0 && spontaneous_monthly_prob <= 1.0)) {
            throw ConfigError(label + ": spontaneous_monthly_prob must lie in [0, 1]");
        }
        if (contagion_enabled && spontaneous_monthly_prob > 0.0 && !allow_mixed_drivers) {
            throw ConfigError(label + ": contagion and spontaneous incarceration both enabled; "
                                      "set allow_mixed_drivers to combine them");
        }
    }
};

enum class Status : std::uint8_t { unborn, susceptible, incarcerated, dead };

enum class EventKind : std::uint8_t { seed, transmission, spontaneous, release, death, birth };

inline constexpr std::string_view to_string(EventKind kind) noexcept {
    constexpr std::string_view names[] = {"seed", "transmission", "spontaneous", "release", "death", "birth"};
    return names[static_cast<int>(kind)];
}

inline bool is_infection(EventKind kind) noexcept {
    return kind == EventKind::seed || kind == EventKind::transmission || kind == EventKind::spontaneous;
}

/// Append-only log record. `source` is the transmitting inmate for transmission events;
/// `sentence` is set on infections; `age_months` is the agent's age at the event.
struct Event {
    int month = 0;
    AgentId agent = kNoAgent;
    EventKind kind = EventKind::birth;
    AgentId source = kNoAgent;
    int sentence = 0;
    int age_months = 0;

    friend bool operator==(const Event &, const Event &) = default;
};

struct MonthCounts {
    int alive = 0;
    int incarcerated = 0;

    friend bool operator==(const MonthCounts &, const MonthCounts &) = default;
};

struct SimState {
    int month = 0;
    std::vector<Status> status;
    std::vector<int> remaining_sentence;
    /// Month of the most recent release, used to bar same-month reinfection.
    std::vector<int> released_at;
    /// Completed and current incarcerations per agent within this replicate.
    std::vector<int> spell_count;
    /// Inmates in ascending id order.
    std::vector<AgentId> inmates;
    std::vector<Event> log;
    int alive = 0;
    int incarcerated = 0;
};

struct EpidemicTrace {
    std::string label;
    std::uint64_t seed = 0;
    std::string fingerprint;
    int initial_alive = 0;
    std::vector<MonthCounts> counts;
    std::vector<Event> events;

    int duration() const noexcept { return static_cast<int>(counts.size()) - 1; }
    double prevalence(int month) const {
        const auto &c = counts.at(static_cast<std::size_t>(month));
        return c.alive == 0 ? 0.0 : static_cast<double>(c.incarcerated) / c.alive;
    }
};

/// Recomputes the monthly counts from the event log alone.
inline std::vector<MonthCounts> replay_counts(int initial_alive, int duration, const std::vector<Event> &events) {
    std::vector<MonthCounts> out;
    out.reserve(static_cast<std::size_t>(duration) + 1);
    std::vector<AgentId> inside;
    MonthCounts current{initial_alive, 0};
    std::size_t next = 0;
    for (int month = 0; month <= duration; ++month) {
        for (; next < events.size() && events[next].month == month; ++next) {
            const auto &e = events[next];
            switch (e.kind) {
            case EventKind::birth:
                ++current.alive;
                break;
            case EventKind::death: {
                --current.alive;
                const auto it = std::find(inside.begin(), inside.end(), e.agent);
                if (it != inside.end()) {
                    inside.erase(it);
                    --current.incarcerated;
                }
                break;
            }
            case EventKind::release: {
                const auto it = std::find(inside.begin(), inside.end(), e.agent);
                if (it != inside.end()) {
                    inside.erase(it);
                }
                --current.incarcerated;
                break;
            }
            default:
                inside.push_back(e.agent);
                ++current.incarcerated;
            }
        }
        if (next < events.size() && events[next].month < month) {
            throw InputError("event log is not in month order");
        }
        out.push_back(current);
    }
    return out;
}

/// Runs replicates of one scenario over a world. Stateless between replicates.
class Simulation {
  public:
    Simulation(const World &world, Scenario scenario)
        : world_(&world), scenario_(std::move(scenario)), sampler_(scenario_.sentence) {
        scenario_.validate();
    }

    const Scenario &scenario() const noexcept { return scenario_; }
    const World &world() const noexcept { return *world_; }

    bool eligible(const SimState &state, AgentId id, int month) const {
        const auto i = static_cast<std::size_t>(id);
        return state.status[i] == Status::susceptible && state.released_at[i] != month &&
               world_->timeline.age_months(id, month) >= 12 * scenario_.eligibility_min_age;
    }

    /// Month-0 state: statuses from the timeline plus seeded infections drawn uniformly
    /// without replacement from alive agents at or above the eligibility age.
    SimState seed_initial_infections(CounterRng &rng) const {
        const auto &tl = world_->timeline;
        const auto n = tl.size();
        SimState state;
        state.status.assign(n, Status::unborn);
        state.remaining_sentence.assign(n, 0);
        state.released_at.assign(n, -1);
        state.spell_count.assign(n, 0);
        std::vector<AgentId> pool;
        for (std::size_t i = 0; i < n; ++i) {
            const auto id = static_cast<AgentId>(i);
            if (tl.death_month[i] <= 0) {
                state.status[i] = Status::dead;
            } else if (tl.birth_month[i] <= 0) {
                state.status[i] = Status::susceptible;
                ++state.alive;
                if (eligible(state, id, 0)) {
                    pool.push_back(id);
                }
            }
        }
        if (pool.empty()) {
            throw ConfigError(scenario_.label + ": no agents eligible for seeding at month 0");
        }
        const auto count = static_cast<std::size_t>(std::llround(scenario_.initial_prevalence * static_cast<double>(pool.size())));
        if (count >= pool.size() && count > 0) {
            throw ConfigError(scenario_.label + ": initial prevalence seeds the entire eligible pool");
        }
        for (std::size_t k = 0; k < count; ++k) {
            const auto j = static_cast<std::size_t>(rng.uniform_int(static_cast<int>(k), static_cast<int>(pool.size()) - 1));
            std::swap(pool[k], pool[j]);
        }
        std::vector<AgentId> seeds(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(count));
        std::sort(seeds.begin(), seeds.end());
        for (AgentId id : seeds) {
            infect(state, id, EventKind::seed, kNoAgent, rng);
        }
        return state;
    }

    /// Advances one month: demographics, releases, contagion, spontaneous incarceration.
    void step_month(SimState &state, CounterRng &rng) const {
        const int month = ++state.month;
        apply_demography(state, month);
        apply_releases(state, month);

        std::vector<std::pair<AgentId, AgentId>> infected; // (agent, source)
        if (scenario_.contagion_enabled) {
            std::vector<bool> &hit = scratch_hit(state.status.size());
            for (AgentId inmate : state.inmates) {
                for (const auto &c : world_->network.contacts(inmate)) {
                    if (c.to_prob <= 0.0 || month < c.to_gate || hit[static_cast<std::size_t>(c.other)] ||
                        !eligible(state, c.other, month)) {
                        continue;
                    }
                    if (rng.bernoulli(c.to_prob)) {
                        hit[static_cast<std::size_t>(c.other)] = true;
                        infected.emplace_back(c.other, inmate);
                    }
                }
            }
            for (const auto &[agent, source] : infected) {
                hit[static_cast<std::size_t>(agent)] = false;
            }
        }
        const std::size_t transmitted = infected.size();
        if (scenario_.spontaneous_monthly_prob > 0.0) {
            std::vector<bool> &hit = scratch_hit(state.status.size());
            for (std::size_t k = 0; k < transmitted; ++k) {
                hit[static_cast<std::size_t>(infected[k].first)] = true;
            }
            for (std::size_t i = 0; i < state.status.size(); ++i) {
                const auto id = static_cast<AgentId>(i);
                if (!hit[i] && eligible(state, id, month) && rng.bernoulli(scenario_.spontaneous_monthly_prob)) {
                    infected.emplace_back(id, kNoAgent);
                }
            }
            for (std::size_t k = 0; k < transmitted; ++k) {
                hit[static_cast<std::size_t>(infected[k].first)] = false;
            }
        }
        for (std::size_t k = 0; k < infected.size(); ++k) {
            infect(state, infected[k].first, k < transmitted ? EventKind::transmission : EventKind::spontaneous,
                   infected[k].second, rng);
        }
        if (state.incarcerated != static_cast<int>(state.inmates.size()) || state.incarcerated > state.alive) {
            throw InvariantError(scenario_.label + ": count mismatch at month " + std::to_string(month));
        }
    }

    /// Probability that susceptible `id` is incarcerated in the next month given the current
    /// statuses. Takes no input from the agent's own incarceration history.
    double infection_hazard(const SimState &state, AgentId id) const {
        const int month = state.month + 1;
        if (world_->timeline.age_months(id, month) < 12 * scenario_.eligibility_min_age ||
            state.status[static_cast<std::size_t>(id)] != Status::susceptible || !world_->timeline.alive_at(id, month)) {
            return 0.0;
        }
        double escape = 1.0 - scenario_.spontaneous_monthly_prob;
        if (scenario_.contagion_enabled) {
            for (const auto &c : world_->network.contacts(id)) {
                // Inmates released or dying before the contagion phase do not transmit.
                if (state.status[static_cast<std::size_t>(c.other)] == Status::incarcerated && month >= c.from_gate &&
                    state.remaining_sentence[static_cast<std::size_t>(c.other)] > 1 &&
                    world_->timeline.alive_at(c.other, month)) {
                    escape *= 1.0 - c.from_prob;
                }
            }
        }
        return 1.0 - escape;
    }

    EpidemicTrace run_replicate(std::uint64_t replicate_seed) const {
        CounterRng rng(replicate_seed);
        SimState state = seed_initial_infections(rng);
        EpidemicTrace trace;
        trace.label = scenario_.label;
        trace.seed = replicate_seed;
        trace.initial_alive = state.alive;
        trace.counts.reserve(static_cast<std::size_t>(scenario_.duration_months) + 1);
        trace.counts.push_back({state.alive, state.incarcerated});
        for (int m = 0; m < scenario_.duration_months; ++m) {
            step_month(state, rng);
            trace.counts.push_back({state.alive, state.incarcerated});
        }
        trace.events = std::move(state.log);
        return trace;
    }

  private:
    void infect(SimState &state, AgentId id, EventKind kind, AgentId source, CounterRng &rng) const {
        const auto i = static_cast<std::size_t>(id);
        const int sentence = sampler_(rng);
        state.status[i] = Status::incarcerated;
        state.remaining_sentence[i] = sentence;
        ++state.spell_count[i];
        ++state.incarcerated;
        state.inmates.insert(std::lower_bound(state.inmates.begin(), state.inmates.end(), id), id);
        state.log.push_back({state.month, id, kind, source, sentence, world_->timeline.age_months(id, state.month)});
    }

    void remove_inmate(SimState &state, AgentId id) const {
        const auto it = std::lower_bound(state.inmates.begin(), state.inmates.end(), id);
        state.inmates.erase(it);
        --state.incarcerated;
    }

    void apply_demography(SimState &state, int month) const {
        const auto &tl = world_->timeline;
        if (month > tl.last_month()) {
            return;
        }
        for (AgentId id : tl.deaths_at[static_cast<std::size_t>(month)]) {
            const auto i = static_cast<std::size_t>(id);
            if (state.status[i] == Status::incarcerated) {
                remove_inmate(state, id);
            }
            state.status[i] = Status::dead;
            --state.alive;
            state.log.push_back({month, id, EventKind::death, kNoAgent, 0, tl.age_months(id, month)});
        }
        for (AgentId id : tl.births_at[static_cast<std::size_t>(month)]) {
            state.status[static_cast<std::size_t>(id)] = Status::susceptible;
            ++state.alive;
            state.log.push_back({month, id, EventKind::birth, kNoAgent, 0, 0});
        }
    }

    void apply_releases(SimState &state, int month) const {
        std::vector<AgentId> released;
        for (AgentId id : state.inmates) {
            const auto i = static_cast<std::size_t>(id);
            if (--state.remaining_sentence[i] <= 0) {
                released.push_back(id);
            }
        }
        for (AgentId id : released) {
            const auto i = static_cast<std::size_t>(id);
            remove_inmate(state, id);
            state.status[i] = Status::susceptible;
            state.released_at[i] = month;
            state.log.push_back({month, id, EventKind::release, kNoAgent, 0, world_->timeline.age_months(id, month)});
        }
    }

    std::vector<bool> &scratch_hit(std::size_t n) const {
        thread_local std::vector<bool> hit;
        if (hit.size() != n) {
            hit.assign(n, false);
        }
        return hit;
    }

    const World *world_;
    Scenario scenario_;
    SentenceSampler sampler_;
};

/// Input fingerprint: scenario parameters plus the population's hash.
inline std::string scenario_fingerprint(const Scenario &s, std::string_view population_hash) {
    Fnv1a h;
    const auto add = [&](const auto &v) { h.update(csv::format(v)).update("|"); };
    h.update(s.label).update("|");
    add(s.sentence.dispersion);
    add(s.sentence.success_prob);
    add(s.sentence.floor);
    for (auto role : kRoles) {
        for (auto sex : kSexes) {
            add(s.transmission.at(role, sex));
        }
    }
    add(s.transmission.calibration_sentence);
    add(s.initial_prevalence);
    add(s.duration_months);
    add(s.n_replicates);
    add(s.eligibility_min_age);
    add(s.spontaneous_monthly_prob);
    add(static_cast<int>(s.contagion_enabled));
    add(static_cast<long long>(s.master_seed));
    h.update(population_hash);
    return h.hex();
}

} // namespace incsim::engine
