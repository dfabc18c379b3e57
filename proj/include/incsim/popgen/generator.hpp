#pragma once

#include <algorithm>
#include <cstddef>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "../error.hpp"
#include "../rng.hpp"
#include "population.hpp"
#include "tables.hpp"

namespace incsim::popgen {

/// Draws an index from a categorical distribution given as probabilities.
inline int draw_categorical(std::span<const double> dist, CounterRng &rng) {
    const double u = rng.uniform();
    double cumulative = 0.0;
    for (std::size_t k = 0; k < dist.size(); ++k) {
        cumulative += dist[k];
        if (u < cumulative) {
            return static_cast<int>(k);
        }
    }
    // Rounding slack: fall back to the last category with positive mass.
    for (std::size_t k = dist.size(); k-- > 0;) {
        if (dist[k] > 0.0) {
            return static_cast<int>(k);
        }
    }
    return 0;
}

inline int draw_poisson(double mean, CounterRng &rng) {
    if (mean <= 0.0) {
        return 0;
    }
    std::poisson_distribution<int> dist(mean);
    return dist(rng);
}

/// Walks the age-indexed hazard: death at age a with probability q[a] given survival to a,
/// certain death at kMaxLifespan.
inline int sample_lifespan(Sex sex, const DemographicTables &tables, CounterRng &rng) {
    const auto &table = sex == Sex::female ? tables.life_table_female : tables.life_table_male;
    for (int age = 0; age < static_cast<int>(table.size()) && age < kMaxLifespan; ++age) {
        if (rng.uniform() < table[static_cast<std::size_t>(age)]) {
            return age;
        }
    }
    return kMaxLifespan;
}

/// Expected lifespan implied by a hazard table (same convention as sample_lifespan).
inline double expected_lifespan(std::span<const double> table) {
    double survive = 1.0;
    double mean = 0.0;
    for (std::size_t age = 0; age < table.size() && age < static_cast<std::size_t>(kMaxLifespan); ++age) {
        mean += survive * table[age] * static_cast<double>(age);
        survive *= 1.0 - table[age];
    }
    return mean + survive * kMaxLifespan;
}

/// The k candidates closest to `origin`; equal distances are ordered by lower id.
inline std::vector<AgentId> nearest_agents(Location origin, std::span<const Agent> candidates,
                                           std::size_t k) {
    std::vector<std::pair<double, AgentId>> ranked;
    ranked.reserve(candidates.size());
    for (const auto &c : candidates) {
        ranked.emplace_back(squared_distance(origin, c.location), c.id);
    }
    k = std::min(k, ranked.size());
    std::partial_sort(ranked.begin(), ranked.begin() + static_cast<std::ptrdiff_t>(k), ranked.end());
    std::vector<AgentId> out;
    out.reserve(k);
    for (std::size_t i = 0; i < k; ++i) {
        out.push_back(ranked[i].second);
    }
    return out;
}

inline RelationEdge make_friendship(AgentId a, AgentId b) {
    return {std::min(a, b), std::max(a, b), RelationKind::friendship};
}

/// Draws the agent's friend count and ties it to that many nearest candidates, less any
/// friendships the agent already has. `candidates` must already be filtered (alive, aged
/// 9-11, non-sibling, not yet friends).
inline std::vector<RelationEdge> assign_friends(const Agent &agent, std::span<const Agent> candidates,
                                                std::span<const double> friend_count_dist,
                                                CounterRng &rng, std::size_t existing_friends = 0) {
    const auto drawn = static_cast<std::size_t>(draw_categorical(friend_count_dist, rng));
    const auto wanted = drawn > existing_friends ? drawn - existing_friends : 0;
    std::vector<RelationEdge> edges;
    for (AgentId id : nearest_agents(agent.location, candidates, wanted)) {
        edges.push_back(make_friendship(agent.id, id));
    }
    return edges;
}

/// Per axis: uniform within ±0.05 of the parents' midpoint, clamped to the unit square.
inline Location child_location(Location mother, std::optional<Location> father, CounterRng &rng) {
    constexpr double kHalfWidth = 0.05;
    const Location mid = father ? Location{0.5 * (mother.x + father->x), 0.5 * (mother.y + father->y)}
                                : mother;
    const auto jitter = [&](double centre) {
        const double v = centre - kHalfWidth + 2.0 * kHalfWidth * rng.uniform();
        return std::clamp(v, 0.0, 1.0);
    };
    const double x = jitter(mid.x);
    const double y = jitter(mid.y);
    return {x, y};
}

/// Birth years of the mother's children: the first at age_first_birth, each later one at
/// least a year after the previous (Poisson gap floored at 1). Births in or after the
/// mother's death year are dropped.
inline std::vector<int> schedule_children(const Agent &mother, const DemographicTables &tables,
                                          CounterRng &rng) {
    std::vector<int> years;
    if (!mother.age_first_birth || mother.planned_children < 1) {
        return years;
    }
    int year = mother.birth_year + *mother.age_first_birth;
    for (int k = 0; k < mother.planned_children; ++k) {
        if (k > 0) {
            year += std::max(1, draw_poisson(tables.child_gap_mean, rng));
        }
        if (year >= mother.death_year) {
            break;
        }
        years.push_back(year);
    }
    return years;
}

/// Mutable population under construction; ids are indices into agents().
class PopulationBuilder {
  public:
    explicit PopulationBuilder(const DemographicTables &tables) : tables_(&tables) {}

    AgentId add_agent(Agent agent) {
        agent.id = static_cast<AgentId>(agents_.size());
        if (agent.birth_year < 0) {
            throw ConfigError("birth years must be non-negative");
        }
        const auto year = static_cast<std::size_t>(agent.birth_year);
        if (by_birth_year_.size() <= year) {
            by_birth_year_.resize(year + 1);
        }
        by_birth_year_[year].push_back(agent.id);
        agents_.push_back(agent);
        neighbours_.emplace_back();
        children_.emplace_back();
        married_.push_back(false);
        friend_count_.push_back(0);
        return agent.id;
    }

    void add_edge(const RelationEdge &edge) {
        if (edge.a == edge.b) {
            throw InvariantError("self edge on agent " + std::to_string(edge.a));
        }
        if (has_edge(edge.a, edge.b)) {
            throw InvariantError("duplicate edge " + std::to_string(edge.a) + "-" + std::to_string(edge.b));
        }
        neighbours_[static_cast<std::size_t>(edge.a)].push_back(edge.b);
        neighbours_[static_cast<std::size_t>(edge.b)].push_back(edge.a);
        if (edge.kind == RelationKind::spouse) {
            married_[static_cast<std::size_t>(edge.a)] = true;
            married_[static_cast<std::size_t>(edge.b)] = true;
        }
        if (edge.kind == RelationKind::friendship) {
            ++friend_count_[static_cast<std::size_t>(edge.a)];
            ++friend_count_[static_cast<std::size_t>(edge.b)];
        }
        edges_.push_back(edge);
    }

    bool has_edge(AgentId a, AgentId b) const {
        const auto &n = neighbours_[static_cast<std::size_t>(a)];
        return std::find(n.begin(), n.end(), b) != n.end();
    }

    bool is_married(AgentId id) const { return married_[static_cast<std::size_t>(id)]; }
    std::size_t friend_count(AgentId id) const { return friend_count_[static_cast<std::size_t>(id)]; }

    bool is_ancestor(AgentId maybe_ancestor, AgentId of) const {
        std::vector<AgentId> stack{of};
        while (!stack.empty()) {
            const auto &a = agents_[static_cast<std::size_t>(stack.back())];
            stack.pop_back();
            for (AgentId parent : {a.mother, a.father}) {
                if (parent == kNoAgent) {
                    continue;
                }
                if (parent == maybe_ancestor) {
                    return true;
                }
                stack.push_back(parent);
            }
        }
        return false;
    }

    bool are_siblings(AgentId a, AgentId b) const {
        const auto &x = agents_[static_cast<std::size_t>(a)];
        const auto &y = agents_[static_cast<std::size_t>(b)];
        return x.mother != kNoAgent && x.mother == y.mother;
    }

    std::span<const AgentId> born_in(int year) const {
        if (year < 0 || static_cast<std::size_t>(year) >= by_birth_year_.size()) {
            return {};
        }
        return by_birth_year_[static_cast<std::size_t>(year)];
    }

    /// Alive, non-sibling agents aged 9-11 in `year` who are not yet friends of `agent`.
    std::vector<Agent> friend_candidates(AgentId agent, int year) const {
        std::vector<Agent> out;
        for (int age = kFriendCandidateMinAge; age <= kFriendCandidateMaxAge; ++age) {
            for (AgentId id : born_in(year - age)) {
                const auto &c = agents_[static_cast<std::size_t>(id)];
                if (id == agent || !c.alive_in(year) || are_siblings(agent, id) || has_edge(agent, id)) {
                    continue;
                }
                out.push_back(c);
            }
        }
        return out;
    }

    /// Alive unmarried males aged 0-9 years older than the mother with no tie to her and
    /// no line of descent between them.
    std::vector<Agent> partner_candidates(AgentId mother_id, int year) const {
        const auto &mother = agents_[static_cast<std::size_t>(mother_id)];
        std::vector<Agent> out;
        for (int gap = tables_->partner_age_gap_min; gap <= tables_->partner_age_gap_max; ++gap) {
            for (AgentId id : born_in(mother.birth_year - gap)) {
                const auto &c = agents_[static_cast<std::size_t>(id)];
                if (c.sex != Sex::male || !c.alive_in(year) || is_married(id) || has_edge(mother_id, id) ||
                    is_ancestor(id, mother_id) || is_ancestor(mother_id, id)) {
                    continue;
                }
                out.push_back(c);
            }
        }
        return out;
    }

    /// Nearest eligible partner (ties: lower id), or none for a single mother.
    std::optional<AgentId> assign_partner(AgentId mother_id, int year) const {
        const auto candidates = partner_candidates(mother_id, year);
        const auto nearest = nearest_agents(agents_[static_cast<std::size_t>(mother_id)].location, candidates, 1);
        if (nearest.empty()) {
            return std::nullopt;
        }
        return nearest.front();
    }

    void record_child(AgentId mother, AgentId child) { children_[static_cast<std::size_t>(mother)].push_back(child); }

    std::span<const AgentId> children_of(AgentId mother) const {
        return children_[static_cast<std::size_t>(mother)];
    }

    const std::vector<Agent> &agents() const noexcept { return agents_; }
    const Agent &agent(AgentId id) const { return agents_[static_cast<std::size_t>(id)]; }
    Agent &agent(AgentId id) { return agents_[static_cast<std::size_t>(id)]; }
    const std::vector<RelationEdge> &edges() const noexcept { return edges_; }

  private:
    const DemographicTables *tables_;
    std::vector<Agent> agents_;
    std::vector<RelationEdge> edges_;
    std::vector<std::vector<AgentId>> neighbours_;
    std::vector<std::vector<AgentId>> children_;
    std::vector<bool> married_;
    std::vector<std::size_t> friend_count_;
    std::vector<std::vector<AgentId>> by_birth_year_;
};

struct GenerationParams {
    int seed_count = 1500;
    int horizon_years = 200;
    int burn_in_years = 150;
    std::uint64_t rng_seed = 1;
    /// Seed cohort birth years are uniform on [0, seed_birth_year_max].
    int seed_birth_year_max = 25;
    /// When set, a drawn friend count is the agent's total number of friends, so ties
    /// received earlier from older cohort members count towards it. Otherwise every draw
    /// adds that many new ties.
    bool friend_count_is_total = true;
};

namespace detail {

inline void initialise_life(Agent &agent, const DemographicTables &tables, CounterRng &rng) {
    const int lifespan = sample_lifespan(agent.sex, tables, rng);
    // A death inside the first year still leaves the agent alive in its birth year.
    agent.death_year = agent.birth_year + std::max(lifespan, 1);
    if (agent.sex == Sex::female) {
        agent.age_first_birth = kMinAgeFirstBirth + draw_poisson(tables.age_first_birth_offset_mean, rng);
        agent.planned_children = draw_categorical(tables.fertility_dist, rng);
    }
}

class Generator {
  public:
    Generator(const DemographicTables &tables, const GenerationParams &params)
        : tables_(tables), params_(params), builder_(tables), rng_(params.rng_seed),
          births_(static_cast<std::size_t>(params.horizon_years)),
          first_births_(static_cast<std::size_t>(params.horizon_years)),
          partner_(0) {}

    Population run() {
        seed_agents();
        for (int year = 0; year < params_.horizon_years; ++year) {
            start_families(year);
            deliver_births(year);
            form_friendships(year);
        }
        return retain();
    }

  private:
    void index_agent(AgentId id) {
        const auto &a = builder_.agent(id);
        partner_.push_back(kNoAgent);
        if (a.sex == Sex::female && a.planned_children > 0 && a.age_first_birth) {
            const int year = a.birth_year + *a.age_first_birth;
            if (year < params_.horizon_years && year < a.death_year) {
                first_births_[static_cast<std::size_t>(year)].push_back(id);
            }
        }
    }

    void seed_agents() {
        for (int i = 0; i < params_.seed_count; ++i) {
            Agent agent;
            // The first two seeds are a guaranteed female/male pair.
            agent.sex = i == 0 ? Sex::female : i == 1 ? Sex::male : (rng_.bernoulli(0.5) ? Sex::male : Sex::female);
            agent.birth_year = rng_.uniform_int(0, params_.seed_birth_year_max);
            agent.location = {rng_.uniform(), rng_.uniform()};
            initialise_life(agent, tables_, rng_);
            index_agent(builder_.add_agent(agent));
        }
    }

    void start_families(int year) {
        for (AgentId mother : first_births_[static_cast<std::size_t>(year)]) {
            const auto partner = builder_.assign_partner(mother, year);
            if (partner) {
                builder_.add_edge({mother, *partner, RelationKind::spouse});
                partner_[static_cast<std::size_t>(mother)] = *partner;
            }
            for (int birth : schedule_children(builder_.agent(mother), tables_, rng_)) {
                if (birth < params_.horizon_years) {
                    births_[static_cast<std::size_t>(birth)].push_back(mother);
                }
            }
        }
    }

    void deliver_births(int year) {
        auto &mothers = births_[static_cast<std::size_t>(year)];
        std::sort(mothers.begin(), mothers.end());
        for (AgentId mother_id : mothers) {
            const AgentId father_id = partner_[static_cast<std::size_t>(mother_id)];
            const Agent &mother = builder_.agent(mother_id);
            Agent child;
            child.sex = rng_.bernoulli(0.5) ? Sex::male : Sex::female;
            child.birth_year = year;
            child.mother = mother_id;
            child.father = father_id;
            const auto father_loc = father_id == kNoAgent
                                        ? std::optional<Location>{}
                                        : std::optional<Location>{builder_.agent(father_id).location};
            child.location = child_location(mother.location, father_loc, rng_);
            initialise_life(child, tables_, rng_);
            const AgentId id = builder_.add_agent(child);
            index_agent(id);
            builder_.add_edge({mother_id, id, RelationKind::parent_child});
            if (father_id != kNoAgent) {
                builder_.add_edge({father_id, id, RelationKind::parent_child});
            }
            for (AgentId sibling : builder_.children_of(mother_id)) {
                builder_.add_edge({sibling, id, RelationKind::sibling});
            }
            builder_.record_child(mother_id, id);
        }
    }

    void form_friendships(int year) {
        const auto turning_ten = builder_.born_in(year - kFriendFormationAge);
        const std::vector<AgentId> ids(turning_ten.begin(), turning_ten.end());
        for (AgentId id : ids) {
            if (!builder_.agent(id).alive_in(year)) {
                continue;
            }
            const auto candidates = builder_.friend_candidates(id, year);
            const auto existing = params_.friend_count_is_total ? builder_.friend_count(id) : 0;
            for (const auto &edge :
                 assign_friends(builder_.agent(id), candidates, tables_.friend_count_dist, rng_, existing)) {
                builder_.add_edge(edge);
            }
        }
    }

    Population retain() {
        const auto &all = builder_.agents();
        Population pop;
        pop.burn_in_years = params_.burn_in_years;
        pop.horizon_years = params_.horizon_years;
        pop.seed_count = params_.seed_count;
        pop.generation_seed = params_.rng_seed;

        std::vector<AgentId> remap(all.size(), kNoAgent);
        for (const auto &a : all) {
            if (a.death_year > params_.burn_in_years) {
                remap[static_cast<std::size_t>(a.id)] = static_cast<AgentId>(pop.agents.size());
                pop.agents.push_back(a);
            }
        }
        const auto mapped = [&](AgentId id) { return id == kNoAgent ? kNoAgent : remap[static_cast<std::size_t>(id)]; };
        for (auto &a : pop.agents) {
            a.id = mapped(a.id);
            a.mother = mapped(a.mother);
            a.father = mapped(a.father);
        }
        for (const auto &e : builder_.edges()) {
            const AgentId a = mapped(e.a);
            const AgentId b = mapped(e.b);
            if (a != kNoAgent && b != kNoAgent) {
                pop.edges.push_back({a, b, e.kind});
            }
        }

        auto &stats = pop.stats;
        stats.total_generated = all.size();
        stats.total_edges = builder_.edges().size();
        stats.retained = pop.agents.size();
        stats.retained_edges = pop.edges.size();
        stats.mean_degree = stats.retained == 0 ? 0.0
                                                : 2.0 * static_cast<double>(stats.retained_edges) /
                                                      static_cast<double>(stats.retained);
        std::size_t children = 0;
        for (const auto &a : all) {
            if (a.sex != Sex::female) {
                continue;
            }
            if (a.planned_children > 0 && a.age_first_birth &&
                a.birth_year + *a.age_first_birth < std::min(a.death_year, params_.horizon_years)) {
                (partner_[static_cast<std::size_t>(a.id)] == kNoAgent ? stats.single_mothers : stats.couples) += 1;
            }
            const int complete_year = a.birth_year + kCompletedFertilityAge;
            if (complete_year < params_.horizon_years && a.alive_in(complete_year)) {
                ++stats.completed_fertility_women;
                children += builder_.children_of(a.id).size();
            }
        }
        stats.completed_fertility_mean = stats.completed_fertility_women == 0
                                             ? 0.0
                                             : static_cast<double>(children) /
                                                   static_cast<double>(stats.completed_fertility_women);
        return pop;
    }

    const DemographicTables &tables_;
    GenerationParams params_;
    PopulationBuilder builder_;
    CounterRng rng_;
    std::vector<std::vector<AgentId>> births_;
    std::vector<std::vector<AgentId>> first_births_;
    std::vector<AgentId> partner_;
};

} // namespace detail

/// Runs the yearly demographic loop and returns the population retained after burn-in.
/// Deterministic in (tables, params).
inline Population generate_population(const DemographicTables &tables, const GenerationParams &params) {
    if (params.seed_count < 2) {
        throw ConfigError("seed_count must be at least 2 to form a couple");
    }
    if (params.burn_in_years < 0 || params.horizon_years <= params.burn_in_years) {
        throw ConfigError("require horizon_years > burn_in_years >= 0");
    }
    if (params.seed_birth_year_max < 0) {
        throw ConfigError("seed_birth_year_max must be non-negative");
    }
    tables.validate();
    return detail::Generator(tables, params).run();
}

} // namespace incsim::popgen
