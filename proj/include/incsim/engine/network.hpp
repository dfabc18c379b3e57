#pragma once

#include <algorithm>
#include <cstddef>
#include <limits>
#include <span>
#include <vector>

#include "../popgen/population.hpp"
#include "../rng.hpp"
#include "../transmission.hpp"

namespace incsim::engine {

inline constexpr int kNeverGated = std::numeric_limits<int>::min();

/// Monthly clock for a population: month = 12 (year - burn_in) + u with u uniform on
/// {0..11}, drawn once per birth and death from a stream keyed by the generation seed.
/// Agent i is alive in months [birth_month[i], death_month[i]).
struct Timeline {
    std::vector<int> birth_month;
    std::vector<int> death_month;
    std::vector<Sex> sex;
    /// Agents born / dying in month m, for m in [1, last_month].
    std::vector<std::vector<AgentId>> births_at;
    std::vector<std::vector<AgentId>> deaths_at;

    std::size_t size() const noexcept { return birth_month.size(); }
    bool alive_at(AgentId id, int month) const noexcept {
        const auto i = static_cast<std::size_t>(id);
        return birth_month[i] <= month && month < death_month[i];
    }
    int age_months(AgentId id, int month) const noexcept {
        return month - birth_month[static_cast<std::size_t>(id)];
    }
    int last_month() const noexcept { return static_cast<int>(births_at.size()) - 1; }
};

inline Timeline build_timeline(const popgen::Population &pop) {
    Timeline t;
    const auto n = pop.agents.size();
    t.birth_month.resize(n);
    t.death_month.resize(n);
    t.sex.resize(n);
    CounterRng rng(derive_seed(pop.generation_seed, "monthly-timeline"));
    int last = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const auto &a = pop.agents[i];
        t.sex[i] = a.sex;
        t.birth_month[i] = 12 * (a.birth_year - pop.burn_in_years) + rng.uniform_int(0, 11);
        t.death_month[i] = 12 * (a.death_year - pop.burn_in_years) + rng.uniform_int(0, 11);
        last = std::max(last, t.death_month[i]);
    }
    t.births_at.resize(static_cast<std::size_t>(last) + 1);
    t.deaths_at.resize(static_cast<std::size_t>(last) + 1);
    for (std::size_t i = 0; i < n; ++i) {
        const auto id = static_cast<AgentId>(i);
        if (t.birth_month[i] >= 1) {
            t.births_at[static_cast<std::size_t>(t.birth_month[i])].push_back(id);
        }
        if (t.death_month[i] >= 1) {
            t.deaths_at[static_cast<std::size_t>(t.death_month[i])].push_back(id);
        }
    }
    return t;
}

/// One endpoint's view of a tie. `to_*` applies when the owner is incarcerated and `other`
/// susceptible; `from_*` when `other` is incarcerated and the owner susceptible. A gate is
/// the first month the direction may transmit (adult-child rule).
struct Contact {
    AgentId other = kNoAgent;
    double to_prob = 0.0;
    double from_prob = 0.0;
    int to_gate = kNeverGated;
    int from_gate = kNeverGated;
};

/// Compressed adjacency with per-direction transmission probabilities.
class ContactNetwork {
  public:
    std::span<const Contact> contacts(AgentId id) const {
        const auto i = static_cast<std::size_t>(id);
        return {contacts_.data() + offsets_[i], offsets_[i + 1] - offsets_[i]};
    }
    std::size_t size() const noexcept { return offsets_.empty() ? 0 : offsets_.size() - 1; }
    std::size_t edge_count() const noexcept { return contacts_.size() / 2; }

    static ContactNetwork build(const popgen::Population &pop, const Timeline &timeline,
                                const TransmissionTable &table) {
        const auto n = pop.agents.size();
        std::vector<std::size_t> degree(n, 0);
        for (const auto &e : pop.edges) {
            ++degree[static_cast<std::size_t>(e.a)];
            ++degree[static_cast<std::size_t>(e.b)];
        }
        ContactNetwork net;
        net.offsets_.assign(n + 1, 0);
        for (std::size_t i = 0; i < n; ++i) {
            net.offsets_[i + 1] = net.offsets_[i] + degree[i];
        }
        net.contacts_.resize(net.offsets_[n]);
        std::vector<std::size_t> fill(net.offsets_.begin(), net.offsets_.end() - 1);

        const auto direction = [&](Relation relation, AgentId susceptible) {
            // Age is applied through the gate, so resolve the role as an adult.
            return EdgeDirection{relation, timeline.sex[static_cast<std::size_t>(susceptible)], kAdultAgeMonths};
        };
        const auto sex_of = [&](AgentId id) { return timeline.sex[static_cast<std::size_t>(id)]; };
        const auto adult_from = [&](AgentId id) { return timeline.birth_month[static_cast<std::size_t>(id)] + kAdultAgeMonths; };

        for (const auto &e : pop.edges) {
            // Relation of b as seen from a, and of a as seen from b.
            Relation b_to_a = Relation::friend_tie;
            Relation a_to_b = Relation::friend_tie;
            switch (e.kind) {
            case popgen::RelationKind::parent_child:
                b_to_a = Relation::child;
                a_to_b = Relation::parent;
                break;
            case popgen::RelationKind::sibling:
                b_to_a = a_to_b = Relation::sibling;
                break;
            case popgen::RelationKind::spouse:
                b_to_a = a_to_b = Relation::spouse;
                break;
            case popgen::RelationKind::friendship:
                b_to_a = a_to_b = Relation::friend_tie;
                break;
            }
            const double p_a_infects_b = lookup_edge_prob(direction(b_to_a, e.b), sex_of(e.a), table);
            const double p_b_infects_a = lookup_edge_prob(direction(a_to_b, e.a), sex_of(e.b), table);
            const int gate_a_to_b = b_to_a == Relation::child ? adult_from(e.b) : kNeverGated;
            const int gate_b_to_a = a_to_b == Relation::child ? adult_from(e.a) : kNeverGated;
            net.contacts_[fill[static_cast<std::size_t>(e.a)]++] = {e.b, p_a_infects_b, p_b_infects_a, gate_a_to_b,
                                                                    gate_b_to_a};
            net.contacts_[fill[static_cast<std::size_t>(e.b)]++] = {e.a, p_b_infects_a, p_a_infects_b, gate_b_to_a,
                                                                    gate_a_to_b};
        }
        for (std::size_t i = 0; i < n; ++i) {
            std::sort(net.contacts_.begin() + static_cast<std::ptrdiff_t>(net.offsets_[i]),
                      net.contacts_.begin() + static_cast<std::ptrdiff_t>(net.offsets_[i + 1]),
                      [](const Contact &x, const Contact &y) { return x.other < y.other; });
        }
        return net;
    }

  private:
    std::vector<std::size_t> offsets_;
    std::vector<Contact> contacts_;
};

/// Everything a replicate reads; immutable and shareable across workers.
struct World {
    const popgen::Population *population = nullptr;
    Timeline timeline;
    ContactNetwork network;

    World(const popgen::Population &pop, const TransmissionTable &table)
        : population(&pop), timeline(build_timeline(pop)), network(ContactNetwork::build(pop, timeline, table)) {}
};

} // namespace incsim::engine
