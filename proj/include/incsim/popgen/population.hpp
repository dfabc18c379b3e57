#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string_view>
#include <vector>

#include "../types.hpp"

namespace incsim::popgen {

inline constexpr int kMinAgeFirstBirth = 15;
inline constexpr int kFriendFormationAge = 10;
inline constexpr int kFriendCandidateMinAge = 9;
inline constexpr int kFriendCandidateMaxAge = 11;
inline constexpr int kMaxLifespan = 120;

struct Location {
    double x = 0.0;
    double y = 0.0;
};

inline double squared_distance(Location a, Location b) noexcept {
    const double dx = a.x - b.x;
    const double dy = a.y - b.y;
    return dx * dx + dy * dy;
}

/// One person. Years are generator iterations; the agent is alive in year y iff
/// birth_year <= y < death_year.
struct Agent {
    AgentId id = kNoAgent;
    Sex sex = Sex::female;
    int birth_year = 0;
    int death_year = 1;
    Location location;
    std::optional<int> age_first_birth;
    int planned_children = 0;
    AgentId mother = kNoAgent;
    AgentId father = kNoAgent;

    bool alive_in(int year) const noexcept { return birth_year <= year && year < death_year; }
    int age_in(int year) const noexcept { return year - birth_year; }
};

enum class RelationKind : std::uint8_t { parent_child, sibling, spouse, friendship };

inline constexpr std::string_view to_string(RelationKind kind) noexcept {
    switch (kind) {
    case RelationKind::parent_child:
        return "parent_child";
    case RelationKind::sibling:
        return "sibling";
    case RelationKind::spouse:
        return "spouse";
    case RelationKind::friendship:
        return "friend";
    }
    return "unknown";
}

/// Undirected tie. parent_child: a = parent, b = child. spouse: a = wife, b = husband.
/// sibling and friendship: a < b.
struct RelationEdge {
    AgentId a = kNoAgent;
    AgentId b = kNoAgent;
    RelationKind kind = RelationKind::friendship;

    friend bool operator==(const RelationEdge &, const RelationEdge &) = default;
};

struct GenerationStats {
    std::size_t total_generated = 0;
    std::size_t total_edges = 0;
    std::size_t retained = 0;
    std::size_t retained_edges = 0;
    double mean_degree = 0.0;
    /// Realised children per woman who lived to kCompletedFertilityAge inside the horizon.
    double completed_fertility_mean = 0.0;
    std::size_t completed_fertility_women = 0;
    std::size_t single_mothers = 0;
    std::size_t couples = 0;
};

inline constexpr int kCompletedFertilityAge = 60;

/// Retained agents (alive in some year >= burn_in_years), densely renumbered in
/// generation order, plus the ties among them.
struct Population {
    std::vector<Agent> agents;
    std::vector<RelationEdge> edges;
    int burn_in_years = 150;
    int horizon_years = 200;
    int seed_count = 0;
    std::uint64_t generation_seed = 0;
    GenerationStats stats;

    std::size_t size() const noexcept { return agents.size(); }
};

} // namespace incsim::popgen
