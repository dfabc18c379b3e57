#pragma once

#include <filesystem>
#include <fstream>
#include <ostream>
#include <string>

#include <json.hpp>

#include "../csv.hpp"
#include "../error.hpp"
#include "../hash.hpp"
#include "population.hpp"

namespace incsim::popgen {

inline constexpr const char *kPopulationFormat = "incsim-population";
inline constexpr int kPopulationFormatVersion = 1;

inline RelationKind relation_kind_from_string(const std::string &text) {
    for (auto kind : {RelationKind::parent_child, RelationKind::sibling, RelationKind::spouse,
                      RelationKind::friendship}) {
        if (text == to_string(kind)) {
            return kind;
        }
    }
    throw InputError("unknown relation kind '" + text + "'");
}

inline nlohmann::ordered_json stats_to_json(const GenerationStats &s) {
    return {{"total_generated", s.total_generated},
            {"total_edges", s.total_edges},
            {"retained", s.retained},
            {"retained_edges", s.retained_edges},
            {"mean_degree", s.mean_degree},
            {"completed_fertility_mean", s.completed_fertility_mean},
            {"completed_fertility_women", s.completed_fertility_women},
            {"couples", s.couples},
            {"single_mothers", s.single_mothers}};
}

/// Population file: {"format", "version", "metadata", "agents", "edges"}. Agents are objects;
/// edges are [a, b, kind] triples.
inline nlohmann::ordered_json population_to_json(const Population &pop, const std::string &parameter_hash) {
    nlohmann::ordered_json agents = nlohmann::ordered_json::array();
    for (const auto &a : pop.agents) {
        agents.push_back({{"id", a.id},
                          {"sex", to_string(a.sex)},
                          {"birth_year", a.birth_year},
                          {"death_year", a.death_year},
                          {"x", a.location.x},
                          {"y", a.location.y},
                          {"age_first_birth", a.age_first_birth ? nlohmann::ordered_json(*a.age_first_birth)
                                                                 : nlohmann::ordered_json(nullptr)},
                          {"planned_children", a.planned_children},
                          {"mother", a.mother},
                          {"father", a.father}});
    }
    nlohmann::ordered_json edges = nlohmann::ordered_json::array();
    for (const auto &e : pop.edges) {
        edges.push_back({e.a, e.b, to_string(e.kind)});
    }
    return {{"format", kPopulationFormat},
            {"version", kPopulationFormatVersion},
            {"metadata",
             {{"generation_seed", pop.generation_seed},
              {"seed_count", pop.seed_count},
              {"burn_in_years", pop.burn_in_years},
              {"horizon_years", pop.horizon_years},
              {"parameter_hash", parameter_hash},
              {"stats", stats_to_json(pop.stats)}}},
            {"agents", std::move(agents)},
            {"edges", std::move(edges)}};
}

inline Population population_from_json(const nlohmann::json &doc) {
    try {
        if (doc.at("format").get<std::string>() != kPopulationFormat) {
            throw InputError("not a population file");
        }
        if (doc.at("version").get<int>() != kPopulationFormatVersion) {
            throw InputError("unsupported population file version");
        }
        Population pop;
        const auto &meta = doc.at("metadata");
        pop.generation_seed = meta.at("generation_seed").get<std::uint64_t>();
        pop.seed_count = meta.at("seed_count").get<int>();
        pop.burn_in_years = meta.at("burn_in_years").get<int>();
        pop.horizon_years = meta.at("horizon_years").get<int>();
        const auto &s = meta.at("stats");
        pop.stats.total_generated = s.at("total_generated").get<std::size_t>();
        pop.stats.total_edges = s.at("total_edges").get<std::size_t>();
        pop.stats.retained = s.at("retained").get<std::size_t>();
        pop.stats.retained_edges = s.at("retained_edges").get<std::size_t>();
        pop.stats.mean_degree = s.at("mean_degree").get<double>();
        pop.stats.completed_fertility_mean = s.at("completed_fertility_mean").get<double>();
        pop.stats.completed_fertility_women = s.at("completed_fertility_women").get<std::size_t>();
        pop.stats.couples = s.at("couples").get<std::size_t>();
        pop.stats.single_mothers = s.at("single_mothers").get<std::size_t>();

        for (const auto &j : doc.at("agents")) {
            Agent a;
            a.id = j.at("id").get<AgentId>();
            if (a.id != static_cast<AgentId>(pop.agents.size())) {
                throw InputError("agent ids must be dense and ordered");
            }
            const auto sex = j.at("sex").get<std::string>();
            if (sex != "female" && sex != "male") {
                throw InputError("agent " + std::to_string(a.id) + ": bad sex '" + sex + "'");
            }
            a.sex = sex == "female" ? Sex::female : Sex::male;
            a.birth_year = j.at("birth_year").get<int>();
            a.death_year = j.at("death_year").get<int>();
            a.location = {j.at("x").get<double>(), j.at("y").get<double>()};
            if (!j.at("age_first_birth").is_null()) {
                a.age_first_birth = j.at("age_first_birth").get<int>();
            }
            a.planned_children = j.at("planned_children").get<int>();
            a.mother = j.at("mother").get<AgentId>();
            a.father = j.at("father").get<AgentId>();
            pop.agents.push_back(a);
        }
        const auto n = static_cast<AgentId>(pop.agents.size());
        for (const auto &j : doc.at("edges")) {
            RelationEdge e{j.at(0).get<AgentId>(), j.at(1).get<AgentId>(),
                           relation_kind_from_string(j.at(2).get<std::string>())};
            if (e.a < 0 || e.b < 0 || e.a >= n || e.b >= n || e.a == e.b) {
                throw InputError("edge endpoint out of range");
            }
            pop.edges.push_back(e);
        }
        return pop;
    } catch (const nlohmann::json::exception &err) {
        throw InputError(std::string("population file: ") + err.what());
    }
}

inline void write_population(const Population &pop, const std::filesystem::path &path,
                             const std::string &parameter_hash) {
    std::ofstream out(path);
    if (!out) {
        throw InputError("cannot write " + path.string());
    }
    out << population_to_json(pop, parameter_hash).dump(1) << '\n';
}

inline Population read_population(const std::filesystem::path &path) {
    std::ifstream in(path);
    if (!in) {
        throw InputError("cannot open " + path.string());
    }
    nlohmann::json doc;
    try {
        in >> doc;
    } catch (const nlohmann::json::exception &err) {
        throw InputError(path.string() + ": " + err.what());
    }
    return population_from_json(doc);
}

/// Edge list for graph tools: source,target,kind.
inline void write_edge_list(const Population &pop, std::ostream &out) {
    csv::write_row(out, "source", "target", "kind");
    for (const auto &e : pop.edges) {
        csv::write_row(out, e.a, e.b, std::string(to_string(e.kind)));
    }
}

} // namespace incsim::popgen
