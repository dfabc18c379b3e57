#include <gtest/gtest.h>

#include <cstdlib>
#include <fstream>

#include "incsim/config.hpp"
#include "support.hpp"

using namespace incsim;
using nlohmann::json;

namespace {

json minimal() {
    return json::parse(R"({"scenarios": [{"label": "A", "sentence": {"mean": 14, "median": 10}}]})");
}

std::string error_of(const json &doc) {
    try {
        parse_config(doc, "/base");
    } catch (const ConfigError &e) {
        return e.what();
    }
    return {};
}

} // namespace

TEST(Config, MinimalDefaults) {
    const auto cfg = parse_config(minimal(), "/base");
    ASSERT_EQ(cfg.scenarios.size(), 1u);
    const auto &s = cfg.scenarios[0];
    EXPECT_EQ(s.label, "A");
    EXPECT_DOUBLE_EQ(s.initial_prevalence, 0.01);
    EXPECT_EQ(s.duration_months, 600);
    EXPECT_EQ(s.replicates, 250);
    EXPECT_EQ(s.eligibility_min_age, 15);
    EXPECT_TRUE(s.contagion);
    EXPECT_EQ(s.spontaneous_rate, 0.0);
    EXPECT_TRUE(s.sentence.is_fit());
    EXPECT_EQ(cfg.population.generation.seed_count, 1500);
    EXPECT_EQ(cfg.population.generation.horizon_years, 200);
    EXPECT_EQ(cfg.population.generation.burn_in_years, 150);
    EXPECT_DOUBLE_EQ(cfg.population.fertility_mean, 2.07);
    EXPECT_EQ(cfg.transmission.calibration_sentence, 14);
    EXPECT_EQ(cfg.analysis.recidivism_window, 36);
}

TEST(Config, UnknownKeysRejectedAtEveryLevel) {
    auto doc = minimal();
    doc["bogus"] = 1;
    EXPECT_NE(error_of(doc).find("unknown key 'bogus'"), std::string::npos);
    doc = minimal();
    doc["population"] = {{"seeds", 3}};
    EXPECT_NE(error_of(doc).find("population: unknown key 'seeds'"), std::string::npos);
    doc = minimal();
    doc["scenarios"][0]["sentense"] = 1;
    EXPECT_NE(error_of(doc).find("scenarios[0]"), std::string::npos);
    doc = minimal();
    doc["scenarios"][0]["sentence"]["mode"] = 3;
    EXPECT_FALSE(error_of(doc).empty());
    doc = minimal();
    doc["analysis"] = {{"overlay", {{"path", "x"}}}};
    EXPECT_NE(error_of(doc).find("analysis.overlay"), std::string::npos);
}

TEST(Config, SentenceSpecificationIsExclusive) {
    auto doc = minimal();
    doc["scenarios"][0]["sentence"] = {{"mean", 14}};
    EXPECT_FALSE(error_of(doc).empty());
    doc["scenarios"][0]["sentence"] = {{"mean", 14}, {"median", 10}, {"dispersion", 1.0}};
    EXPECT_FALSE(error_of(doc).empty());
    doc["scenarios"][0]["sentence"] = {{"dispersion", 1.1}, {"success_prob", 0.07}};
    EXPECT_TRUE(error_of(doc).empty());
    doc["scenarios"][0].erase("sentence");
    EXPECT_NE(error_of(doc).find("sentence is required"), std::string::npos);
}

TEST(Config, LabelsAndComparisons) {
    auto doc = minimal();
    doc["scenarios"][0]["label"] = "../escape";
    EXPECT_FALSE(error_of(doc).empty());
    doc["scenarios"][0]["label"] = "";
    EXPECT_FALSE(error_of(doc).empty());
    doc = minimal();
    doc["scenarios"].push_back(doc["scenarios"][0]);
    EXPECT_NE(error_of(doc).find("duplicate label"), std::string::npos);
    doc = minimal();
    doc["analysis"] = {{"compare", {"A", "B"}}};
    EXPECT_NE(error_of(doc).find("unknown scenario 'B'"), std::string::npos);
    doc["analysis"] = {{"compare", {"A"}}};
    EXPECT_FALSE(error_of(doc).empty());
    doc = minimal();
    doc["scenarios"] = json::array();
    EXPECT_FALSE(error_of(doc).empty());
}

TEST(Config, TypeErrorsAreConfigErrors) {
    auto doc = minimal();
    doc["scenarios"][0]["replicates"] = "many";
    EXPECT_FALSE(error_of(doc).empty());
    doc = minimal();
    doc["master_seed"] = -1.5;
    EXPECT_FALSE(error_of(doc).empty());
}

TEST(Config, RelativePathsResolveAgainstConfigDirectory) {
    auto doc = minimal();
    doc["population"] = {{"tables_dir", "tables"}, {"friend_counts", "/abs/friends.csv"}};
    doc["transmission"] = {{"survey_table", "s.csv"}};
    doc["output_dir"] = "out";
    const auto cfg = parse_config(doc, "/base/dir");
    EXPECT_EQ(cfg.population.tables.life_table_female, std::filesystem::path("/base/dir/tables/life_table_female.csv"));
    EXPECT_EQ(cfg.population.tables.friend_counts, std::filesystem::path("/abs/friends.csv"));
    EXPECT_EQ(cfg.transmission.survey_table, std::filesystem::path("/base/dir/s.csv"));
    EXPECT_EQ(cfg.output_dir, std::filesystem::path("/base/dir/out"));
}

TEST(Config, OutputRootFromEnvironment) {
    const char *old = std::getenv(kOutputRootEnv);
    const std::string saved = old ? old : "";
    setenv(kOutputRootEnv, "/tmp/somewhere", 1);
    EXPECT_EQ(parse_config(minimal(), "/base").output_dir, std::filesystem::path("/tmp/somewhere"));
    unsetenv(kOutputRootEnv);
    EXPECT_EQ(parse_config(minimal(), "/base").output_dir, std::filesystem::path("runs"));
    if (old) {
        setenv(kOutputRootEnv, saved.c_str(), 1);
    }
}

TEST(Config, ResolvedEchoReparsesToSameConfig) {
    const auto cfg = load_config(std::filesystem::path(INCSIM_DATA_DIR) / ".." / "configs" / "default.json");
    const auto echo = resolved_config_json(cfg);
    const auto again = parse_config(json::parse(echo.dump()), "/elsewhere");
    EXPECT_EQ(resolved_config_json(again).dump(), echo.dump());
    EXPECT_EQ(again.scenarios.size(), 2u);
    EXPECT_EQ(again.master_seed, cfg.master_seed);
    EXPECT_TRUE(std::filesystem::path(echo["transmission"]["survey_table"].get<std::string>()).is_absolute());
}

TEST(Config, ShippedConfigsParse) {
    const auto dir = std::filesystem::path(INCSIM_DATA_DIR) / ".." / "configs";
    for (const auto &entry : std::filesystem::directory_iterator(dir)) {
        if (entry.path().extension() == ".json") {
            EXPECT_NO_THROW(load_config(entry.path())) << entry.path();
        }
    }
}

TEST(Config, LoadErrors) {
    EXPECT_THROW(load_config("/nonexistent/config.json"), ConfigError);
    const auto dir = testing_support::temp_dir("config");
    std::ofstream(dir / "broken.json") << "{\"scenarios\": [";
    EXPECT_THROW(load_config(dir / "broken.json"), ConfigError);
    std::ofstream(dir / "commented.json")
        << "// comment\n{\"scenarios\": [{\"label\": \"A\", \"sentence\": {\"mean\": 14, \"median\": 10}}]}";
    EXPECT_NO_THROW(load_config(dir / "commented.json"));
}
