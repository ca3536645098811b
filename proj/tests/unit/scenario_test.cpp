#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "mlearn/experiment.hpp"

using namespace mlearn;
using nlohmann::json;

namespace {

const std::string kDir = MLEARN_SCENARIO_DIR;

json base() {
    return json::parse(R"({
      "name": "t",
      "registry": {"measures": [
        {"name": "u", "law": {"kind": "uniform"}, "schedule": 0},
        {"name": "b34", "law": {"kind": "bernoulli", "q": {"num": 3, "exp": 2}}, "schedule": 0},
        {"name": "lambda", "reserved": true}
      ]},
      "machine": {"coders": [{"name": "cu", "constant": 2, "measure": 0}]}
    })");
}

std::string load_error(const json& j) {
    try {
        parse_scenario(j, "test.json");
    } catch (const ScenarioError& e) {
        return e.what();
    }
    return "";
}

std::string slurp(const std::filesystem::path& p) {
    std::ifstream f(p, std::ios::binary);
    std::stringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

std::filesystem::path scratch(const std::string& name) {
    auto p = std::filesystem::temp_directory_path() / ("mlearn_scenario_test_" + name);
    std::filesystem::remove_all(p);
    return p;
}

}  // namespace

TEST(LoadScenario, MinimalLoads) {
    auto sc = load_scenario(kDir + "/minimal.json");
    EXPECT_EQ(sc.measures.size(), 1u);
    auto env = sc.environment();
    EXPECT_TRUE(env.registry.is_total(0));
    EXPECT_EQ(env.machine.size(), 1u);
}

TEST(LoadScenario, EveryShippedScenarioLoads) {
    for (const auto& f : std::filesystem::directory_iterator(kDir)) {
        if (f.path().extension() != ".json") continue;
        EXPECT_NO_THROW(load_scenario(f.path().string())) << f.path();
    }
}

TEST(LoadScenario, KraftViolationNamesTheMachineBlock) {
    auto j = base();
    j["machine"]["coders"] = json::parse(R"([{"name": "a", "constant": 1, "measure": 0},
                                              {"name": "b", "constant": 1, "measure": 1},
                                              {"name": "c", "constant": 3, "measure": 0}])");
    auto msg = load_error(j);
    EXPECT_NE(msg.find("test.json.machine"), std::string::npos) << msg;
    EXPECT_NE(msg.find("9/8"), std::string::npos) << msg;
}

TEST(LoadScenario, ReservedSlotFilledTwice) {
    auto j = base();
    j["experiments"] = json::parse(R"({
      "construct-sparse": {"h": 3, "g": 1, "p": {"kind": "polynomial", "coeffs": [1, 1]}, "family": [0], "lambda_slot": 2},
      "dominate": {"lambda_slot": 2, "runs": []}
    })");
    auto msg = load_error(j);
    EXPECT_NE(msg.find("filled twice"), std::string::npos) << msg;
}

TEST(LoadScenario, FillTargetMustBeReserved) {
    auto j = base();
    j["experiments"] = json::parse(R"({"dominate": {"lambda_slot": 1, "runs": []}})");
    EXPECT_NE(load_error(j).find("not reserved"), std::string::npos);
}

TEST(LoadScenario, DanglingIndicesAreLocated) {
    auto j = base();
    j["machine"]["coders"][0]["measure"] = 7;
    auto msg = load_error(j);
    EXPECT_NE(msg.find("test.json.machine.coders[0].measure"), std::string::npos) << msg;

    // with a declared stride of 5, index 4 names a slot that was never declared
    auto k = base();
    k["registry"]["stride"] = 5;
    k["experiments"] = json::parse(R"({"learn": {"runs": [{"name": "x", "learner": {"kind": "constant", "index": 4}, "sources": [0]}]}})");
    msg = load_error(k);
    EXPECT_NE(msg.find("runs[0].learner.index"), std::string::npos) << msg;
}

TEST(LoadScenario, PaddedIndicesResolve) {
    auto j = base();
    // stride 3: index 4 is slot 1
    j["experiments"] = json::parse(R"({"learn": {"runs": [{"name": "x", "learner": {"kind": "constant", "index": 4}, "sources": [0]}]}})");
    EXPECT_EQ(load_error(j), "");
}

TEST(LoadScenario, MalformedDyadic) {
    auto j = base();
    j["registry"]["measures"][1]["law"]["q"] = json::parse(R"({"num": 1, "exp": -2})");
    auto msg = load_error(j);
    EXPECT_NE(msg.find("registry.measures[1].law.q"), std::string::npos) << msg;
    j["registry"]["measures"][1]["law"]["q"] = json::parse(R"({"num": "x1", "exp": 2})");
    EXPECT_NE(load_error(j).find("not an integer"), std::string::npos);
    j["registry"]["measures"][1]["law"]["q"] = json::parse(R"({"num": 5, "exp": 2})");
    EXPECT_NE(load_error(j).find("outside [0,1]"), std::string::npos);
}

TEST(LoadScenario, TotalityFlagMustMatchSchedule) {
    auto j = base();
    j["registry"]["measures"][0]["total"] = false;
    EXPECT_NE(load_error(j).find("registry.measures[0].total"), std::string::npos);
    j["registry"]["measures"][0]["schedule"] = json::parse(R"({"function": 0, "defined_through": 4})");
    EXPECT_EQ(load_error(j), "");
}

TEST(LoadScenario, StreamSourcesMustBeTotal) {
    auto j = base();
    j["registry"]["measures"][0]["schedule"] = json::parse(R"({"kind": "never"})");
    j["experiments"] = json::parse(R"({"learn": {"runs": [{"name": "x", "learner": {"kind": "oracle-ex"}, "sources": [0]}]}})");
    EXPECT_NE(load_error(j).find("sources[0]"), std::string::npos);
}

TEST(LoadScenario, UnknownKindsAreRejected) {
    auto j = base();
    j["registry"]["measures"][0]["law"]["kind"] = "gaussian";
    EXPECT_NE(load_error(j).find("unknown measure kind"), std::string::npos);
    auto k = base();
    k["experiments"] = json::parse(R"({"simulate": {}})");
    EXPECT_NE(load_error(k).find("unknown experiment"), std::string::npos);
}

TEST(RunExperiment, SampleIsByteIdenticalAcrossRuns) {
    auto sc = load_scenario(kDir + "/minimal.json");
    auto a = scratch("a"), b = scratch("b");
    run_experiment(sc, "report", {a});
    run_experiment(sc, "report", {b});
    for (auto f : {"samples.json", "validate.json", "summary.json", "summary.txt"}) {
        ASSERT_TRUE(std::filesystem::exists(a / f)) << f;
        EXPECT_EQ(slurp(a / f), slurp(b / f)) << f;
    }
}

TEST(RunExperiment, SeedOffsetChangesSamples) {
    auto sc = load_scenario(kDir + "/minimal.json");
    auto a = scratch("c"), b = scratch("d");
    run_experiment(sc, "sample", {a});
    RunOptions o{b};
    o.seed_offset = 5;
    run_experiment(sc, "sample", o);
    EXPECT_NE(slurp(a / "samples.json"), slurp(b / "samples.json"));
}

TEST(RunExperiment, EmptyLearnRunsGiveAnEmptyTable) {
    auto j = base();
    j["experiments"] = json::parse(R"({"learn": {"runs": []}})");
    auto sc = parse_scenario(j, "empty.json");
    auto res = run_experiment(sc, "learn", {scratch("e")});
    EXPECT_TRUE(res.summary.at("runs").empty());
    EXPECT_TRUE(res.ok());
}

TEST(RunExperiment, LearnClassifiesAndWritesTraces) {
    auto j = base();
    j["experiments"] = json::parse(R"({"learn": {"runs": [
      {"name": "o", "learner": {"kind": "oracle-ex"}, "sources": [0, 1], "streams": 4, "length": 120, "window": 30}]}})");
    auto sc = parse_scenario(j, "learn.json");
    auto dir = scratch("f");
    auto res = run_experiment(sc, "learn", {dir});
    const auto& src = res.summary.at("runs")[0].at("sources");
    ASSERT_EQ(src.size(), 2u);
    // only the uniform coder exists, but the index 0 candidate still wins on uniform streams
    EXPECT_EQ(src[0].at("outcomes").at("ex_success"), 4);
    auto csv = slurp(dir / "learn/o/traces/source0_0.csv");
    EXPECT_EQ(csv.substr(0, csv.find('\n')), "n,prediction,cost,deficiency");
    EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 122);
}

TEST(RunExperiment, ErrorsCarryScenarioContext) {
    auto j = base();
    // p is not strictly increasing, which is only detectable when the pipeline runs
    j["experiments"] = json::parse(R"({"construct-sparse": {"h": 3, "g": 1, "p": 4, "family": [0], "lambda_slot": 2}})");
    auto sc = parse_scenario(j, "ctx.json");
    try {
        run_experiment(sc, "construct-sparse", {scratch("g")});
        FAIL() << "expected a scenario error";
    } catch (const ScenarioError& e) {
        std::string m = e.what();
        EXPECT_NE(m.find("ctx.json: construct-sparse"), std::string::npos) << m;
        EXPECT_NE(m.find("strictly increasing"), std::string::npos) << m;
    }
}

TEST(RunExperiment, NonConformingLearnerIsReported) {
    auto j = base();
    j["registry"]["measures"][1]["schedule"] = json::parse(R"({"kind": "never"})");
    j["experiments"] = json::parse(R"({"dominate": {"lambda_slot": 2, "runs": [
      {"name": "stuck", "learner": {"kind": "constant", "index": 1}, "h": {"kind": "polynomial", "coeffs": [0, 0, 1]},
       "family": [0], "max_stage": 20, "T": 3, "search_cap": 10, "node_budget": 4096, "streams": 2, "stream_length": 40}]}})");
    auto sc = parse_scenario(j, "nc.json");
    auto res = run_experiment(sc, "dominate", {scratch("h")});
    const auto& run = res.summary.at("runs")[0];
    EXPECT_EQ(run.at("outcome"), "non-conforming");
    EXPECT_NE(run.at("error").get<std::string>().find("nc.json: dominate run 'stuck'"), std::string::npos);
}

TEST(RunExperiment, ConstructSparseReplaysAndChecks) {
    auto sc = load_scenario(kDir + "/sparse.json");
    RunOptions o{scratch("i")};
    o.max_stage = 40;
    auto res = run_experiment(sc, "construct-sparse", o);
    EXPECT_TRUE(res.ok());
    EXPECT_EQ(res.summary.at("active"), json::parse("[1, 5, 13, 29]"));
    auto log = slurp(o.out / "sparse/construction_log.jsonl");
    EXPECT_EQ(std::count(log.begin(), log.end(), '\n'), 41);
}

TEST(RunExperiment, UnknownSubcommand) {
    auto sc = load_scenario(kDir + "/minimal.json");
    EXPECT_THROW(run_experiment(sc, "plot", {scratch("j")}), ScenarioError);
}
