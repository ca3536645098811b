// mlearn: run a scenario file through one pipeline and write its artifacts.
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "mlearn/mlearn.hpp"

namespace {

constexpr int kScenarioError = 2;
constexpr int kInvariantViolation = 3;

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Measure learning experiments"};
    app.require_subcommand(1, 1);

    std::string scenario_path;
    mlearn::RunOptions opt;
    std::string out_dir = "out";
    std::uint64_t max_stage = 0, horizon = 0;

    const char* subs[][2] = {{"validate", "Check measure laws and the machine block"},
                             {"sample", "Draw streams from the declared measures"},
                             {"learn", "Run learners on sampled streams and classify"},
                             {"construct-sparse", "Build the sparse measure and check its invariants"},
                             {"dominate", "Compute f, D_t and the dichotomy report"},
                             {"report", "Run every declared experiment and summarize"}};
    for (auto& s : subs) {
        auto* sub = app.add_subcommand(s[0], s[1]);
        sub->add_option("--scenario", scenario_path, "Scenario JSON file")->required()->check(CLI::ExistingFile);
        sub->add_option("--out", out_dir, "Output directory")->capture_default_str();
        sub->add_option("--seed-offset", opt.seed_offset, "Added to every scenario seed");
        sub->add_option("--max-stage", max_stage, "Override the construction horizon");
        sub->add_option("--horizon", horizon, "Override the stream length");
    }
    CLI11_PARSE(app, argc, argv);

    const std::string sub = app.get_subcommands().front()->get_name();
    opt.out = out_dir;
    if (max_stage) opt.max_stage = max_stage;
    if (horizon) opt.horizon = horizon;

    try {
        auto sc = mlearn::load_scenario(scenario_path);
        auto res = mlearn::run_experiment(sc, sub, opt);
        if (sub == "report") std::cout << std::ifstream(opt.out / "summary.txt").rdbuf();
        if (!res.ok()) {
            for (const auto& b : res.broken) std::cerr << "invariant: " << b << "\n";
            return kInvariantViolation;
        }
        std::cout << sub << ": ok (" << out_dir << ")\n";
        return 0;
    } catch (const mlearn::InvariantViolation& e) {
        std::cerr << "invariant violation: " << e.what() << "\n";
        return kInvariantViolation;
    } catch (const mlearn::Error& e) {
        std::cerr << "scenario error: " << e.what() << "\n";
        return kScenarioError;
    } catch (const std::filesystem::filesystem_error& e) {
        std::cerr << "io error: " << e.what() << "\n";
        return 1;
    }
}
