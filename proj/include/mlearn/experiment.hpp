#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "mlearn/scenario.hpp"

namespace mlearn {

struct RunOptions {
    std::filesystem::path out = "out";
    std::uint64_t seed_offset = 0;
    std::optional<std::uint64_t> max_stage;
    std::optional<std::size_t> horizon;  // stream length for learn and sample
};

/// Writes under the output directory. Every file is a pure function of its content.
class OutputSink {
public:
    explicit OutputSink(std::filesystem::path root) : root_(std::move(root)) {}

    void text(const std::string& rel, const std::string& content) const {
        const auto p = root_ / rel;
        std::filesystem::create_directories(p.parent_path());
        std::ofstream f(p, std::ios::binary);
        if (!f) throw Error("cannot write " + p.string());
        f << content;
    }
    void json(const std::string& rel, const nlohmann::json& j) const { text(rel, j.dump(2) + "\n"); }
    void lines(const std::string& rel, const std::vector<nlohmann::json>& ls) const {
        std::string s;
        for (const auto& l : ls) s += l.dump() + "\n";
        text(rel, s);
    }

private:
    std::filesystem::path root_;
};

struct ExperimentResult {
    nlohmann::json summary = nlohmann::json::object();
    std::vector<std::string> broken;  // invariant checks that failed on the produced artifacts
    bool ok() const { return broken.empty(); }
};

namespace detail {

/// Re-throw with "where" prepended, keeping the error category.
template <class F>
auto with_context(const std::string& where, F&& f) -> decltype(f()) {
    try {
        return f();
    } catch (const ScenarioError& e) {
        throw ScenarioError(where + ": " + e.what());
    } catch (const InvariantViolation& e) {
        throw InvariantViolation(where + ": " + e.what());
    } catch (const NonConformingLearner& e) {
        throw NonConformingLearner(where + ": " + e.what());
    } catch (const UnknownIndex& e) {
        throw UnknownIndex(where + ": " + e.what());
    } catch (const Error& e) {
        throw Error(where + ": " + e.what());
    }
}

inline std::uint64_t seed_of(const Scenario& sc, const RunOptions& opt, std::uint64_t k) { return sc.seed + opt.seed_offset + k; }

/// True when μ_a and μ_b agree on every prefix of x (both defined at stage |x|).
inline bool agree_on_prefixes(const MeasureRegistry& reg, Index a, Index b, const BitString& x) {
    for (std::size_t n = 0; n <= x.size(); ++n) {
        auto va = reg.eval(a, x.prefix(n), x.size()), vb = reg.eval(b, x.prefix(n), x.size());
        if (!va || !vb || *va != *vb) return false;
    }
    return true;
}

inline nlohmann::json params_json(const SparseParams& p) {
    return {{"h", p.h.to_json()},
            {"g", p.g.to_json()},
            {"p", p.p.to_json()},
            {"family", p.family},
            {"max_stage", p.max_stage},
            {"scan_cap", p.scan_cap}};
}

inline nlohmann::json sparse_json(const SparseResult& r, const SparseCheck& chk) {
    nlohmann::json reports = nlohmann::json::array();
    for (const auto& x : r.reports)
        reports.push_back({{"index", x.index},
                           {"quota", x.quota},
                           {"length", x.length},
                           {"complete", x.complete},
                           {"dominates_h", x.dominates_h},
                           {"horizon_incomplete", x.horizon_incomplete}});
    nlohmann::json tests = nlohmann::json::object();
    for (const auto& [i, members] : r.tests) {
        nlohmann::json ms = nlohmann::json::array();
        for (const auto& m : members) ms.push_back({{"stage", m.stage}, {"defined_at", m.defined_at}, {"mu", m.mu.to_json()}});
        tests[std::to_string(i)] = ms;
    }
    std::size_t quiet = 0, suspended_n = 0;
    for (const auto& rec : r.log) {
        quiet += rec.branch == "quiet";
        suspended_n += rec.branch == "suspended";
    }
    return {{"params", params_json(r.params)},
            {"active", r.active},
            {"stages", {{"quiet", quiet}, {"suspended", suspended_n}, {"acting", r.active.size()}}},
            {"final_cover_size", r.log.empty() ? std::string("1") : r.log.back().cover_size.str()},
            {"reports", reports},
            {"tests", tests},
            {"check", {{"ok", chk.ok()}, {"violations", chk.violations}}}};
}

}  // namespace detail

inline ExperimentResult run_validate(const Scenario& sc, const RunOptions&, const OutputSink& out) {
    ExperimentResult res;
    auto env = sc.environment();
    nlohmann::json ms = nlohmann::json::array();
    bool ok = true;
    for (Index i = 0; i < sc.measures.size(); ++i) {
        auto rep = detail::with_context(sc.path + ": measure " + std::to_string(i) + " (" + sc.measures[i].name + ")",
                                        [&] { return env.registry.validate_measure(i, sc.validate_depth, kSaturated - 1); });
        ok = ok && rep.ok();
        ms.push_back({{"index", i}, {"name", sc.measures[i].name}, {"reserved", sc.measures[i].reserved}, {"report", rep.to_json()}});
        if (!rep.ok()) res.broken.push_back("measure " + std::to_string(i) + " violates the measure laws");
    }
    res.summary = {{"scenario", sc.name},
                   {"depth", sc.validate_depth},
                   {"measures", ms},
                   {"machine_weight", env.machine.constant_weight().to_json()},
                   {"machine_weight_str", env.machine.constant_weight().to_string()},
                   {"ok", ok}};
    out.json("validate.json", res.summary);
    return res;
}

inline ExperimentResult run_sample(const Scenario& sc, const RunOptions& opt, const OutputSink& out) {
    ExperimentResult res;
    if (!sc.sample) throw ScenarioError(sc.path + ": no sample experiment declared");
    auto env = sc.environment();
    const auto len = opt.horizon.value_or(sc.sample->length);
    nlohmann::json samples = nlohmann::json::object();
    for (Index i : sc.sample->measures) {
        nlohmann::json xs = nlohmann::json::array();
        for (std::size_t k = 0; k < sc.sample->count; ++k) {
            const auto seed = detail::seed_of(sc, opt, k);
            xs.push_back(detail::with_context(sc.path + ": sample measure " + std::to_string(i) + " seed " + std::to_string(seed),
                                              [&] { return env.registry.sample_stream(i, len, seed).str(); }));
        }
        samples[std::to_string(i)] = xs;
    }
    res.summary = {{"scenario", sc.name}, {"length", len}, {"samples", samples}};
    out.json("samples.json", res.summary);
    return res;
}

inline ExperimentResult run_learn(const Scenario& sc, const RunOptions& opt, const OutputSink& out) {
    ExperimentResult res;
    auto env = sc.environment();
    nlohmann::json runs = nlohmann::json::array();
    for (const auto& run : sc.learn) {
        auto learner = run.learner.build(sc.oracle);
        const auto len = opt.horizon.value_or(run.length);
        nlohmann::json sources = nlohmann::json::array();
        for (std::size_t si = 0; si < run.sources.size(); ++si) {
            const Index src = run.sources[si];
            std::map<std::string, std::size_t> outcomes{{"ex_success", 0}, {"partial_success", 0}, {"failure", 0}, {"undecided", 0}};
            std::map<std::string, std::size_t> limits, mind_changes;
            std::size_t matches = 0, stabilized = 0, total_index_successes = 0;
            std::uint64_t stab_sum = 0;
            nlohmann::json streams = nlohmann::json::array();
            for (std::size_t k = 0; k < run.streams; ++k) {
                const auto seed = detail::seed_of(sc, opt, si * run.streams + k);
                const std::string where = sc.path + ": learn run '" + run.name + "' source " + std::to_string(src) +
                                          " stream " + std::to_string(k) + " (seed " + std::to_string(seed) + ")";
                auto x = detail::with_context(where, [&] { return env.registry.sample_stream(src, len, seed); });
                auto tr = detail::with_context(where + " x = " + x.str(), [&] { return run_trace(env, *learner, x); });
                auto c = detail::with_context(where + " x = " + x.str(), [&] { return classify(env, tr, run.classify); });
                ++outcomes[to_string(c.outcome)];
                ++mind_changes[std::to_string(tr.mind_changes)];
                if (tr.stabilization) {
                    ++stabilized;
                    stab_sum += *tr.stabilization;
                }
                bool match = false;
                if (c.index) {
                    ++limits[std::to_string(*c.index)];
                    match = detail::agree_on_prefixes(env.registry, *c.index, src, x);
                    matches += match;
                    if ((c.outcome == Outcome::ex_success || c.outcome == Outcome::partial_success) && env.registry.is_total(*c.index))
                        ++total_index_successes;
                }
                auto cj = to_json(c);
                cj["stream"] = k;
                cj["seed"] = seed;
                cj["mind_changes"] = tr.mind_changes;
                cj["stabilization"] = tr.stabilization ? nlohmann::json(*tr.stabilization) : nlohmann::json(nullptr);
                cj["limit_matches_source"] = match;
                streams.push_back(cj);
                out.text("learn/" + run.name + "/traces/source" + std::to_string(src) + "_" + std::to_string(k) + ".csv", tr.csv());
            }
            nlohmann::json s = {{"source", src},
                                {"source_name", env.registry.name(src)},
                                {"streams", run.streams},
                                {"outcomes", outcomes},
                                {"succeeded", total_index_successes},
                                {"limit_matches_source", matches},
                                {"limit_indices", limits},
                                {"stabilized", stabilized},
                                {"mind_change_distribution", mind_changes},
                                {"classifications", streams}};
            // mean stabilization as an exact fraction keeps the bytes platform independent
            s["mean_stabilization"] = stabilized ? std::to_string(stab_sum) + "/" + std::to_string(stabilized) : "none";
            sources.push_back(std::move(s));
        }
        nlohmann::json rj = {{"name", run.name}, {"learner", run.learner.json}, {"length", len}, {"sources", sources}};
        out.json("learn/" + run.name + "/summary.json", rj);
        runs.push_back(std::move(rj));
    }
    res.summary = {{"scenario", sc.name}, {"runs", runs}};
    return res;
}

inline ExperimentResult run_construct_sparse(const Scenario& sc, const RunOptions& opt, const OutputSink& out) {
    ExperimentResult res;
    if (!sc.sparse) throw ScenarioError(sc.path + ": no construct-sparse experiment declared");
    const auto& x = *sc.sparse;
    auto env = sc.environment();
    auto prm = x.params;
    if (opt.max_stage) prm.max_stage = *opt.max_stage;
    const std::string where = sc.path + ": construct-sparse";
    detail::with_context(where, [&] { validate_params(env.registry, prm); });

    SparseResult r;
    std::optional<FixedPointResult> fp;
    ClopenTestRegistry tests;
    if (x.g0) {
        fp = detail::with_context(where + " (fixed point)", [&] {
            return fixed_point_compose(env, tests, x.lambda_slot, x.compressor, prm, *x.g0);
        });
        r = fp->sparse;
    } else {
        r = detail::with_context(where, [&] { return build_sparse(env.registry, prm); });
        env.registry.fill(x.lambda_slot, {"lambda", r.lambda, Schedule::immediate()});
    }
    // the log must replay to the same construction
    detail::with_context(where + " replay", [&] { replay_construction(env.registry, r.params, r.log_lines()); });
    auto chk = check_sparse(env.registry, r);
    for (const auto& v : chk.violations) res.broken.push_back("sparse: " + v);
    out.lines("sparse/construction_log.jsonl", r.log_lines());
    res.summary = detail::sparse_json(r, chk);
    res.summary["scenario"] = sc.name;
    res.summary["lambda_slot"] = x.lambda_slot;

    if (fp) {
        nlohmann::json firings = nlohmann::json::array();
        bool guarantee = true;
        const Stage late = kSaturated - 1;
        for (const auto& f : fp->firings) {
            std::size_t below = 0;
            for (const auto& s : f.target) {
                for (Stage st : {f.stage, late})
                    if (!deficiency(env, f.e, s, st).at_least(static_cast<std::int64_t>(f.k))) ++below;
            }
            guarantee = guarantee && below == 0;
            firings.push_back({{"t", f.t},
                               {"e", f.e},
                               {"k", f.k},
                               {"q", f.q},
                               {"stage", f.stage},
                               {"target_size", f.target.size()},
                               {"added_weight", f.added_weight.to_json()},
                               {"rejected", f.rejected},
                               {"strings_below_k", below}});
        }
        const bool weight_ok = fp->compressor_weight <= Dyadic::pow2(3);
        if (!guarantee) res.broken.push_back("compressor guarantee: some target string has deficiency below k");
        if (!weight_ok) res.broken.push_back("compressor weight exceeds 1/8");
        // Lemma check on sampled λ streams: deficiency below g0(i) forces tc_i to dominate h0 on the tail.
        nlohmann::json lemma = nlohmann::json::array();
        const std::uint64_t lo = (prm.max_stage + 1) / 2;
        std::size_t lemma_bad = 0;
        for (std::size_t k = 0; k < 20; ++k) {
            const auto seed = detail::seed_of(sc, opt, k);
            auto xs = env.registry.sample_stream(x.lambda_slot, prm.max_stage, seed);
            for (Index i : prm.family) {
                auto d = stream_deficiency(env, i, xs, late);
                if (!d.is_finite() || d.value() >= static_cast<std::int64_t>((*x.g0)(i))) continue;
                const bool dom = env.registry.dominates(i, prm.h, lo, prm.max_stage);
                if (!dom) ++lemma_bad;
                lemma.push_back({{"seed", seed}, {"index", i}, {"deficiency", d.value()}, {"dominates_tail", dom}});
            }
        }
        if (lemma_bad) res.broken.push_back("fixed point: a low-deficiency index does not dominate h0 on the tail");
        res.summary["fixed_point"] = {{"test_family", fp->test_family},
                                      {"g0", x.g0->to_json()},
                                      {"compressor", x.compressor},
                                      {"firings", firings},
                                      {"compressor_weight", fp->compressor_weight.to_json()},
                                      {"compressor_weight_str", fp->compressor_weight.to_string()},
                                      {"weight_at_most_eighth", weight_ok},
                                      {"guarantee_holds", guarantee},
                                      {"tail_window", {lo, prm.max_stage}},
                                      {"lemma_checks", lemma}};
        out.lines("sparse/request_log.jsonl", env.machine.request_log_lines());
    }
    res.summary["broken"] = res.broken;
    out.json("sparse/summary.json", res.summary);
    return res;
}

inline ExperimentResult run_dominate(const Scenario& sc, const RunOptions& opt, const OutputSink& out) {
    ExperimentResult res;
    nlohmann::json runs = nlohmann::json::array();
    for (const auto& run : sc.dominate) {
        const std::string where = sc.path + ": dominate run '" + run.name + "'";
        auto env = sc.environment();
        auto prm = run.construction;
        if (opt.max_stage) prm.max_stage = *opt.max_stage;
        detail::with_context(where, [&] { validate_params(env.registry, prm); });
        auto sparse = detail::with_context(where, [&] { return build_sparse(env.registry, prm); });
        env.registry.fill(sc.dominate_lambda, {"lambda", sparse.lambda, Schedule::immediate()});
        auto learner = run.learner.build(sc.oracle);
        auto dprm = run.domination;
        dprm.active = sparse.active;
        auto dp = run.dichotomy;
        dp.seed = detail::seed_of(sc, opt, 0);
        nlohmann::json rj = {{"name", run.name}, {"learner", run.learner.json}, {"construction", detail::params_json(prm)},
                             {"active", sparse.active}, {"T", dprm.T}, {"search_cap", dprm.search_cap}};
        try {
            DominationRun dr(env, *learner, dprm, sc.dominate_lambda);
            if (run.prefill) dr.prefill(run.prefill);
            auto rep = detail::with_context(where, [&] { return verify_domination_dichotomy(dr, env, *learner, dp); });
            rj["outcome"] = rep.discrepancy ? "discrepancy" : "consistent";
            rj["report"] = rep.to_json();
            out.text("dominate/" + run.name + "/table.csv", rep.csv());
        } catch (const NonConformingLearner& e) {
            rj["outcome"] = "non-conforming";
            rj["error"] = e.what();
        }
        out.json("dominate/" + run.name + "/report.json", rj);
        runs.push_back(std::move(rj));
    }
    res.summary = {{"scenario", sc.name}, {"lambda_slot", sc.dominate_lambda}, {"runs", runs}};
    return res;
}

/// Human-readable digest of whatever the scenario declares.
inline std::string summary_text(const Scenario& sc, const std::map<std::string, ExperimentResult>& rs) {
    std::ostringstream os;
    os << "scenario " << sc.name << "\n";
    if (auto it = rs.find("validate"); it != rs.end())
        os << "validate: " << (it->second.summary.at("ok").get<bool>() ? "all measures pass" : "violations found") << "\n";
    if (auto it = rs.find("learn"); it != rs.end())
        for (const auto& r : it->second.summary.at("runs"))
            for (const auto& s : r.at("sources"))
                os << "learn " << r.at("name").get<std::string>() << " source " << s.at("source") << ": "
                   << s.at("outcomes").at("ex_success") << " ex, " << s.at("outcomes").at("partial_success") << " partial, "
                   << s.at("outcomes").at("failure") << " failure, " << s.at("outcomes").at("undecided") << " undecided of "
                   << s.at("streams") << "\n";
    if (auto it = rs.find("construct-sparse"); it != rs.end()) {
        const auto& s = it->second.summary;
        os << "construct-sparse: active stages " << s.at("active").dump() << ", check "
           << (s.at("check").at("ok").get<bool>() ? "ok" : "FAILED") << "\n";
        for (const auto& r : s.at("reports"))
            os << "  index " << r.at("index") << ": " << r.at("length") << "/" << r.at("quota")
               << (r.at("complete").get<bool>() ? " complete" : "") << (r.at("horizon_incomplete").get<bool>() ? " horizon-incomplete" : "")
               << "\n";
        if (s.contains("fixed_point"))
            os << "  compressor weight " << s.at("fixed_point").at("compressor_weight_str").get<std::string>() << ", guarantee "
               << (s.at("fixed_point").at("guarantee_holds").get<bool>() ? "holds" : "FAILED") << "\n";
    }
    if (auto it = rs.find("dominate"); it != rs.end())
        for (const auto& r : it->second.summary.at("runs")) {
            os << "dominate " << r.at("name").get<std::string>() << ": " << r.at("outcome").get<std::string>() << "\n";
            if (!r.contains("report")) continue;
            for (const auto& row : r.at("report").at("rows"))
                os << "  t=" << row.at("t") << " f=" << row.at("f") << " h=" << row.at("h")
                   << " lambda(D_t)=" << row.at("lambda_D_t_str").get<std::string>() << "\n";
            os << "  lambda(union D_t) = " << r.at("report").at("lambda_union_str").get<std::string>() << "\n";
        }
    return os.str();
}

inline ExperimentResult run_experiment(const Scenario& sc, const std::string& sub, const RunOptions& opt) {
    OutputSink out(opt.out);
    if (sub == "validate") return run_validate(sc, opt, out);
    if (sub == "sample") return run_sample(sc, opt, out);
    if (sub == "learn") return run_learn(sc, opt, out);
    if (sub == "construct-sparse") return run_construct_sparse(sc, opt, out);
    if (sub == "dominate") return run_dominate(sc, opt, out);
    if (sub == "report") {
        std::map<std::string, ExperimentResult> rs;
        rs["validate"] = run_validate(sc, opt, out);
        if (sc.sample) rs["sample"] = run_sample(sc, opt, out);
        if (!sc.learn.empty()) rs["learn"] = run_learn(sc, opt, out);
        if (sc.sparse) rs["construct-sparse"] = run_construct_sparse(sc, opt, out);
        if (!sc.dominate.empty()) rs["dominate"] = run_dominate(sc, opt, out);
        ExperimentResult all;
        for (auto& [k, r] : rs) {
            all.summary[k] = r.summary;
            for (auto& b : r.broken) all.broken.push_back(k + ": " + b);
        }
        all.summary["broken"] = all.broken;
        out.json("summary.json", all.summary);
        out.text("summary.txt", summary_text(sc, rs));
        return all;
    }
    throw ScenarioError("unknown subcommand '" + sub + "'");
}

}  // namespace mlearn
