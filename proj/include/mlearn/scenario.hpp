#pragma once

#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <type_traits>
#include <vector>

#include "mlearn/domination.hpp"

namespace mlearn {

namespace detail {

/// Field access that names the JSON location on failure.
class At {
public:
    At(const nlohmann::json& j, std::string where) : j_(j), where_(std::move(where)) {}

    const nlohmann::json& json() const { return j_; }
    const std::string& where() const { return where_; }

    [[noreturn]] void fail(const std::string& msg) const { throw ScenarioError(where_ + ": " + msg); }

    bool has(const std::string& key) const { return j_.is_object() && j_.contains(key); }
    At operator[](const std::string& key) const {
        if (!j_.is_object()) fail("expected an object");
        if (!j_.contains(key)) fail("missing field '" + key + "'");
        return {j_.at(key), where_ + "." + key};
    }
    At operator[](std::size_t k) const { return {j_.at(k), where_ + "[" + std::to_string(k) + "]"}; }
    std::size_t size() const {
        if (!j_.is_array()) fail("expected an array");
        return j_.size();
    }

    std::uint64_t nat() const {
        if (!j_.is_number_integer() || j_.get<std::int64_t>() < 0) fail("expected a natural number, got " + j_.dump());
        return j_.get<std::uint64_t>();
    }
    std::uint64_t nat_or(const std::string& key, std::uint64_t dflt) const { return has(key) ? (*this)[key].nat() : dflt; }
    std::string str() const {
        if (!j_.is_string()) fail("expected a string, got " + j_.dump());
        return j_.get<std::string>();
    }
    bool boolean() const {
        if (!j_.is_boolean()) fail("expected true or false, got " + j_.dump());
        return j_.get<bool>();
    }
    std::vector<std::uint64_t> nats() const {
        std::vector<std::uint64_t> out;
        for (std::size_t k = 0; k < size(); ++k) out.push_back((*this)[k].nat());
        return out;
    }

    // Re-throw module parse errors with the location attached.
    template <class F>
    auto parse(F&& f) const -> std::invoke_result_t<F, const nlohmann::json&> {
        try {
            return f(j_);
        } catch (const ScenarioError& e) {
            fail(e.what());
        } catch (const nlohmann::json::exception& e) {
            fail(e.what());
        }
    }

private:
    const nlohmann::json& j_;
    std::string where_;
};

inline Dyadic dyadic_at(const At& a) { return a.parse([](const nlohmann::json& j) { return Dyadic::from_json(j); }); }
inline IntFunction function_at(const At& a) { return a.parse([](const nlohmann::json& j) { return IntFunction::from_json(j); }); }

inline LawPtr law_at(const At& a) {
    const auto kind = a["kind"].str();
    if (kind == "uniform") return std::make_shared<UniformLaw>();
    if (kind == "bernoulli") {
        auto q = dyadic_at(a["q"]);
        return a.parse([&](const nlohmann::json&) { return std::make_shared<BernoulliLaw>(q); });
    }
    if (kind == "table" || kind == "conditionals") {
        const auto key = kind == "table" ? "values" : "conditionals";
        auto t = a[key];
        if (!t.json().is_object()) t.fail("expected an object keyed by binary strings");
        std::map<BitString, Dyadic> m;
        for (const auto& [k, v] : t.json().items()) {
            At entry(v, t.where() + "[\"" + k + "\"]");
            m.emplace(entry.parse([&](const nlohmann::json&) { return BitString(k); }), dyadic_at(entry));
        }
        return a.parse([&](const nlohmann::json&) -> LawPtr {
            return kind == "table" ? TableLaw::from_values(m) : TableLaw::from_conditionals(m);
        });
    }
    if (kind == "mixture") {
        auto comps = a["components"];
        std::vector<std::pair<Dyadic, LawPtr>> parts;
        for (std::size_t k = 0; k < comps.size(); ++k) parts.emplace_back(dyadic_at(comps[k]["weight"]), law_at(comps[k]["measure"]));
        return a.parse([&](const nlohmann::json&) { return std::make_shared<MixtureLaw>(parts); });
    }
    a["kind"].fail("unknown measure kind '" + kind + "'");
}

}  // namespace detail

struct MeasureDecl {
    std::string name;
    bool reserved = false;
    LawPtr law;  // null when reserved
    Schedule schedule = Schedule::never();
};

struct MachineDecl {
    std::string name;
    std::uint64_t constant = 1;
    std::optional<Index> coder_of;  // measure coder; request machine otherwise
    LengthCode code;
};

/// Learner choice as written in the scenario; built against an environment on demand.
struct LearnerSpec {
    nlohmann::json json;

    std::string kind() const { return json.at("kind").get<std::string>(); }

    LearnerPtr build(const HighOracle& oracle) const { return build(json, oracle); }

private:
    static LearnerPtr build(const nlohmann::json& j, const HighOracle& oracle) {
        const auto kind = j.at("kind").get<std::string>();
        if (kind == "oracle-ex") return std::make_shared<OracleExLearner>(oracle);
        if (kind == "uniform-family") return std::make_shared<UniformFamilyLearner>(j.at("family").get<std::vector<Index>>());
        if (kind == "partial")
            return std::make_shared<PartialLearner>(j.value("reading", std::string("literal")) == "alternative"
                                                        ? PartialLearner::Reading::alternative
                                                        : PartialLearner::Reading::literal);
        if (kind == "strong") return std::make_shared<StrongWrapper>(build(j.at("inner"), oracle));
        if (kind == "constant") return std::make_shared<ConstantLearner>(j.at("index").get<Index>());
        if (kind == "churn") return std::make_shared<ChurnLearner>(j.at("base").get<Index>());
        if (kind == "hedge") return std::make_shared<HedgeLearner>(j.at("base").get<Index>());
        throw ScenarioError("unknown learner kind '" + kind + "'");
    }
};

struct LearnRun {
    std::string name;
    LearnerSpec learner;
    std::vector<Index> sources;
    std::size_t streams = 100;
    std::size_t length = 200;
    ClassifyParams classify;
};

struct SparseExperiment {
    SparseParams params;
    Index lambda_slot = 0;
    // fixed-point mode: g is derived from g0 and the compressor's test family
    std::optional<IntFunction> g0;
    std::string compressor;
};

struct DominateRun {
    std::string name;
    LearnerSpec learner;
    SparseParams construction;  // g = m+2 and p = h+1 unless overridden
    DominationParams domination;
    DichotomyParams dichotomy;
    std::size_t prefill = 0;  // cache learner outputs on every string up to this length first
};

struct SampleExperiment {
    std::vector<Index> measures;
    std::size_t count = 5;
    std::size_t length = 64;
};

struct Scenario {
    std::string path;
    std::string name;
    std::size_t stride = 0;
    std::vector<MeasureDecl> measures;
    std::vector<MachineDecl> machines;
    HighOracle oracle;
    std::uint64_t seed = 0;
    std::size_t validate_depth = 12;

    std::vector<LearnRun> learn;
    std::optional<SparseExperiment> sparse;
    Index dominate_lambda = 0;
    std::vector<DominateRun> dominate;
    std::optional<SampleExperiment> sample;

    /// A fresh registry and machine; reserved slots stay empty for the experiment to fill.
    Environment environment() const {
        Environment env{MeasureRegistry(stride), {}};
        for (const auto& m : measures) {
            if (m.reserved)
                env.registry.reserve(m.name);
            else
                env.registry.add({m.name, m.law, m.schedule});
        }
        env.registry.freeze();
        for (const auto& m : machines) {
            if (m.coder_of)
                env.machine.add_coder(m.name, m.constant, *m.coder_of, m.code);
            else
                env.machine.add_request_machine(m.name, m.constant);
        }
        return env;
    }
};

namespace detail {

inline HighOracle oracle_at(const At& a) {
    std::map<std::size_t, HighOracle::Script> scripts;
    auto list = a["scripts"];
    for (std::size_t k = 0; k < list.size(); ++k) {
        auto s = list[k];
        HighOracle::Script sc;
        sc.converge = s.nat_or("converge", 0);
        if (s.has("before")) sc.before = s["before"].boolean();
        if (s.has("values")) {
            auto v = s["values"];
            for (std::size_t i = 0; i < v.size(); ++i) sc.values.push_back(v[i].boolean());
        }
        const auto slot = s["slot"].nat();
        if (!scripts.emplace(slot, sc).second) s["slot"].fail("slot scripted twice");
    }
    return HighOracle(std::move(scripts));
}

inline ClassifyParams classify_at(const At& a) {
    ClassifyParams c;
    c.window = a.nat_or("window", 0);
    if (a.has("threshold") && !a["threshold"].json().is_null()) {
        const auto& t = a["threshold"].json();
        if (!t.is_number_integer()) a["threshold"].fail("expected an integer");
        c.threshold = t.get<std::int64_t>();
    }
    return c;
}

class Loader {
public:
    Loader(Scenario& sc, const nlohmann::json& root) : sc_(sc), root_(root, sc.path) {}

    void run() {
        sc_.name = root_.has("name") ? root_["name"].str() : std::string("scenario");
        sc_.seed = root_.has("seeds") ? root_["seeds"].nat_or("base", 0) : 0;
        registry(root_["registry"]);
        if (root_.has("machine")) machine(root_["machine"]);
        if (root_.has("oracle")) sc_.oracle = oracle_at(root_["oracle"]);
        if (root_.has("experiments")) experiments(root_["experiments"]);
    }

private:
    void registry(const At& r) {
        sc_.stride = r.nat_or("stride", 0);
        auto list = r["measures"];
        if (list.size() == 0) list.fail("registry needs at least one measure");
        std::set<std::string> names;
        for (std::size_t k = 0; k < list.size(); ++k) {
            auto m = list[k];
            MeasureDecl d;
            d.name = m.has("name") ? m["name"].str() : "m" + std::to_string(k);
            if (!names.insert(d.name).second) m["name"].fail("duplicate measure name '" + d.name + "'");
            d.reserved = m.has("reserved") && m["reserved"].boolean();
            if (d.reserved) {
                if (m.has("law")) m["law"].fail("a reserved slot is filled by an experiment, not declared");
            } else {
                d.law = law_at(m["law"]);
                d.schedule = m.has("schedule") ? m["schedule"].parse([](const nlohmann::json& j) { return Schedule::from_json(j); })
                                               : Schedule::immediate();
                if (m.has("total") && m["total"].boolean() != d.schedule.total())
                    m["total"].fail(std::string("declared ") + (d.schedule.total() ? "partial" : "total") +
                                    " but the schedule is " + (d.schedule.total() ? "total" : "partial"));
            }
            sc_.measures.push_back(std::move(d));
        }
        if (sc_.stride != 0 && sc_.stride < sc_.measures.size()) r["stride"].fail("stride below the slot count");
    }

    std::size_t stride() const { return std::max(sc_.stride, sc_.measures.size()); }

    Index index_at(const At& a) const {
        const auto i = a.nat();
        if (sc_.measures.empty() || i % stride() >= sc_.measures.size())
            a.fail("index " + std::to_string(i) + " does not exist in the registry");
        return i;
    }
    Index slot_at(const At& a) const {
        const auto i = a.nat();
        if (i >= sc_.measures.size()) a.fail("slot " + std::to_string(i) + " does not exist in the registry");
        return i;
    }
    Index reserved_at(const At& a) const {
        const auto i = slot_at(a);
        if (!sc_.measures[i].reserved) a.fail("slot " + std::to_string(i) + " is not reserved");
        return i;
    }
    std::vector<Index> indices_at(const At& a) const {
        std::vector<Index> out;
        for (std::size_t k = 0; k < a.size(); ++k) out.push_back(index_at(a[k]));
        return out;
    }

    void machine(const At& m) {
        Dyadic weight;
        std::set<std::string> names;
        auto add = [&](const At& e, MachineDecl d) {
            if (d.constant == 0) e["constant"].fail("coding constant must be positive");
            if (!names.insert(d.name).second) e["name"].fail("machine '" + d.name + "' declared twice");
            weight += Dyadic::pow2(static_cast<std::int64_t>(d.constant));
            if (weight > Dyadic(1))
                m.fail("machine block violates Kraft: sum of 2^-const reaches " + weight.to_string() + " > 1 at '" + d.name + "'");
            sc_.machines.push_back(std::move(d));
        };
        if (m.has("coders")) {
            auto list = m["coders"];
            for (std::size_t k = 0; k < list.size(); ++k) {
                auto c = list[k];
                MachineDecl d{c["name"].str(), c["constant"].nat(), slot_at(c["measure"]), {}};
                if (sc_.measures[*d.coder_of].reserved) c["measure"].fail("a coder cannot read a reserved slot");
                if (c.has("length_code")) d.code = c["length_code"].parse([](const nlohmann::json& j) { return LengthCode::from_json(j); });
                add(c, std::move(d));
            }
        }
        if (m.has("request_machines")) {
            auto list = m["request_machines"];
            for (std::size_t k = 0; k < list.size(); ++k) add(list[k], {list[k]["name"].str(), list[k]["constant"].nat(), std::nullopt, {}});
        }
    }

    LearnerSpec learner_at(const At& a) const {
        const auto kind = a["kind"].str();
        if (kind == "uniform-family") {
            auto fam = indices_at(a["family"]);
            if (fam.empty()) a["family"].fail("empty family");
            for (std::size_t k = 0; k < fam.size(); ++k) {
                const auto& d = sc_.measures[fam[k] % stride()];
                if (d.reserved || !d.schedule.total()) a["family"][k].fail("family member is not total");
            }
        } else if (kind == "partial") {
            if (a.has("reading")) {
                auto r = a["reading"].str();
                if (r != "literal" && r != "alternative") a["reading"].fail("reading must be literal or alternative");
            }
        } else if (kind == "strong") {
            learner_at(a["inner"]);
        } else if (kind == "constant") {
            index_at(a["index"]);
        } else if (kind == "churn" || kind == "hedge") {
            index_at(a["base"]);
        } else if (kind != "oracle-ex") {
            a["kind"].fail("unknown learner kind '" + kind + "'");
        }
        return {a.json()};
    }

    void claim(const At& a, Index slot) {
        if (!claimed_.insert(slot).second) a.fail("reserved slot " + std::to_string(slot) + " filled twice");
    }

    void experiments(const At& e) {
        for (const auto& [key, _] : e.json().items())
            if (key != "learn" && key != "construct-sparse" && key != "dominate" && key != "sample" && key != "validate")
                e.fail("unknown experiment '" + key + "'");
        if (e.has("validate")) sc_.validate_depth = e["validate"].nat_or("depth", 12);
        if (e.has("sample")) {
            auto s = e["sample"];
            sc_.sample = SampleExperiment{indices_at(s["measures"]), s.nat_or("count", 5), s.nat_or("length", 64)};
            for (std::size_t k = 0; k < sc_.sample->measures.size(); ++k)
                if (sc_.measures[sc_.sample->measures[k] % stride()].reserved) s["measures"][k].fail("cannot sample a reserved slot");
        }
        if (e.has("learn")) {
            auto runs = e["learn"]["runs"];
            for (std::size_t k = 0; k < runs.size(); ++k) {
                auto r = runs[k];
                LearnRun lr;
                lr.name = r["name"].str();
                lr.learner = learner_at(r["learner"]);
                lr.sources = indices_at(r["sources"]);
                for (std::size_t i = 0; i < lr.sources.size(); ++i) {
                    const auto& d = sc_.measures[lr.sources[i] % stride()];
                    if (d.reserved || !d.schedule.total()) r["sources"][i].fail("a stream source must be total");
                }
                lr.streams = r.nat_or("streams", 100);
                lr.length = r.nat_or("length", 200);
                lr.classify = classify_at(r);
                sc_.learn.push_back(std::move(lr));
            }
        }
        if (e.has("construct-sparse")) {
            auto c = e["construct-sparse"];
            SparseExperiment x;
            x.params = construction_at(c, nullptr);
            x.lambda_slot = reserved_at(c["lambda_slot"]);
            claim(c["lambda_slot"], x.lambda_slot);
            if (c.has("fixed_point")) {
                auto f = c["fixed_point"];
                x.g0 = function_at(f["g0"]);
                x.compressor = f["compressor"].str();
                bool found = false;
                for (const auto& m : sc_.machines) found = found || (m.name == x.compressor && !m.coder_of);
                if (!found) f["compressor"].fail("no request machine named '" + x.compressor + "'");
            }
            sc_.sparse = std::move(x);
        }
        if (e.has("dominate")) {
            auto d = e["dominate"];
            sc_.dominate_lambda = reserved_at(d["lambda_slot"]);
            if (claimed_.count(sc_.dominate_lambda))
                d["lambda_slot"].fail("reserved slot " + std::to_string(sc_.dominate_lambda) + " filled twice");
            auto runs = d["runs"];
            for (std::size_t k = 0; k < runs.size(); ++k) {
                auto r = runs[k];
                DominateRun dr;
                dr.name = r["name"].str();
                dr.learner = learner_at(r["learner"]);
                dr.construction = construction_at(r, &dr);
                dr.domination.h = dr.construction.h;
                dr.domination.T = r.nat_or("T", 8);
                dr.domination.search_cap = r.nat_or("search_cap", 64);
                dr.domination.node_budget = r.nat_or("node_budget", std::uint64_t{1} << 22);
                dr.dichotomy.streams = r.nat_or("streams", 20);
                dr.dichotomy.stream_length = r.nat_or("stream_length", 200);
                dr.dichotomy.classify = classify_at(r);
                dr.prefill = r.nat_or("prefill", 0);
                sc_.dominate.push_back(std::move(dr));
            }
        }
    }

    // h, g, p, family, max_stage. Domination runs default g to m+2 and p to h+1.
    SparseParams construction_at(const At& c, const DominateRun* dom) const {
        SparseParams p;
        p.h = function_at(c["h"]);
        if (c.has("g")) {
            p.g = function_at(c["g"]);
        } else if (dom) {
            p.g = IntFunction::custom({{"kind", "m+2"}}, [](std::uint64_t m) { return sat_add(m, 2); });
        } else {
            c["g"].fail("missing");
        }
        if (c.has("p")) {
            p.p = function_at(c["p"]);
        } else if (dom) {
            auto h = std::make_shared<const IntFunction>(p.h);
            p.p = IntFunction::custom({{"kind", "h+1"}, {"h", h->to_json()}}, [h](std::uint64_t n) { return sat_add((*h)(n), 1); });
        } else {
            c["p"].fail("missing");
        }
        p.family = indices_at(c["family"]);
        for (std::size_t k = 0; k < p.family.size(); ++k)
            if (p.family[k] >= sc_.measures.size() || sc_.measures[p.family[k]].reserved)
                c["family"][k].fail("family entries must be declared, unreserved slots");
        p.max_stage = c.nat_or("max_stage", 120);
        p.scan_cap = c.nat_or("scan_cap", p.scan_cap);
        return p;
    }

    Scenario& sc_;
    At root_;
    std::set<Index> claimed_;
};

}  // namespace detail

inline Scenario parse_scenario(const nlohmann::json& j, std::string path = "<scenario>") {
    Scenario sc;
    sc.path = std::move(path);
    detail::Loader(sc, j).run();
    return sc;
}

inline Scenario load_scenario(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ScenarioError(path + ": cannot open");
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw ScenarioError(path + ": " + e.what());
    }
    return parse_scenario(j, path);
}

}  // namespace mlearn
