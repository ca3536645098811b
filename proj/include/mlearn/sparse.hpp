#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "mlearn/analysis.hpp"
#include "mlearn/clopen.hpp"

namespace mlearn {

struct SparseParams {
    IntFunction h = IntFunction::polynomial({0, 1});
    IntFunction g = IntFunction::constant(1);
    IntFunction p = IntFunction::polynomial({1, 1});
    std::vector<Index> family;
    Stage max_stage = 0;
    /// Blockers are scanned on n in (s+1, min(p(s+1), s+1+scan_cap)].
    std::uint64_t scan_cap = 1 << 16;
};

/// What happened on the transition into stage s (from length s-1 to s).
struct StageAction {
    bool acting = false;
    std::size_t family_pos = 0;
};

/// λ as an automaton over the construction's actions. State: [len, inC, family states...].
/// On an acting transition the heavier child under μ_i leaves C (the 0-child on ties);
/// λ(σ) = 2^-quiet(|σ|) on C and 0 off it. Beyond the recorded actions every stage is quiet.
class SparseLaw final : public MeasureLaw {
public:
    explicit SparseLaw(std::vector<LawPtr> family_laws) : laws_(std::move(family_laws)) {
        width_ = 2;
        for (const auto& l : laws_) {
            offsets_.push_back(width_);
            width_ += l->width();
        }
        quiet_.push_back(0);
    }

    /// Construction only: record the action for the next stage.
    void append_action(StageAction a) {
        if (a.acting && a.family_pos >= laws_.size()) throw InvariantViolation("acting family position out of range");
        actions_.push_back(a);
        quiet_.push_back(quiet_.back() + (a.acting ? 0 : 1));
    }

    const std::vector<StageAction>& actions() const { return actions_; }
    std::size_t family_size() const { return laws_.size(); }

    /// Number of quiet stages among 1..len.
    std::uint64_t quiet(std::uint64_t len) const {
        const auto n = actions_.size();
        return len <= n ? quiet_[len] : quiet_[n] + (len - n);
    }

    std::size_t width() const override { return width_; }
    void append_root(LawState& out) const override {
        out.push_back(0);
        out.push_back(1);
        for (const auto& l : laws_) l->append_root(out);
    }
    void append_step(StateView in, int bit, LawState& out) const override {
        const auto len = in[0];
        bool inC = in[1] != 0;
        const auto base = out.size();
        out.push_back(len + 1);
        out.push_back(0);
        if (!inC) {
            out.resize(base + width_, 0);
            return;
        }
        for (std::size_t k = 0; k < laws_.size(); ++k) laws_[k]->append_step(part(in, k), bit, out);
        if (static_cast<std::size_t>(len) < actions_.size() && actions_[len].acting) {
            if (bit != kept_child(in, actions_[len].family_pos)) inC = false;
        }
        if (inC) {
            out[base + 1] = 1;
        } else {
            std::fill(out.begin() + static_cast<std::ptrdiff_t>(base) + 2, out.end(), 0);
        }
    }
    Dyadic value(StateView st) const override {
        if (st[1] == 0) return Dyadic();
        return Dyadic::pow2(static_cast<std::int64_t>(quiet(static_cast<std::uint64_t>(st[0]))));
    }
    nlohmann::json to_json() const override {
        nlohmann::json acts = nlohmann::json::array();
        for (std::size_t s = 0; s < actions_.size(); ++s)
            if (actions_[s].acting) acts.push_back({{"stage", s + 1}, {"family_pos", actions_[s].family_pos}});
        return {{"kind", "sparse"}, {"stages", actions_.size()}, {"acting", acts}};
    }

    bool in_cover(StateView st) const { return st[1] != 0; }
    Dyadic family_value(StateView st, std::size_t k) const { return laws_[k]->value(part(st, k)); }

    /// The child kept in C when μ_k acts below this state: the lighter one, 1 on ties.
    int kept_child(StateView st, std::size_t k) const {
        LawState c0, c1;
        laws_[k]->append_step(part(st, k), 0, c0);
        laws_[k]->append_step(part(st, k), 1, c1);
        return laws_[k]->value(c0) < laws_[k]->value(c1) ? 0 : 1;
    }

private:
    StateView part(StateView st, std::size_t k) const { return st.subspan(offsets_[k], laws_[k]->width()); }

    std::vector<LawPtr> laws_;
    std::vector<std::size_t> offsets_;
    std::size_t width_ = 0;
    std::vector<StageAction> actions_;
    std::vector<std::uint64_t> quiet_;
};

struct TestMember {
    Stage stage;       // construction stage that defined it (G = C_stage)
    Stage defined_at;  // registry stage h(stage) at which μ_i(G) is known
    Dyadic mu;         // μ_i(C_stage)
};

struct StageRecord {
    Stage s = 0;
    std::string branch;  // init | quiet | suspended | acting
    std::optional<Index> acting;
    BigInt cover_size;
    Dyadic lambda_mass;
    std::optional<std::size_t> assignment;  // j with G^i_j := C_s

    nlohmann::json to_json() const {
        nlohmann::json j = {{"s", s}, {"branch", branch}};
        j["acting"] = acting ? nlohmann::json(*acting) : nlohmann::json(nullptr);
        j["cover_size"] = cover_size.str();
        j["lambda_mass"] = lambda_mass.to_json();
        j["test_assignment"] = assignment ? nlohmann::json{{"index", *acting}, {"j", *assignment}} : nlohmann::json(nullptr);
        return j;
    }
};

using CoverCounts = std::unordered_map<LawState, BigInt, LawStateHash>;

struct ConstructionState {
    Stage s = 0;
    std::shared_ptr<SparseLaw> law;
    CoverCounts cover;  // C_s grouped by λ-law state
    std::optional<Stage> last_active;
    std::map<Index, std::uint64_t> attention;
    std::vector<Stage> active;
    std::map<Index, std::vector<TestMember>> tests;
    std::vector<StageRecord> log;
};

struct IndexReport {
    Index index = 0;
    std::uint64_t quota = 0;
    std::size_t length = 0;
    bool complete = false;           // |G^i| = g(i): the certification flag
    bool dominates_h = false;        // tc_i(n) > h(n) on [1, max_stage]
    bool horizon_incomplete = false;  // neither of the above within the horizon
};

struct SparseResult {
    SparseParams params;
    std::shared_ptr<SparseLaw> lambda;
    std::vector<StageRecord> log;
    std::vector<Stage> active;
    std::map<Index, std::vector<TestMember>> tests;
    std::vector<IndexReport> reports;

    const IndexReport& report(Index i) const {
        for (const auto& r : reports)
            if (r.index == i) return r;
        throw UnknownIndex("index " + std::to_string(i) + " is not in the construction family");
    }
    std::vector<nlohmann::json> log_lines() const {
        std::vector<nlohmann::json> out;
        for (const auto& r : log) out.push_back(r.to_json());
        return out;
    }
};

namespace detail {

inline std::size_t family_position(const SparseParams& prm, Index i) {
    auto it = std::find(prm.family.begin(), prm.family.end(), i);
    if (it == prm.family.end()) throw UnknownIndex("index " + std::to_string(i) + " is not in the construction family");
    return static_cast<std::size_t>(it - prm.family.begin());
}

inline std::uint64_t attention_of(const ConstructionState& st, Index i) {
    auto it = st.attention.find(i);
    return it == st.attention.end() ? 0 : it->second;
}

inline bool converges_within(const MeasureRegistry& reg, Index i, std::uint64_t n, const IntFunction& h) {
    auto tc = reg.time_complexity(i, n);
    return tc && *tc <= h(n);
}

}  // namespace detail

/// i requires attention at stage s1 = s+1: i <= s, fewer than g(i) actions, μ_i on length
/// s1 known by stage h(s1), and no j < i in the family with quota left converges in time on
/// some n in the suspension window (s1, p(s1)].
inline bool requires_attention(const MeasureRegistry& reg, const SparseParams& prm, const ConstructionState& st,
                               Index i, Stage s1) {
    if (s1 == 0 || i > s1 - 1) return false;
    if (detail::attention_of(st, i) >= prm.g(i)) return false;
    if (!detail::converges_within(reg, i, s1, prm.h)) return false;
    const std::uint64_t top = std::min(prm.p(s1), sat_add(s1, prm.scan_cap));
    for (Index j : prm.family) {
        if (j >= i || detail::attention_of(st, j) >= prm.g(j)) continue;
        const auto* m = reg.measure(j);
        if (!m) continue;
        const auto& thr = m->schedule.defined_through();
        std::uint64_t hi = top;
        if (thr) {
            if (*thr < 0) continue;
            hi = std::min<std::uint64_t>(hi, static_cast<std::uint64_t>(*thr));
        }
        for (std::uint64_t n = s1 + 1; n <= hi; ++n)
            if (detail::converges_within(reg, j, n, prm.h)) return false;
    }
    return true;
}

inline bool suspended(const SparseParams& prm, const ConstructionState& st, Stage s1) {
    return st.last_active && s1 > *st.last_active && s1 <= prm.p(*st.last_active);
}

inline ConstructionState start_construction(const MeasureRegistry& reg, const SparseParams& prm) {
    ConstructionState st;
    std::vector<LawPtr> laws;
    for (Index i : prm.family) {
        const auto* m = reg.measure(i);
        if (!m) throw ScenarioError("construction family index " + std::to_string(i) + " has no measure");
        laws.push_back(m->law);
    }
    st.law = std::make_shared<SparseLaw>(std::move(laws));
    st.cover[st.law->root()] = 1;
    st.log.push_back({0, "init", std::nullopt, BigInt(1), Dyadic(1), std::nullopt});
    return st;
}

/// Apply a decided action to the state: extend λ, step the cover, record test members.
inline void apply_action(const SparseParams& prm, ConstructionState& st,
                         const std::string& branch, std::optional<Index> acting) {
    const Stage s1 = st.s + 1;
    StageAction a;
    if (acting) {
        a.acting = true;
        a.family_pos = detail::family_position(prm, *acting);
    }
    st.law->append_action(a);
    CoverCounts next;
    for (const auto& [state, count] : st.cover)
        for (int bit = 0; bit < 2; ++bit) {
            auto c = st.law->step(state, bit);
            if (st.law->in_cover(c)) next[std::move(c)] += count;
        }
    st.cover = std::move(next);
    st.s = s1;

    StageRecord rec{s1, branch, acting, BigInt(0), Dyadic(), std::nullopt};
    for (const auto& [state, count] : st.cover) {
        rec.cover_size += count;
        rec.lambda_mass += Dyadic::from_parts(count, 0) * st.law->value(state);
    }
    if (acting) {
        Dyadic mu;
        for (const auto& [state, count] : st.cover) mu += Dyadic::from_parts(count, 0) * st.law->family_value(state, a.family_pos);
        auto& members = st.tests[*acting];
        rec.assignment = members.size();
        members.push_back({s1, prm.h(s1), mu});
        ++st.attention[*acting];
        st.active.push_back(s1);
        st.last_active = s1;
    }
    st.log.push_back(std::move(rec));
}

/// One stage of the construction.
inline void construction_step(const MeasureRegistry& reg, const SparseParams& prm, ConstructionState& st) {
    const Stage s1 = st.s + 1;
    if (suspended(prm, st, s1)) return apply_action(prm, st, "suspended", std::nullopt);
    std::vector<Index> order = prm.family;
    std::sort(order.begin(), order.end());
    for (Index i : order)
        if (requires_attention(reg, prm, st, i, s1)) return apply_action(prm, st, "acting", i);
    apply_action(prm, st, "quiet", std::nullopt);
}

inline void validate_params(const MeasureRegistry& reg, const SparseParams& prm) {
    if (prm.family.empty()) throw ScenarioError("construction family is empty");
    if (!prm.p.strictly_increasing_below(prm.max_stage + 1))
        throw ScenarioError("p must be strictly increasing on [0, max_stage]");
    for (std::size_t a = 0; a < prm.family.size(); ++a) {
        reg.require_slot(prm.family[a]);
        for (std::size_t b = 0; b < a; ++b)
            if (prm.family[a] == prm.family[b]) throw ScenarioError("construction family lists an index twice");
    }
}

inline SparseResult finish_construction(const MeasureRegistry& reg, const SparseParams& prm, ConstructionState st) {
    SparseResult r;
    r.params = prm;
    r.lambda = st.law;
    r.log = std::move(st.log);
    r.active = std::move(st.active);
    r.tests = std::move(st.tests);
    for (Index i : prm.family) {
        IndexReport rep;
        rep.index = i;
        rep.quota = prm.g(i);
        auto it = r.tests.find(i);
        rep.length = it == r.tests.end() ? 0 : it->second.size();
        rep.complete = rep.length == rep.quota;
        rep.dominates_h = reg.dominates(i, prm.h, 1, prm.max_stage);
        rep.horizon_incomplete = !rep.complete && !rep.dominates_h;
        r.reports.push_back(rep);
    }
    return r;
}

inline SparseResult build_sparse(const MeasureRegistry& reg, const SparseParams& prm) {
    validate_params(reg, prm);
    auto st = start_construction(reg, prm);
    while (st.s < prm.max_stage) construction_step(reg, prm, st);
    return finish_construction(reg, prm, std::move(st));
}

/// Rebuild from a construction log, taking branches from the log; every re-derived line
/// must equal the logged one.
inline SparseResult replay_construction(const MeasureRegistry& reg, const SparseParams& prm,
                                        const std::vector<nlohmann::json>& lines) {
    validate_params(reg, prm);
    if (lines.empty() || lines.front() != StageRecord{0, "init", std::nullopt, BigInt(1), Dyadic(1), std::nullopt}.to_json())
        throw InvariantViolation("construction log does not start with the init record");
    auto st = start_construction(reg, prm);
    for (std::size_t k = 1; k < lines.size(); ++k) {
        const auto& l = lines[k];
        std::optional<Index> acting;
        if (!l.at("acting").is_null()) acting = l.at("acting").get<Index>();
        apply_action(prm, st, l.at("branch").get<std::string>(), acting);
        if (st.log.back().to_json() != l)
            throw InvariantViolation("construction replay diverged at stage " + std::to_string(k) + ": " +
                                     st.log.back().to_json().dump() + " vs " + l.dump());
    }
    auto p2 = prm;
    p2.max_stage = st.s;
    return finish_construction(reg, p2, std::move(st));
}

/// All strings of C_a, in lexicographic order; refuses covers larger than limit.
inline std::vector<BitString> enumerate_cover(const SparseLaw& law, Stage a, std::size_t limit) {
    const auto q = law.quiet(a);
    if (q >= 63 || (std::uint64_t{1} << q) > limit)
        throw Error("cover C_" + std::to_string(a) + " has 2^" + std::to_string(q) + " strings, above the limit");
    std::vector<BitString> out;
    out.reserve(std::size_t{1} << q);
    std::vector<std::pair<LawState, BitString>> stack{{law.root(), BitString()}};
    while (!stack.empty()) {
        auto [state, s] = std::move(stack.back());
        stack.pop_back();
        if (s.size() == a) {
            out.push_back(std::move(s));
            continue;
        }
        for (int bit = 1; bit >= 0; --bit) {
            auto c = law.step(state, bit);
            if (law.in_cover(c)) stack.emplace_back(std::move(c), s.child(bit));
        }
    }
    return out;
}

/// X↾s has a prefix in C_s for all s <= |X| (membership of the finite cover sequence).
inline bool in_covers(const SparseLaw& law, const BitString& x) {
    LawState st = law.root();
    for (std::size_t n = 0; n < x.size(); ++n) {
        st = law.step(st, x[n]);
        if (!law.in_cover(st)) return false;
    }
    return true;
}

/// Check of the construction invariants; returns human-readable violations.
struct SparseCheck {
    std::vector<std::string> violations;
    bool ok() const { return violations.empty(); }
};

inline SparseCheck check_sparse(const MeasureRegistry& reg, const SparseResult& r) {
    SparseCheck c;
    auto fail = [&](std::string m) { c.violations.push_back(std::move(m)); };
    const auto& prm = r.params;
    for (const auto& rec : r.log) {
        if (rec.lambda_mass != Dyadic(1)) fail("lambda(C_" + std::to_string(rec.s) + ") = " + rec.lambda_mass.to_string());
        if (rec.cover_size > (BigInt(1) << rec.s)) fail("|C_" + std::to_string(rec.s) + "| exceeds 2^s");
        if (rec.cover_size != (BigInt(1) << r.lambda->quiet(rec.s)))
            fail("|C_" + std::to_string(rec.s) + "| != 2^quiet");
    }
    for (std::size_t k = 0; k + 1 < r.active.size(); ++k)
        if (!(prm.p(r.active[k]) < r.active[k + 1]))
            fail("active stages " + std::to_string(r.active[k]) + ", " + std::to_string(r.active[k + 1]) + " violate p");
    for (const auto& [i, members] : r.tests) {
        if (members.size() > prm.g(i)) fail("index " + std::to_string(i) + " exceeded its quota");
        for (std::size_t j = 0; j < members.size(); ++j) {
            if (members[j].mu > Dyadic::pow2(static_cast<std::int64_t>(j)))
                fail("mu_" + std::to_string(i) + "(G_" + std::to_string(j) + ") > 2^-j");
            if (j + 1 < members.size() && !(members[j + 1].mu <= members[j].mu.halve()))
                fail("mu_" + std::to_string(i) + "(G_" + std::to_string(j + 1) + ") > half of G_" + std::to_string(j));
            if (!reg.time_complexity(i, members[j].stage) || *reg.time_complexity(i, members[j].stage) > members[j].defined_at)
                fail("mu_" + std::to_string(i) + " undefined on G_" + std::to_string(j) + " at assignment");
        }
    }
    // Enough quiet stages: at least max_stage - sum g(i) * (1 + longest suspension).
    std::uint64_t quiet = 0, longest = 0, quota = 0;
    for (const auto& rec : r.log)
        if (rec.branch == "quiet" || rec.branch == "suspended") ++quiet;
    for (auto a : r.active) longest = std::max(longest, prm.p(a) - a);
    for (Index i : prm.family) quota = sat_add(quota, prm.g(i));
    const auto need = sat_mul(quota, 1 + longest);
    if (need < prm.max_stage && quiet < prm.max_stage - need) fail("too few quiet stages");
    return c;
}

/// Lemma realization via reservation: reserve the test family t, build with g1(e) =
/// q(t, e, g0(e)), fill λ and the tests, then run every compressor in stage order.
struct FixedPointResult {
    std::uint64_t test_family = 0;
    Index lambda_index = 0;
    SparseResult sparse;
    std::vector<CompressorFiring> firings;
    Dyadic compressor_weight;
};

inline FixedPointResult fixed_point_compose(Environment& env, ClopenTestRegistry& tests, Index lambda_slot,
                                            const std::string& compressor, SparseParams prm, const IntFunction& g0,
                                            std::size_t cover_limit = std::size_t{1} << 20) {
    FixedPointResult out;
    auto slot = env.machine.find(compressor);
    if (!slot || env.machine.slot(*slot).is_coder()) throw ScenarioError("no request machine named '" + compressor + "'");
    const std::uint64_t x = env.machine.slot(*slot).constant;
    const Dyadic before = env.machine.slot(*slot).log().weight();
    out.test_family = tests.reserve("G");
    const auto t = out.test_family;
    prm.g = IntFunction::custom({{"kind", "q"}, {"t", t}, {"x", x}, {"g0", g0.to_json()}},
                                [t, x, g0](std::uint64_t e) { return q_index(t, e, g0(e), x); });
    out.sparse = build_sparse(env.registry, prm);
    env.registry.fill(lambda_slot, {"lambda", out.sparse.lambda, Schedule::immediate()});
    out.lambda_index = lambda_slot;

    UniformTestFamily family;
    for (const auto& [i, members] : out.sparse.tests) {
        ClopenTest test{i, {}};
        for (const auto& m : members) test.members.push_back({m.stage, enumerate_cover(*out.sparse.lambda, m.stage, cover_limit)});
        family.emplace(i, std::move(test));
    }
    tests.fill(t, std::move(family));

    const auto* filled = tests.get(t);
    std::vector<CompressorFiring> planned;
    for (Index e : prm.family) {
        auto it = filled->find(e);
        if (it == filled->end()) continue;
        auto f = plan_compression(env, compressor, t, e, g0(e), it->second, kSaturated);
        if (f) planned.push_back(std::move(*f));
    }
    std::stable_sort(planned.begin(), planned.end(),
                     [](const CompressorFiring& a, const CompressorFiring& b) { return a.stage < b.stage; });
    for (auto& f : planned) issue_compression(env, compressor, f);
    out.firings = std::move(planned);
    out.compressor_weight = env.machine.slot(*slot).log().weight() - before;
    return out;
}

}  // namespace mlearn
