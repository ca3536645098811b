#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "mlearn/deficiency.hpp"

namespace mlearn {

/// One learner output on a prefix. A gap (no index) is the partial learner's no-output.
struct Prediction {
    std::optional<Index> index;
    bool fallback = false;
    Deficiency cost = Deficiency::undefined();
};

class Learner {
public:
    virtual ~Learner() = default;
    virtual std::string kind() const = 0;

    /// Outputs on x↾n for n = 0..|x|, each computed with stage n.
    virtual std::vector<Prediction> predict_prefixes(const Environment& env, const BitString& x) const = 0;

    virtual Prediction predict(const Environment& env, const BitString& sigma) const {
        return predict_prefixes(env, sigma).back();
    }
};

using LearnerPtr = std::shared_ptr<const Learner>;

/// Scripted limit-totality approximator f(e,s). From stage c(b) on it reports the true
/// totality of slot b; before that it reports the scripted value (or `before`).
class HighOracle {
public:
    struct Script {
        Stage converge = 0;
        bool before = false;
        std::vector<bool> values;  // values[s] for s < converge, overrides `before`
    };

    HighOracle() = default;
    explicit HighOracle(std::map<std::size_t, Script> scripts) : scripts_(std::move(scripts)) {}

    static HighOracle correct() { return HighOracle(); }

    bool operator()(const MeasureRegistry& reg, Index e, Stage s) const {
        auto b = reg.slot_of(e);
        if (!b) return false;
        auto it = scripts_.find(*b);
        if (it != scripts_.end() && s < it->second.converge) {
            const auto& sc = it->second;
            return s < sc.values.size() ? sc.values[s] : sc.before;
        }
        return reg.is_total(*b);
    }

    /// Least stage from which f(e,·) is constant for every slot.
    Stage convergence() const {
        Stage c = 0;
        for (const auto& [b, sc] : scripts_) c = std::max(c, sc.converge);
        return c;
    }

private:
    std::map<std::size_t, Script> scripts_;
};

namespace detail {

/// cost(x↾n, b)[n] - e for every slot b, or undefined when nothing is defined.
inline std::vector<Deficiency> prefix_maxima(const PrefixProfile& prof, std::size_t n) {
    std::vector<Deficiency> out;
    out.reserve(prof.slots());
    for (std::size_t b = 0; b < prof.slots(); ++b) out.push_back(prof.max_prefix_deficiency(b, n, n));
    return out;
}

inline Deficiency with_offset(const Deficiency& max_def, Index e) {
    if (!max_def.defined()) return Deficiency::finite(static_cast<std::int64_t>(e));
    return max_def.plus(static_cast<std::int64_t>(e));
}

}  // namespace detail

/// L(σ) = least i <= |σ| with f(i,|σ|) = 1 minimizing cost(σ,i)[|σ|]; index 0 flagged as
/// fallback when no candidate exists.
class OracleExLearner final : public Learner {
public:
    explicit OracleExLearner(HighOracle f) : f_(std::move(f)) {}
    std::string kind() const override { return "oracle-ex"; }

    std::vector<Prediction> predict_prefixes(const Environment& env, const BitString& x) const override {
        PrefixProfile prof(env, x);
        std::vector<Prediction> out;
        out.reserve(x.size() + 1);
        const auto& reg = env.registry;
        for (std::size_t n = 0; n <= x.size(); ++n) {
            auto maxima = detail::prefix_maxima(prof, n);
            Prediction best;
            for (Index i = 0; i <= n; ++i) {
                auto b = reg.slot_of(i);
                if (!b || !f_(reg, i, n)) continue;
                auto c = detail::with_offset(maxima[*b], i);
                if (!best.index || c < best.cost) best = {i, false, c};
            }
            if (!best.index) best = {Index{0}, true, Deficiency::undefined()};
            out.push_back(best);
        }
        return out;
    }

    const HighOracle& oracle() const { return f_; }

private:
    HighOracle f_;
};

/// Predicts the family member (registry index) minimizing d_i(σ)-max + position.
class UniformFamilyLearner final : public Learner {
public:
    explicit UniformFamilyLearner(std::vector<Index> family) : family_(std::move(family)) {
        if (family_.empty()) throw ScenarioError("uniform family learner needs a non-empty family");
    }
    std::string kind() const override { return "uniform-family"; }

    std::vector<Prediction> predict_prefixes(const Environment& env, const BitString& x) const override {
        for (auto i : family_)
            if (!env.registry.is_total(i)) throw ScenarioError("family member " + std::to_string(i) + " is not total");
        PrefixProfile prof(env, x);
        std::vector<Prediction> out;
        for (std::size_t n = 0; n <= x.size(); ++n) {
            Prediction best;
            for (std::size_t pos = 0; pos < family_.size(); ++pos) {
                auto b = env.registry.require_slot(family_[pos]);
                auto c = cost_from_profile(prof, b, pos, n, n);
                if (!best.index || c < best.cost) best = {family_[pos], false, c};
            }
            out.push_back(best);
        }
        return out;
    }

    const std::vector<Index>& family() const { return family_; }

private:
    std::vector<Index> family_;
};

/// ell_b[s] and the expansionary stages of every slot, for stages 0..N.
/// ell_b[s] is the largest ell <= s with 2^{<=ell} defined at stage s.
class ExpansionaryState {
public:
    ExpansionaryState(const MeasureRegistry& reg, Stage horizon) {
        const auto slots = reg.slot_count();
        ell_.assign(slots, std::vector<std::int64_t>(horizon + 1, -1));
        stages_.resize(slots);
        for (std::size_t b = 0; b < slots; ++b) {
            const auto* m = reg.measure(b);
            if (!m) continue;
            std::int64_t ell = -1;
            for (Stage s = 0; s <= horizon; ++s) {
                const std::int64_t prev = ell;
                while (ell + 1 <= static_cast<std::int64_t>(s)) {
                    auto tc = m->schedule.time_complexity(static_cast<std::uint64_t>(ell + 1));
                    if (!tc || *tc > s) break;
                    ++ell;
                }
                ell_[b][s] = ell;
                if (ell >= 0 && ell > prev) stages_[b].push_back(s);
            }
        }
    }

    std::int64_t ell(std::size_t slot, Stage s) const { return ell_[slot][s]; }
    bool expansionary(std::size_t slot, Stage s) const {
        return std::binary_search(stages_[slot].begin(), stages_[slot].end(), s);
    }
    const std::vector<Stage>& stages(std::size_t slot) const { return stages_[slot]; }

    /// Largest expansionary stage of the slot in [lo, hi], if any.
    std::optional<Stage> last_in(std::size_t slot, Stage lo, Stage hi) const {
        if (lo > hi) return std::nullopt;
        const auto& v = stages_[slot];
        auto it = std::upper_bound(v.begin(), v.end(), hi);
        if (it == v.begin()) return std::nullopt;
        --it;
        if (*it < lo) return std::nullopt;
        return *it;
    }

private:
    std::vector<std::vector<std::int64_t>> ell_;
    std::vector<std::vector<Stage>> stages_;
};

/// Theorem-2 partial learner. At s = |σ|: the least i <= s with s i-expansionary and
/// d_i(σ)[s] <= i; then p(i,j) for the least j exceeding every k-expansionary stage
/// t < s (k < i, k <= t) at which the disqualifier d_k(·)[t] <= k holds.
class PartialLearner final : public Learner {
public:
    enum class Reading { literal, alternative };

    explicit PartialLearner(Reading reading = Reading::literal) : reading_(reading) {}
    std::string kind() const override { return "partial"; }
    Reading reading() const { return reading_; }

    std::vector<Prediction> predict_prefixes(const Environment& env, const BitString& x) const override {
        const auto& reg = env.registry;
        PrefixProfile prof(env, x);
        ExpansionaryState exp(reg, x.size());
        std::vector<Prediction> out;
        out.reserve(x.size() + 1);
        for (std::size_t s = 0; s <= x.size(); ++s) {
            Prediction pred;
            std::optional<Index> chosen;
            for (Index i = 0; i <= s && !chosen; ++i) {
                auto b = reg.slot_of(i);
                if (!b || !exp.expansionary(*b, s)) continue;
                if (prof.deficiency(*b, s, s).at_most(static_cast<std::int64_t>(i))) chosen = i;
            }
            if (chosen) {
                const Index i = *chosen;
                std::optional<Stage> M;  // largest disqualifying stage
                for (Index k = 0; k < i; ++k) {
                    auto b = reg.slot_of(k);
                    if (!b || s == 0) continue;
                    std::size_t m = s;
                    if (reading_ == Reading::literal) {
                        if (k > s) continue;
                        m = static_cast<std::size_t>(k);
                    }
                    auto t = last_disqualifying(prof, exp, *b, m, k, s - 1);
                    if (t && (!M || *t > *M)) M = t;
                }
                std::uint64_t j = 0;
                if (M) {
                    // least j with i + (j+1)*stride > M
                    const auto stride = reg.stride();
                    j = *M >= i ? (*M - i) / stride : 0;
                    while (reg.pad(i, j) <= *M) ++j;
                    while (j > 0 && reg.pad(i, j - 1) > *M) --j;
                }
                pred.index = reg.pad(i, j);
                pred.cost = prof.deficiency(reg.require_slot(i), s, s);
            }
            out.push_back(pred);
        }
        return out;
    }

private:
    /// Largest stage t in [k, hi] that is expansionary for slot b and has d_b(x↾m)[t] <= k.
    /// d_b(x↾m)[t] is non-decreasing in t once defined, so the qualifying stages form an interval.
    static std::optional<Stage> last_disqualifying(const PrefixProfile& prof, const ExpansionaryState& exp,
                                                   std::size_t b, std::size_t m, Index k, Stage hi) {
        const auto& e = prof.entry(b, m);
        if (!e.from || e.zero) return std::nullopt;
        const auto& steps = prof.k_steps(m);
        if (steps.empty()) return std::nullopt;
        // d = neglog - K(t) <= k  iff  K(t) >= neglog - k
        const std::int64_t need = e.neglog - static_cast<std::int64_t>(k);
        Stage lo = std::max<Stage>(*e.from, steps.front().first);
        if (steps.front().second < need) return std::nullopt;
        Stage top = hi;
        for (const auto& [stage, v] : steps)
            if (v < need) {
                if (stage == 0) return std::nullopt;
                top = std::min<Stage>(top, stage - 1);
                break;
            }
        lo = std::max<Stage>(lo, k);
        return exp.last_in(b, lo, top);
    }

    Reading reading_;
};

/// F*(σ) = g(F(σ), t) with g(i,t) = p(i, least j with p(i,j) > t) and t = d(F(σ), σ)[|σ|];
/// t is taken as 0 when undefined or negative.
class StrongWrapper final : public Learner {
public:
    explicit StrongWrapper(LearnerPtr inner) : inner_(std::move(inner)) {}
    std::string kind() const override { return "wrapped"; }

    static Index g(const MeasureRegistry& reg, Index i, std::uint64_t t) {
        const auto stride = reg.stride();
        std::uint64_t j = t >= i ? (t - i) / stride : 0;
        while (j > 0 && reg.pad(i, j - 1) > t) --j;
        while (reg.pad(i, j) <= t) ++j;
        return reg.pad(i, j);
    }

    std::vector<Prediction> predict_prefixes(const Environment& env, const BitString& x) const override {
        auto inner = inner_->predict_prefixes(env, x);
        PrefixProfile prof(env, x);
        for (std::size_t n = 0; n < inner.size(); ++n) {
            auto& p = inner[n];
            if (!p.index) continue;
            auto d = prof.deficiency(env.registry.require_slot(*p.index), n, n);
            if (d.is_infinite())
                throw InvariantViolation("strong wrapper: prediction " + std::to_string(*p.index) +
                                         " gives measure 0 to " + x.prefix(n).str());
            std::uint64_t t = d.is_finite() && d.value() > 0 ? static_cast<std::uint64_t>(d.value()) : 0;
            p.index = g(env.registry, *p.index, t);
        }
        return inner;
    }

private:
    LearnerPtr inner_;
};

/// Scripted learners used as adversaries and baselines.
class ConstantLearner final : public Learner {
public:
    explicit ConstantLearner(Index i) : i_(i) {}
    std::string kind() const override { return "constant"; }
    std::vector<Prediction> predict_prefixes(const Environment&, const BitString& x) const override {
        return std::vector<Prediction>(x.size() + 1, Prediction{i_, false, Deficiency::undefined()});
    }
    Prediction predict(const Environment&, const BitString&) const override { return {i_, false, Deficiency::undefined()}; }

private:
    Index i_;
};

/// p(base, |σ|): a new index at every length.
class ChurnLearner final : public Learner {
public:
    explicit ChurnLearner(Index base) : base_(base) {}
    std::string kind() const override { return "churn"; }
    std::vector<Prediction> predict_prefixes(const Environment& env, const BitString& x) const override {
        std::vector<Prediction> out;
        for (std::size_t n = 0; n <= x.size(); ++n)
            out.push_back({env.registry.pad(base_, n), false, Deficiency::undefined()});
        return out;
    }
    Prediction predict(const Environment& env, const BitString& x) const override {
        return {env.registry.pad(base_, x.size()), false, Deficiency::undefined()};
    }

private:
    Index base_;
};

/// p(base, #ones(σ)): changes its mind on every 1.
class HedgeLearner final : public Learner {
public:
    explicit HedgeLearner(Index base) : base_(base) {}
    std::string kind() const override { return "hedge"; }
    std::vector<Prediction> predict_prefixes(const Environment& env, const BitString& x) const override {
        std::vector<Prediction> out;
        std::uint64_t ones = 0;
        for (std::size_t n = 0; n <= x.size(); ++n) {
            if (n > 0) ones += x[n - 1];
            out.push_back({env.registry.pad(base_, ones), false, Deficiency::undefined()});
        }
        return out;
    }
    Prediction predict(const Environment& env, const BitString& x) const override {
        return {env.registry.pad(base_, x.ones()), false, Deficiency::undefined()};
    }

private:
    Index base_;
};

}  // namespace mlearn
