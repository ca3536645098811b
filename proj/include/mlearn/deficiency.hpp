#pragma once

#include <algorithm>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "mlearn/machine.hpp"
#include "mlearn/registry.hpp"

namespace mlearn {

/// The registry together with the universal machine: everything d_e depends on.
struct Environment {
    MeasureRegistry registry;
    UniversalMachine machine;
};

/// Integer deficiency ceil(-log2 μ_e(σ)) - K(σ), or undefined, or +infinity when μ_e(σ) = 0.
/// Also used as an extended integer for costs (never undefined there).
class Deficiency {
public:
    enum class Kind { undefined, finite, infinite };

    static Deficiency undefined() { return {}; }
    static Deficiency finite(std::int64_t v) { return {Kind::finite, v}; }
    static Deficiency infinite() { return {Kind::infinite, 0}; }

    Kind kind() const { return kind_; }
    bool defined() const { return kind_ != Kind::undefined; }
    bool is_finite() const { return kind_ == Kind::finite; }
    bool is_infinite() const { return kind_ == Kind::infinite; }
    std::int64_t value() const {
        if (!is_finite()) throw Error("value() of a non-finite deficiency");
        return value_;
    }

    /// Defined and <= k.
    bool at_most(std::int64_t k) const { return is_finite() && value_ <= k; }
    /// Defined and >= k (infinity counts).
    bool at_least(std::int64_t k) const { return is_infinite() || (is_finite() && value_ >= k); }

    /// Max over defined values; undefined only if both are.
    static Deficiency max(const Deficiency& a, const Deficiency& b) {
        if (!a.defined()) return b;
        if (!b.defined()) return a;
        if (a.is_infinite() || b.is_infinite()) return infinite();
        return finite(std::max(a.value_, b.value_));
    }

    /// Strict order on defined values (finite < infinite).
    friend bool operator<(const Deficiency& a, const Deficiency& b) {
        if (!a.defined() || !b.defined()) throw Error("comparison with undefined deficiency");
        if (a.is_infinite()) return false;
        if (b.is_infinite()) return true;
        return a.value_ < b.value_;
    }
    friend bool operator==(const Deficiency& a, const Deficiency& b) {
        return a.kind_ == b.kind_ && (a.kind_ != Kind::finite || a.value_ == b.value_);
    }

    Deficiency plus(std::int64_t k) const { return is_finite() ? finite(value_ + k) : *this; }

    std::string to_string() const {
        switch (kind_) {
            case Kind::undefined: return "undefined";
            case Kind::infinite: return "inf";
            default: return std::to_string(value_);
        }
    }
    nlohmann::json to_json() const {
        if (is_finite()) return value_;
        return to_string();
    }

private:
    Deficiency() = default;
    Deficiency(Kind k, std::int64_t v) : kind_(k), value_(v) {}
    Kind kind_ = Kind::undefined;
    std::int64_t value_ = 0;
};

inline Deficiency deficiency(const Environment& env, Index e, const BitString& sigma, Stage s) {
    auto mu = env.registry.eval(e, sigma, s);
    if (!mu) return Deficiency::undefined();
    if (mu->sign() <= 0) return Deficiency::infinite();
    auto k = env.machine.K(env.registry, sigma, s);
    if (!k) return Deficiency::undefined();
    return Deficiency::finite(mu->ceil_neg_log2() - static_cast<std::int64_t>(*k));
}

/// Per-prefix view of one string: for every registry slot and prefix length m,
/// the value ceil(-log μ_b(x↾m)) and the stage it appears; for every m, the step
/// function s ↦ K(x↾m)[s]. Evaluating d_b(x↾m)[s] afterwards is table lookup, so
/// a whole trace costs one pass over the string.
class PrefixProfile {
public:
    struct Entry {
        std::optional<Stage> from;  // first stage with μ_b(x↾m) defined
        bool zero = false;
        std::int64_t neglog = 0;
    };
    using Steps = std::vector<std::pair<Stage, std::int64_t>>;  // stages up, values strictly down

    PrefixProfile(const Environment& env, BitString x) : x_(std::move(x)) {
        const auto& reg = env.registry;
        const std::size_t slots = reg.slot_count(), n = x_.size();
        entries_.assign(slots, std::vector<Entry>(n + 1));
        for (std::size_t b = 0; b < slots; ++b) {
            const auto* m = reg.measure(b);
            if (!m) continue;
            LawState st = m->law->root();
            for (std::size_t len = 0; len <= n; ++len) {
                if (len > 0) st = m->law->step(st, x_[len - 1]);
                auto tc = m->schedule.time_complexity(len);
                if (!tc) break;  // never defined from here on
                auto& e = entries_[b][len];
                e.from = *tc;
                auto v = m->law->value(st);
                e.zero = v.sign() <= 0;
                if (!e.zero) e.neglog = v.ceil_neg_log2();
            }
        }
        k_steps_.resize(n + 1);
        std::string prefix;
        for (std::size_t len = 0; len <= n; ++len) {
            if (len > 0) prefix.push_back(x_.str()[len - 1]);
            Steps cand;
            for (std::size_t k = 0; k < env.machine.size(); ++k) {
                const auto& m = env.machine.slot(k);
                const auto c = static_cast<std::int64_t>(m.constant);
                if (m.is_coder()) {
                    auto b = reg.slot_of(m.coder().measure);
                    if (!b) continue;
                    const auto& e = entries_[*b][len];
                    if (!e.from || e.zero) continue;
                    cand.emplace_back(*e.from, static_cast<std::int64_t>(m.coder().codelength(e.neglog, len)) + c);
                } else if (const auto* st = m.log().steps(prefix)) {
                    for (const auto& [stage, code] : *st) cand.emplace_back(stage, static_cast<std::int64_t>(code) + c);
                }
            }
            std::sort(cand.begin(), cand.end());
            Steps& out = k_steps_[len];
            for (const auto& p : cand)
                if (out.empty() || p.second < out.back().second) out.push_back(p);
        }
    }

    const BitString& stream() const { return x_; }
    std::size_t length() const { return x_.size(); }
    std::size_t slots() const { return entries_.size(); }

    const Entry& entry(std::size_t slot, std::size_t m) const { return entries_[slot][m]; }
    const Steps& k_steps(std::size_t m) const { return k_steps_[m]; }

    std::optional<std::int64_t> K(std::size_t m, Stage s) const {
        std::optional<std::int64_t> k;
        for (const auto& [stage, v] : k_steps_[m]) {
            if (stage > s) break;
            k = v;
        }
        return k;
    }

    Deficiency deficiency(std::size_t slot, std::size_t m, Stage s) const {
        const auto& e = entries_[slot][m];
        if (!e.from || *e.from > s) return Deficiency::undefined();
        if (e.zero) return Deficiency::infinite();
        auto k = K(m, s);
        if (!k) return Deficiency::undefined();
        return Deficiency::finite(e.neglog - *k);
    }

    /// Max of the defined d_b(x↾m)[s] over m <= upto; undefined if none is defined.
    Deficiency max_prefix_deficiency(std::size_t slot, std::size_t upto, Stage s) const {
        Deficiency best = Deficiency::undefined();
        for (std::size_t m = 0; m <= upto; ++m) {
            best = Deficiency::max(best, deficiency(slot, m, s));
            if (best.is_infinite()) break;
        }
        return best;
    }

private:
    BitString x_;
    std::vector<std::vector<Entry>> entries_;
    std::vector<Steps> k_steps_;
};

/// sup over prefixes of d_e, floored at 0 (and 0 when nothing is defined).
inline Deficiency stream_deficiency(const Environment& env, Index e, const BitString& x, Stage s) {
    const auto slot = env.registry.require_slot(e);
    PrefixProfile prof(env, x);
    auto d = prof.max_prefix_deficiency(slot, x.size(), s);
    if (!d.defined()) return Deficiency::finite(0);
    if (d.is_infinite()) return d;
    return Deficiency::finite(std::max<std::int64_t>(0, d.value()));
}

/// cost(σ,e)[s] = e + max of the defined prefix deficiencies (empty max = 0).
inline Deficiency cost_from_profile(const PrefixProfile& prof, std::size_t slot, Index e, std::size_t upto, Stage s) {
    auto d = prof.max_prefix_deficiency(slot, upto, s);
    if (!d.defined()) return Deficiency::finite(static_cast<std::int64_t>(e));
    return d.plus(static_cast<std::int64_t>(e));
}

inline Deficiency cost(const Environment& env, const BitString& sigma, Index e, Stage s) {
    const auto slot = env.registry.require_slot(e);
    PrefixProfile prof(env, sigma);
    return cost_from_profile(prof, slot, e, sigma.size(), s);
}

}  // namespace mlearn
