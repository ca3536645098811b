#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "mlearn/deficiency.hpp"

namespace mlearn {

/// Partial sequence j ↦ D_j of explicit finite sets, each appearing at a stage.
/// Position j is 0-based; the invariant checked is μ_e(D_j) <= 2^-j.
struct ClopenTest {
    Index measure = 0;
    struct Member {
        Stage stage;
        std::vector<BitString> strings;
    };
    std::vector<Member> members;

    std::size_t defined_length(Stage s) const {
        std::size_t n = 0;
        while (n < members.size() && members[n].stage <= s) ++n;
        return n;
    }
};

struct ClopenReport {
    std::vector<std::string> violations;
    bool ok() const { return violations.empty(); }
};

inline ClopenReport validate_clopen_test(const MeasureRegistry& reg, const ClopenTest& test, Stage s) {
    ClopenReport rep;
    for (std::size_t j = 0; j < test.members.size(); ++j) {
        const auto& m = test.members[j];
        if (j > 0 && m.stage < test.members[j - 1].stage)
            rep.violations.push_back("D_" + std::to_string(j) + " defined before D_" + std::to_string(j - 1));
        if (m.stage > s) continue;
        if (!is_prefix_free(m.strings)) {
            rep.violations.push_back("D_" + std::to_string(j) + " is not prefix-free");
            continue;
        }
        auto mu = reg.measure_of_set(test.measure, m.strings, s);
        if (!mu) {
            rep.violations.push_back("mu(D_" + std::to_string(j) + ") undefined at stage " + std::to_string(s));
        } else if (*mu > Dyadic::pow2(static_cast<std::int64_t>(j))) {
            rep.violations.push_back("mu(D_" + std::to_string(j) + ") = " + mu->to_string() + " > 2^-" + std::to_string(j));
        }
    }
    return rep;
}

/// One clopen test per measure index (the tests G^i of a construction).
using UniformTestFamily = std::map<Index, ClopenTest>;

/// Namespace of uniform test families, with the same reserve/fill-once discipline
/// as the measure registry.
class ClopenTestRegistry {
public:
    std::uint64_t reserve(std::string name) {
        entries_.push_back({std::move(name), std::nullopt});
        return entries_.size() - 1;
    }
    void fill(std::uint64_t t, UniformTestFamily family) {
        if (t >= entries_.size()) throw UnknownIndex("unknown test family " + std::to_string(t));
        if (entries_[t].family) throw Error("test family " + std::to_string(t) + " filled twice");
        entries_[t].family = std::move(family);
    }
    const UniformTestFamily* get(std::uint64_t t) const {
        if (t >= entries_.size()) throw UnknownIndex("unknown test family " + std::to_string(t));
        return entries_[t].family ? &*entries_[t].family : nullptr;
    }
    std::size_t size() const { return entries_.size(); }

private:
    struct Entry {
        std::string name;
        std::optional<UniformTestFamily> family;
    };
    std::vector<Entry> entries_;
};

/// q(t,e,k) = t + e + k + x + 5, with x the compressor's coding constant.
inline std::uint64_t q_index(std::uint64_t t, std::uint64_t e, std::uint64_t k, std::uint64_t x) {
    return t + e + k + x + 5;
}

struct CompressorFiring {
    std::uint64_t t = 0, e = 0, k = 0, q = 0;
    Stage stage = 0;
    std::vector<BitString> target;
    Dyadic added_weight;
    std::size_t rejected = 0;
};

/// Where and when the compressor for (t,e,k) fires: the q-th member of G^e
/// (ordinal q, position q-1) at the first stage μ_e is defined on it. nullopt when
/// the member never appears or never becomes defined by horizon.
inline std::optional<CompressorFiring> plan_compression(const Environment& env, const std::string& machine,
                                                        std::uint64_t t, Index e, std::uint64_t k,
                                                        const ClopenTest& test, Stage horizon) {
    auto slot = env.machine.find(machine);
    if (!slot || env.machine.slot(*slot).is_coder()) throw Error("no request machine named '" + machine + "'");
    const std::uint64_t x = env.machine.slot(*slot).constant;
    CompressorFiring f{t, e, k, q_index(t, e, k, x), 0, {}, {}, 0};
    if (test.members.size() < f.q) return std::nullopt;
    const auto& member = test.members[f.q - 1];
    std::size_t len = 0;
    for (const auto& s : member.strings) len = std::max(len, s.size());
    auto tc = env.registry.time_complexity(e, len);
    if (!tc) return std::nullopt;
    f.stage = std::max(member.stage, *tc);
    if (f.stage > horizon) return std::nullopt;
    f.target = member.strings;
    return f;
}

/// Issue the planned requests: each σ gets ceil(-log μ_e(σ)) - k - x bits, clamped at 0.
inline void issue_compression(Environment& env, const std::string& machine, CompressorFiring& f) {
    auto slot = env.machine.find(machine);
    const std::uint64_t x = env.machine.slot(*slot).constant;
    auto& m = env.machine.slot(*slot).log();
    const Dyadic before = m.weight();
    for (const auto& s : f.target) {
        auto mu = env.registry.eval(f.e, s, f.stage);
        if (!mu) throw InvariantViolation("compressor: mu_e undefined on a member string at its firing stage");
        if (mu->sign() <= 0) continue;  // deficiency is already infinite
        const std::int64_t code = std::max<std::int64_t>(0, mu->ceil_neg_log2() - static_cast<std::int64_t>(f.k + x));
        if (!m.request(s, static_cast<std::uint64_t>(code), f.stage)) ++f.rejected;
    }
    f.added_weight = m.weight() - before;
}

inline std::optional<CompressorFiring> compressor_run(Environment& env, const std::string& machine,
                                                      std::uint64_t t, Index e, std::uint64_t k,
                                                      const ClopenTest& test, Stage horizon) {
    auto f = plan_compression(env, machine, t, e, k, test, horizon);
    if (f) issue_compression(env, machine, *f);
    return f;
}

}  // namespace mlearn
