#pragma once

#include <cstdint>
#include <unordered_set>
#include <vector>

#include "mlearn/law.hpp"
#include "mlearn/registry.hpp"

namespace mlearn {

/// Lengths l < max_len at which some σ of length l has
/// a(σk)·b(σ) != b(σk)·a(σ). Runs over reachable joint law states, not over strings.
/// States where either value is 0 are pruned: for additive non-negative laws every
/// descendant keeps that 0, and both sides of the identity vanish.
inline std::vector<std::size_t> deviation_levels(const MeasureLaw& a, const MeasureLaw& b, std::size_t max_len,
                                                 std::size_t from = 0) {
    LawTuple tup({&a, &b});
    std::vector<std::size_t> out;
    std::unordered_set<LawState, LawStateHash> level{tup.root()};
    for (std::size_t len = 0; len < max_len && !level.empty(); ++len) {
        std::unordered_set<LawState, LawStateHash> next;
        bool deviates = false;
        for (const auto& st : level) {
            const Dyadic va = tup.value(st, 0), vb = tup.value(st, 1);
            if (va.is_zero() || vb.is_zero()) continue;
            for (int k = 0; k < 2; ++k) {
                auto c = tup.step(st, k);
                if (len >= from && !deviates && tup.value(c, 0) * vb != tup.value(c, 1) * va) deviates = true;
                next.insert(std::move(c));
            }
        }
        if (deviates) out.push_back(len);
        level = std::move(next);
    }
    return out;
}

/// True iff for all σ with |σ| in [lo, hi) and k in {0,1}: μ_i(σk)·μ_j(σ) = μ_j(σk)·μ_i(σ).
inline bool relatively_identical(const MeasureRegistry& reg, Index i, Index j, std::size_t lo, std::size_t hi,
                                 Stage s) {
    const auto* mi = reg.measure(i);
    const auto* mj = reg.measure(j);
    if (!mi || !mj || !mi->defined(hi, s) || !mj->defined(hi, s))
        throw Error("relatively_identical: measures not defined on 2^{<=" + std::to_string(hi) + "} at stage " +
                    std::to_string(s));
    return deviation_levels(*mi->law, *mj->law, hi, lo).empty();
}

struct SparsityResult {
    bool sparse = false;
    std::vector<std::uint64_t> witness;
};

/// λ is p-sparse within max_len iff its deviation lengths from the uniform measure
/// form a p-sparse sequence (consecutive n_i, n_{i+1} with p(n_i) < n_{i+1}); a
/// measure that never deviates has witness (0).
inline SparsityResult is_p_sparse(const MeasureRegistry& reg, Index lambda, const IntFunction& p, std::size_t max_len) {
    const auto* m = reg.measure(lambda);
    if (!m || !m->schedule.time_complexity(max_len))
        throw Error("is_p_sparse: measure " + std::to_string(lambda) + " is not total up to length " +
                    std::to_string(max_len));
    UniformLaw uniform;
    SparsityResult r;
    for (auto d : deviation_levels(*m->law, uniform, max_len)) r.witness.push_back(d);
    if (r.witness.empty()) r.witness.push_back(0);
    r.sparse = true;
    for (std::size_t k = 0; k + 1 < r.witness.size(); ++k)
        if (!(p(r.witness[k]) < r.witness[k + 1])) r.sparse = false;
    return r;
}

}  // namespace mlearn
