#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "mlearn/sparse.hpp"
#include "mlearn/trace.hpp"

namespace mlearn {

struct DominationParams {
    IntFunction h = IntFunction::polynomial({0, 0, 1});
    std::vector<Stage> active;          // h-active stages from the construction for h
    std::uint64_t T = 8;                // f, D_t computed for t <= T
    std::uint64_t search_cap = 64;      // candidates n in (2|σ|, 2|σ| + search_cap]
    std::uint64_t node_budget = 1 << 22;  // survivor nodes expanded per search
};

struct Certificate {
    BitString sigma;
    std::optional<Index> e;
    std::uint64_t n = 0;
    enum class Reason { converged, churned } reason = Reason::converged;
};

inline std::string to_string(Certificate::Reason r) { return r == Certificate::Reason::converged ? "converged" : "churned"; }

struct DtResult {
    std::uint64_t t = 0;
    std::uint64_t f = 0, h = 0;
    std::vector<BitString> strings;
    std::map<char, std::uint64_t> clauses{{'a', 0}, {'b', 0}, {'c', 0}};
    Dyadic lambda;
    Dyadic bound;  // 2^{-t-5}
};

/// f, F, n_σ and D_t for one learner over one environment, with per-string caches.
class DominationRun {
public:
    DominationRun(const Environment& env, const Learner& learner, DominationParams prm, Index lambda)
        : env_(env), learner_(learner), prm_(std::move(prm)), lambda_(lambda) {
        cache_len_ = 2 * prm_.T + 1;
        std::sort(prm_.active.begin(), prm_.active.end());
    }

    const DominationParams& params() const { return prm_; }

    /// Fill the prediction cache for every string of length <= len with one batch call per leaf.
    void prefill(std::size_t len) {
        len = std::min(len, cache_len_);
        for (const auto& leaf : strings_of_length(len)) {
            auto preds = learner_.predict_prefixes(env_, leaf);
            for (std::size_t n = 0; n <= len; ++n) preds_.emplace(leaf.prefix(n).str(), preds[n].index);
        }
    }

    std::optional<Index> predict(const BitString& s) {
        if (s.size() <= cache_len_) {
            auto it = preds_.find(s.str());
            if (it != preds_.end()) return it->second;
        }
        auto p = learner_.predict(env_, s).index;
        if (s.size() <= cache_len_) preds_.emplace(s.str(), p);
        return p;
    }

    /// μ_e↾len defined by stage n.
    bool converged(const std::optional<Index>& e, std::uint64_t len, std::uint64_t n) const {
        if (!e || !env_.registry.slot_of(*e)) return false;
        auto tc = env_.registry.time_complexity(*e, len);
        return tc && *tc <= n;
    }

    /// Extensions τ of σ of length n with L constant on [σ, τ]; nullopt past the node budget.
    std::optional<std::vector<BitString>> survivors(const BitString& sigma, std::uint64_t n) {
        const auto e = predict(sigma);
        std::vector<BitString> layer{sigma};
        std::uint64_t nodes = 1;
        for (std::uint64_t m = sigma.size(); m < n && !layer.empty(); ++m) {
            std::vector<BitString> next;
            for (const auto& s : layer)
                for (int b = 0; b < 2; ++b) {
                    auto c = s.child(b);
                    if (predict(c) == e) next.push_back(std::move(c));
                }
            nodes += next.size();
            if (nodes > prm_.node_budget) return std::nullopt;
            layer = std::move(next);
        }
        return layer;
    }

    /// Least n > 2|σ| with μ_e↾|σ|[n] defined or survivor proportion < 2^{-|σ|-5}.
    const Certificate& certificate(const BitString& sigma) {
        auto it = certs_.find(sigma.str());
        if (it != certs_.end()) return it->second;
        Certificate c{sigma, predict(sigma), 0, Certificate::Reason::converged};
        const std::uint64_t t = sigma.size();
        std::vector<BitString> layer{sigma};
        std::uint64_t depth = t, nodes = 1;
        bool found = false;
        for (std::uint64_t n = 2 * t + 1; n <= 2 * t + prm_.search_cap; ++n) {
            if (converged(c.e, t, n)) {
                c.n = n;
                c.reason = Certificate::Reason::converged;
                found = true;
                break;
            }
            while (depth < n && !layer.empty()) {
                std::vector<BitString> next;
                for (const auto& s : layer)
                    for (int b = 0; b < 2; ++b) {
                        auto ch = s.child(b);
                        if (predict(ch) == c.e) next.push_back(std::move(ch));
                    }
                nodes += next.size();
                if (nodes > prm_.node_budget)
                    throw NonConformingLearner("search for n_sigma exceeded the node budget at sigma = \"" + sigma.str() +
                                               "\", n = " + std::to_string(n));
                layer = std::move(next);
                ++depth;
            }
            if (layer.empty()) depth = n;
            // survivors * 2^{t+5} < 2^{n-t}
            if ((BigInt(layer.size()) << (t + 5)) < (BigInt(1) << (n - t))) {
                c.n = n;
                c.reason = Certificate::Reason::churned;
                found = true;
                break;
            }
        }
        if (!found)
            throw NonConformingLearner("no n_sigma within the search cap for sigma = \"" + sigma.str() + "\" (prediction " +
                                       (c.e ? std::to_string(*c.e) : std::string("none")) + ")");
        return certs_.emplace(sigma.str(), std::move(c)).first->second;
    }

    /// F(σ) = max{n_σ, n_τ : n in (|σ|, n_σ], τ in ext(σ, n)}.
    std::uint64_t F(const BitString& sigma) {
        auto it = F_.find(sigma.str());
        if (it != F_.end()) return it->second;
        const auto ns = certificate(sigma).n;
        std::uint64_t best = ns;
        std::vector<BitString> layer{sigma};
        for (std::uint64_t n = sigma.size() + 1; n <= ns; ++n) {
            std::vector<BitString> next;
            for (const auto& s : layer)
                for (int b = 0; b < 2; ++b) {
                    auto c = s.child(b);
                    best = std::max(best, certificate(c).n);
                    next.push_back(std::move(c));
                }
            layer = std::move(next);
        }
        F_.emplace(sigma.str(), best);
        return best;
    }

    std::uint64_t f(std::uint64_t t) {
        auto it = f_.find(t);
        if (it != f_.end()) return it->second;
        std::uint64_t best = 0;
        for (const auto& s : strings_of_length(t)) best = std::max(best, F(s));
        f_.emplace(t, best);
        return best;
    }

    std::optional<Stage> least_active_in(std::uint64_t lo_exclusive, std::uint64_t hi) const {
        auto itr = std::upper_bound(prm_.active.begin(), prm_.active.end(), lo_exclusive);
        if (itr == prm_.active.end() || *itr > hi) return std::nullopt;
        return *itr;
    }

    /// D_t by the first applicable clause for each σ of length t.
    DtResult D(std::uint64_t t) {
        DtResult r;
        r.t = t;
        r.f = f(t);
        r.h = prm_.h(t);
        r.bound = Dyadic::pow2(static_cast<std::int64_t>(t + 5));
        for (const auto& sigma : strings_of_length(t)) {
            const auto& cert = certificate(sigma);
            if (r.f > r.h || converged(cert.e, t, cert.n)) {
                ++r.clauses['a'];
                continue;
            }
            auto nstar = least_active_in(t, cert.n);
            if (!nstar) {
                ++r.clauses['b'];
                append(r.strings, sigma, cert.n);
                continue;
            }
            ++r.clauses['c'];
            std::vector<BitString> taus{sigma};
            for (std::uint64_t m = t; m < *nstar; ++m) {
                std::vector<BitString> next;
                for (const auto& s : taus) {
                    next.push_back(s.child(0));
                    next.push_back(s.child(1));
                }
                taus = std::move(next);
            }
            for (const auto& tau : taus) {
                const auto& ct = certificate(tau);
                if (!converged(ct.e, *nstar, ct.n)) append(r.strings, tau, ct.n);
            }
        }
        for (const auto& s : r.strings) r.lambda += *env_.registry.eval(lambda_, s, kSaturated - 1);
        return r;
    }

    Index lambda_index() const { return lambda_; }

private:
    void append(std::vector<BitString>& out, const BitString& from, std::uint64_t n) {
        auto sv = survivors(from, n);
        if (!sv) throw NonConformingLearner("survivor enumeration exceeded the node budget below \"" + from.str() + "\"");
        for (auto& s : *sv) out.push_back(std::move(s));
    }

    const Environment& env_;
    const Learner& learner_;
    DominationParams prm_;
    Index lambda_;
    std::size_t cache_len_;
    std::unordered_map<std::string, std::optional<Index>> preds_;
    std::unordered_map<std::string, Certificate> certs_;
    std::unordered_map<std::string, std::uint64_t> F_;
    std::map<std::uint64_t, std::uint64_t> f_;
};

/// Drop every string that has a proper prefix in the set (and duplicates).
inline std::vector<BitString> prefix_free_reduction(std::vector<BitString> set) {
    std::sort(set.begin(), set.end(), [](const BitString& a, const BitString& b) { return a.str() < b.str(); });
    std::vector<BitString> out;
    for (auto& s : set)
        if (out.empty() || !out.back().is_prefix_of(s)) out.push_back(std::move(s));
    return out;
}

struct StreamVerdict {
    std::uint64_t seed = 0;
    bool in_c_star = false;
    Classification classification;
};

struct DominationReport {
    std::vector<DtResult> rows;
    Dyadic lambda_union;     // λ(∪_{t<=T} ⟦D_t⟧)
    Dyadic bound_sum;        // Σ_{t<=T} 2^{-t-5}
    Dyadic residual;         // 1 - λ(∪ D_t): the C* mass left in the covers
    bool bounds_hold = true;  // λ(D_t) < 2^{-t-5} for every t
    bool f_above_2t = true;
    bool dominates_tail = false;  // f(t) > h(t) for all t in [ceil(T/2), T]
    std::vector<StreamVerdict> streams;
    bool discrepancy = false;
    std::string discrepancy_reason;

    nlohmann::json to_json() const {
        nlohmann::json rows_j = nlohmann::json::array();
        for (const auto& r : rows)
            rows_j.push_back({{"t", r.t},
                              {"f", r.f},
                              {"h", r.h},
                              {"f_gt_h", r.f > r.h},
                              {"lambda_D_t", r.lambda.to_json()},
                              {"lambda_D_t_str", r.lambda.to_string()},
                              {"bound", r.bound.to_json()},
                              {"below_bound", r.lambda < r.bound},
                              {"D_t_size", r.strings.size()},
                              {"clauses", {{"a", r.clauses.at('a')}, {"b", r.clauses.at('b')}, {"c", r.clauses.at('c')}}}});
        nlohmann::json streams_j = nlohmann::json::array();
        for (const auto& s : streams) {
            nlohmann::json j = {{"seed", s.seed}, {"in_c_star", s.in_c_star}};
            if (s.in_c_star) j["classification"] = mlearn::to_json(s.classification);
            streams_j.push_back(j);
        }
        return {{"rows", rows_j},
                {"lambda_union", lambda_union.to_json()},
                {"lambda_union_str", lambda_union.to_string()},
                {"bound_sum", bound_sum.to_json()},
                {"residual", residual.to_json()},
                {"residual_str", residual.to_string()},
                {"bounds_hold", bounds_hold},
                {"f_above_2t", f_above_2t},
                {"dominates_tail", dominates_tail},
                {"streams", streams_j},
                {"discrepancy", discrepancy},
                {"discrepancy_reason", discrepancy_reason}};
    }

    std::string csv() const {
        std::string out = "t,f,h\n";
        for (const auto& r : rows) out += std::to_string(r.t) + "," + std::to_string(r.f) + "," + std::to_string(r.h) + "\n";
        return out;
    }
};

struct DichotomyParams {
    std::size_t streams = 20;
    std::size_t stream_length = 200;
    std::uint64_t seed = 0;
    ClassifyParams classify;
};

/// Rows for t <= T, the union bound, and per-stream verdicts on sampled C* streams.
inline DominationReport verify_domination_dichotomy(DominationRun& run, const Environment& env, const Learner& learner,
                                                    const DichotomyParams& dp) {
    DominationReport rep;
    const auto T = run.params().T;
    std::vector<BitString> all;
    for (std::uint64_t t = 0; t <= T; ++t) {
        auto row = run.D(t);
        if (!(row.lambda < row.bound)) rep.bounds_hold = false;
        if (!(row.f > 2 * t)) rep.f_above_2t = false;
        rep.bound_sum += row.bound;
        all.insert(all.end(), row.strings.begin(), row.strings.end());
        rep.rows.push_back(std::move(row));
    }
    auto reduced = prefix_free_reduction(std::move(all));
    for (const auto& s : reduced) rep.lambda_union += *env.registry.eval(run.lambda_index(), s, kSaturated - 1);
    rep.residual = Dyadic(1) - rep.lambda_union;
    rep.dominates_tail = true;
    for (std::uint64_t t = (T + 1) / 2; t <= T; ++t)
        if (!(rep.rows[t].f > rep.rows[t].h)) rep.dominates_tail = false;

    const auto* lam = env.registry.measure(run.lambda_index());
    const auto* law = lam ? dynamic_cast<const SparseLaw*>(lam->law.get()) : nullptr;
    std::size_t in_star = 0, witnessed = 0;
    for (std::size_t k = 0; k < dp.streams; ++k) {
        StreamVerdict v;
        v.seed = dp.seed + k;
        auto x = env.registry.sample_stream(run.lambda_index(), dp.stream_length, v.seed);
        bool hit = false;
        for (const auto& s : reduced)
            if (s.is_prefix_of(x)) hit = true;
        v.in_c_star = !hit && (!law || in_covers(*law, x));
        if (v.in_c_star) {
            ++in_star;
            v.classification = classify(env, run_trace(env, learner, x), dp.classify);
            if (v.classification.outcome == Outcome::failure) ++witnessed;
        }
        rep.streams.push_back(std::move(v));
    }
    if (!rep.bounds_hold) {
        rep.discrepancy = true;
        rep.discrepancy_reason = "some lambda(D_t) reaches its bound";
    } else if (!(rep.residual > Dyadic::pow2(1))) {
        rep.discrepancy = true;
        rep.discrepancy_reason = "residual C* mass is not above 1/2";
    } else if (!rep.dominates_tail && witnessed < in_star) {
        rep.discrepancy = true;
        rep.discrepancy_reason = "f does not dominate h on the tail window, yet " + std::to_string(in_star - witnessed) +
                                 " of " + std::to_string(in_star) + " C* streams have no failure witness";
    }
    return rep;
}

}  // namespace mlearn
