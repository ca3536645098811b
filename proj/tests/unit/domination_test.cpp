#include <gtest/gtest.h>

#include "fixtures.hpp"
#include "mlearn/domination.hpp"

using namespace mlearn;
using fixtures::dy;
using fixtures::fast;

namespace {

// 0 u, 1 b34, 2 b14, 3 never defined, 4 reserved for λ.
struct World {
    Environment env;
    Index lam = 0;
    SparseResult sparse;
};

std::unique_ptr<World> world(IntFunction h, std::vector<Index> family, std::uint64_t max_stage) {
    auto w = std::make_unique<World>();
    auto& r = w->env.registry;
    r.add(fast("u", std::make_shared<UniformLaw>()));
    r.add(fast("b34", std::make_shared<BernoulliLaw>(dy(3, 2))));
    r.add(fast("b14", std::make_shared<BernoulliLaw>(dy(1, 2))));
    r.add({"never", std::make_shared<UniformLaw>(), Schedule::never()});
    w->lam = r.reserve("lambda");
    r.freeze();
    for (Index i : {0, 1, 2}) w->env.machine.add_coder("code-" + std::to_string(i), 2, i);
    auto hp = std::make_shared<const IntFunction>(h);
    IntFunction g = IntFunction::custom({{"kind", "m+2"}}, [](std::uint64_t m) { return m + 2; });
    IntFunction p = IntFunction::custom({{"kind", "h+1"}}, [hp](std::uint64_t n) { return sat_add((*hp)(n), 1); });
    SparseParams prm{h, g, p, std::move(family), max_stage};
    w->sparse = build_sparse(r, prm);
    r.fill(w->lam, {"lambda", w->sparse.lambda, Schedule::immediate()});
    return w;
}

IntFunction square() { return IntFunction::polynomial({0, 0, 1}); }
IntFunction four_pow() { return IntFunction::exponential(1, 4, 0); }

// Straight from the definition: every τ in ext(σ, n) checked by its own prefix predictions.
std::uint64_t naive_n_sigma(const Environment& env, const Learner& L, const BitString& sigma, std::uint64_t cap) {
    const std::uint64_t t = sigma.size();
    const auto e = L.predict(env, sigma).index;
    for (std::uint64_t n = 2 * t + 1; n <= 2 * t + cap; ++n) {
        if (e) {
            auto tc = env.registry.time_complexity(*e, t);
            if (tc && *tc <= n) return n;
        }
        std::uint64_t count = 0;
        for (const auto& tail : strings_of_length(n - t)) {
            auto tau = sigma + tail;
            auto preds = L.predict_prefixes(env, tau);
            bool same = true;
            for (std::size_t m = t; m <= n; ++m) same = same && preds[m].index == e;
            if (same) ++count;
        }
        // count / 2^{n-t} < 2^{-t-5}
        if ((BigInt(count) << (t + 5)) < (BigInt(1) << (n - t))) return n;
    }
    return 0;
}

std::uint64_t naive_f(const Environment& env, const Learner& L, std::uint64_t t, std::uint64_t cap) {
    std::uint64_t best = 0;
    for (const auto& sigma : strings_of_length(t)) {
        const auto ns = naive_n_sigma(env, L, sigma, cap);
        best = std::max(best, ns);
        for (std::uint64_t n = t + 1; n <= ns; ++n)
            for (const auto& tail : strings_of_length(n - t)) best = std::max(best, naive_n_sigma(env, L, sigma + tail, cap));
    }
    return best;
}

std::vector<BitString> naive_survivors(const Environment& env, const Learner& L, const BitString& from, std::uint64_t n) {
    std::vector<BitString> out;
    const auto e = L.predict(env, from).index;
    for (const auto& tail : strings_of_length(n - from.size())) {
        auto tau = from + tail;
        auto preds = L.predict_prefixes(env, tau);
        bool same = true;
        for (std::size_t m = from.size(); m <= n; ++m) same = same && preds[m].index == e;
        if (same) out.push_back(tau);
    }
    return out;
}

std::vector<std::string> sorted(const std::vector<BitString>& v) {
    std::vector<std::string> s;
    for (const auto& b : v) s.push_back(b.str());
    std::sort(s.begin(), s.end());
    return s;
}

DominationParams dparams(const World& w, IntFunction h, std::uint64_t T) {
    DominationParams d;
    d.h = std::move(h);
    d.active = w.sparse.active;
    d.T = T;
    return d;
}

}  // namespace

TEST(NSigma, ChurnLearnerChurnsImmediately) {
    auto w = world(square(), {0, 1, 2, 3}, 64);
    ChurnLearner L(3);
    DominationRun run(w->env, L, dparams(*w, square(), 4), w->lam);
    for (std::uint64_t t = 0; t <= 3; ++t)
        for (const auto& s : strings_of_length(t)) {
            const auto& c = run.certificate(s);
            EXPECT_EQ(c.n, 2 * t + 1);
            EXPECT_EQ(c.reason, Certificate::Reason::churned);
            EXPECT_EQ(c.n, naive_n_sigma(w->env, L, s, 64));
        }
}

TEST(NSigma, HedgeLearnerNeedsFiveExtraBits) {
    auto w = world(four_pow(), {0}, 30);
    HedgeLearner L(3);
    DominationRun run(w->env, L, dparams(*w, four_pow(), 3), w->lam);
    for (std::uint64_t t = 0; t <= 3; ++t)
        for (const auto& s : strings_of_length(t)) {
            EXPECT_EQ(run.certificate(s).n, 2 * t + 6);
            EXPECT_EQ(run.certificate(s).n, naive_n_sigma(w->env, L, s, 64));
        }
}

TEST(NSigma, OracleLearnerConvergesAtTheFirstCandidate) {
    auto w = world(square(), {0, 1, 2, 3}, 64);
    OracleExLearner L(HighOracle::correct());
    DominationRun run(w->env, L, dparams(*w, square(), 3), w->lam);
    run.prefill(7);
    for (std::uint64_t t = 0; t <= 3; ++t)
        for (const auto& s : strings_of_length(t)) {
            const auto& c = run.certificate(s);
            EXPECT_EQ(c.n, 2 * t + 1);
            EXPECT_EQ(c.reason, Certificate::Reason::converged);
        }
}

TEST(NSigma, ConstantPartialPredictionIsNonConforming) {
    auto w = world(square(), {0, 1, 2, 3}, 64);
    ConstantLearner L(3);
    DominationParams d = dparams(*w, square(), 2);
    d.search_cap = 12;
    DominationRun run(w->env, L, d, w->lam);
    EXPECT_THROW(run.certificate(BitString("0")), NonConformingLearner);
}

TEST(BigF, MatchesExhaustiveDefinition) {
    auto w = world(four_pow(), {0}, 30);
    HedgeLearner hedge(3);
    ChurnLearner churn(3);
    DominationRun rh(w->env, hedge, dparams(*w, four_pow(), 2), w->lam);
    DominationRun rc(w->env, churn, dparams(*w, four_pow(), 2), w->lam);
    for (std::uint64_t t = 0; t <= 1; ++t) {
        EXPECT_EQ(rh.f(t), naive_f(w->env, hedge, t, 64));
        EXPECT_EQ(rh.f(t), 4 * t + 18);
    }
    for (std::uint64_t t = 0; t <= 2; ++t) {
        EXPECT_EQ(rc.f(t), naive_f(w->env, churn, t, 64));
        EXPECT_EQ(rc.f(t), 4 * t + 3);
    }
}

TEST(DSet, HedgeUsesClauseCAtTheActiveStage) {
    auto w = world(four_pow(), {0}, 30);
    ASSERT_EQ(w->sparse.active, (std::vector<Stage>{1, 6}));
    HedgeLearner L(3);
    DominationRun run(w->env, L, dparams(*w, four_pow(), 3), w->lam);
    auto d = run.D(3);
    EXPECT_EQ(d.f, 30u);
    EXPECT_EQ(d.h, 64u);
    EXPECT_EQ(d.clauses.at('c'), 8u);
    // clause (c) by hand: n* = 6, every τ in ext(σ, 6) hedges, survivors are τ0^12
    std::vector<BitString> expect;
    for (const auto& tau : strings_of_length(6)) {
        auto sv = naive_survivors(w->env, L, tau, 18);
        expect.insert(expect.end(), sv.begin(), sv.end());
    }
    EXPECT_EQ(sorted(d.strings), sorted(expect));
    EXPECT_EQ(d.strings.size(), 64u);
    // 16 of them lie in C (bits 1 and 6 set), each of mass 2^-16
    EXPECT_EQ(d.lambda, dy(1, 12));
    EXPECT_LT(d.lambda, d.bound);
    // f(t) > h(t) here, so clause (a) covers everything
    auto d2 = run.D(2);
    EXPECT_EQ(d2.clauses.at('a'), 4u);
    EXPECT_TRUE(d2.strings.empty());
}

TEST(DSet, ClauseBPastTheLastActiveStage) {
    auto w = world(four_pow(), {0}, 30);
    HedgeLearner L(3);
    DominationRun run(w->env, L, dparams(*w, four_pow(), 6), w->lam);
    auto d = run.D(6);
    EXPECT_EQ(d.clauses.at('b'), 64u);
    EXPECT_EQ(d.strings.size(), 64u);
    for (const auto& s : d.strings) EXPECT_EQ(s.size(), 18u);
    EXPECT_EQ(d.lambda, dy(1, 12));
    EXPECT_LT(d.lambda, d.bound);
}

TEST(DSet, ConvergingLearnerHasEmptyD) {
    auto w = world(square(), {0, 1, 2, 3}, 64);
    OracleExLearner L(HighOracle::correct());
    DominationRun run(w->env, L, dparams(*w, square(), 5), w->lam);
    run.prefill(11);
    for (std::uint64_t t = 0; t <= 5; ++t) {
        auto d = run.D(t);
        EXPECT_EQ(d.f, 4 * t + 3);
        EXPECT_TRUE(d.strings.empty());
        EXPECT_EQ(d.clauses.at('a'), std::uint64_t(1) << t);
    }
}

TEST(PrefixFree, ReductionKeepsMinimalStrings) {
    auto r = prefix_free_reduction({BitString("010"), BitString("01"), BitString("0110"), BitString("1"), BitString("1")});
    EXPECT_EQ(sorted(r), (std::vector<std::string>{"01", "1"}));
    EXPECT_TRUE(is_prefix_free(r));
}

TEST(Dichotomy, ChurnFailsOnEverySampledStream) {
    auto w = world(square(), {0, 1, 2, 3}, 64);
    EXPECT_EQ(w->sparse.active, (std::vector<Stage>{1, 3, 11}));
    ChurnLearner L(3);
    DominationRun run(w->env, L, dparams(*w, square(), 8), w->lam);
    DichotomyParams dp;
    dp.streams = 10;
    dp.stream_length = 64;
    auto rep = verify_domination_dichotomy(run, w->env, L, dp);
    EXPECT_TRUE(rep.bounds_hold);
    EXPECT_TRUE(rep.f_above_2t);
    EXPECT_FALSE(rep.dominates_tail);
    EXPECT_GT(rep.residual, dy(1, 1));
    EXPECT_FALSE(rep.discrepancy) << rep.discrepancy_reason;
    for (const auto& s : rep.streams) {
        ASSERT_TRUE(s.in_c_star);
        EXPECT_EQ(s.classification.outcome, Outcome::failure);
    }
}

TEST(Dichotomy, HedgeUnionStaysBelowTheBoundSum) {
    auto w = world(four_pow(), {0}, 30);
    HedgeLearner L(3);
    DominationRun run(w->env, L, dparams(*w, four_pow(), 5), w->lam);
    DichotomyParams dp;
    dp.streams = 10;
    dp.stream_length = 64;
    auto rep = verify_domination_dichotomy(run, w->env, L, dp);
    EXPECT_TRUE(rep.bounds_hold);
    EXPECT_LE(rep.lambda_union, rep.bound_sum);
    EXPECT_LE(rep.bound_sum, dy(1, 4));
    EXPECT_GT(rep.residual, dy(1, 1));
    EXPECT_FALSE(rep.discrepancy) << rep.discrepancy_reason;
    // t = 3, 4, 5 all use n* = 6 and land on the same strings τ0^12
    EXPECT_EQ(sorted(rep.rows[3].strings), sorted(rep.rows[5].strings));
    EXPECT_EQ(rep.lambda_union, dy(1, 12));
}

TEST(Dichotomy, OracleDominatesASlowH) {
    auto slow = IntFunction::polynomial({2, 2});
    auto w = world(slow, {0, 1, 2, 3}, 64);
    OracleExLearner L(HighOracle::correct());
    DominationRun run(w->env, L, dparams(*w, slow, 6), w->lam);
    run.prefill(13);
    DichotomyParams dp;
    dp.streams = 4;
    dp.stream_length = 80;
    auto rep = verify_domination_dichotomy(run, w->env, L, dp);
    EXPECT_TRUE(rep.dominates_tail);
    for (const auto& row : rep.rows) EXPECT_GT(row.f, row.h);
    EXPECT_FALSE(rep.discrepancy) << rep.discrepancy_reason;
}
