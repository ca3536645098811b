#include <gtest/gtest.h>

#include <boost/multiprecision/cpp_int.hpp>
#include <random>

#include "mlearn/clopen.hpp"
#include "mlearn/deficiency.hpp"

using namespace mlearn;
using Rational = boost::multiprecision::cpp_rational;

namespace {

Dyadic dy(std::int64_t num, std::int64_t exp) { return Dyadic::from_parts(BigInt(num), exp); }

StagedMeasure fast(std::string name, LawPtr law) { return {std::move(name), std::move(law), Schedule::immediate()}; }

Environment uniform_env() {
    Environment env;
    env.registry.add(fast("u", std::make_shared<UniformLaw>()));
    env.registry.add(fast("b34", std::make_shared<BernoulliLaw>(dy(3, 2))));
    env.registry.add({"slow", std::make_shared<UniformLaw>(), Schedule(IntFunction::polynomial({0, 2}))});
    env.registry.freeze();
    return env;
}

}  // namespace

TEST(RequestCompression, KraftSaturation) {
    RequestLogMachine m;
    EXPECT_TRUE(m.request(BitString("0"), 0, 0));
    EXPECT_EQ(m.weight(), Dyadic(1));
    EXPECT_FALSE(m.request(BitString("1"), 0, 0));
    EXPECT_FALSE(m.request(BitString("1"), 30, 1));
    EXPECT_EQ(m.weight(), Dyadic(1));
    EXPECT_FALSE(m.complexity(BitString("1"), 5).has_value());
}

TEST(RequestCompression, FourQuarters) {
    RequestLogMachine m;
    for (const char* s : {"00", "01", "10", "11"}) EXPECT_TRUE(m.request(BitString(s), 2, 0));
    EXPECT_EQ(m.weight(), Dyadic(1));
    EXPECT_FALSE(m.request(BitString("0"), 3, 0));
}

TEST(RequestCompression, StageOrderIsEnforced) {
    RequestLogMachine m;
    EXPECT_TRUE(m.request(BitString("0"), 3, 5));
    EXPECT_THROW(m.request(BitString("1"), 3, 4), Error);
}

TEST(RequestCompression, RandomSequencesNeverExceedOne) {
    std::mt19937_64 rng(99);
    for (int c = 0; c < 200; ++c) {
        RequestLogMachine m;
        Rational w = 0;
        Stage st = 0;
        for (int r = 0; r < 40; ++r) {
            st += rng() % 3;
            auto len = rng() % 6;
            BitString s = BitString::from_index(rng() % 16, 4);
            Rational add(1, BigInt(1) << len);
            bool expect = w + add <= 1;
            EXPECT_EQ(m.request(s, len, st), expect);
            if (expect) w += add;
            ASSERT_LE(m.weight(), Dyadic(1));
        }
        EXPECT_EQ(Rational(m.weight().num(), BigInt(1) << m.weight().exp()), w);
    }
}

TEST(UniversalK, SpecExamples) {
    MeasureRegistry reg;
    reg.freeze();
    UniversalMachine none;
    none.add_request_machine("m", 1);
    EXPECT_FALSE(none.K(reg, BitString("0101"), 1000).has_value());

    UniversalMachine one;
    one.add_request_machine("m", 3);
    one.requests("m").request(BitString("01"), 5, 2);
    EXPECT_FALSE(one.K(reg, BitString("01"), 1).has_value());
    EXPECT_EQ(one.K(reg, BitString("01"), 2), 8u);

    UniversalMachine two;
    two.add_request_machine("M", 2);
    two.add_request_machine("N", 4);
    two.requests("M").request(BitString("1"), 7, 0);
    two.requests("N").request(BitString("1"), 3, 0);
    EXPECT_EQ(two.K(reg, BitString("1"), 0), std::min<std::uint64_t>(7 + 2, 3 + 4));
}

TEST(UniversalK, KraftOnConstants) {
    UniversalMachine m;
    m.add_request_machine("a", 1);
    m.add_request_machine("b", 2);
    m.add_request_machine("c", 3);
    EXPECT_THROW(m.add_request_machine("d", 2), ScenarioError);  // 1/2+1/4+1/8+1/4 = 9/8
    EXPECT_NO_THROW(m.add_request_machine("e", 3));
    EXPECT_EQ(m.constant_weight(), Dyadic(1));
    EXPECT_THROW(m.add_request_machine("a", 9), ScenarioError);
}

TEST(LengthCode, KraftHolds) {
    for (LengthCode code : {LengthCode{LengthCode::Kind::elias_delta, 0}, LengthCode{LengthCode::Kind::flat, 512},
                            LengthCode{LengthCode::Kind::flat, 3}}) {
        Dyadic sum;
        for (std::uint64_t n = 0; n < 5000; ++n) sum += Dyadic::pow2(static_cast<std::int64_t>(code.length(n)));
        EXPECT_LE(sum, Dyadic(1));
    }
    EXPECT_EQ(elias_delta_length(1), 1u);
    EXPECT_EQ(elias_delta_length(2), 4u);
    EXPECT_EQ(elias_delta_length(17), 9u);
    EXPECT_EQ((LengthCode{LengthCode::Kind::flat, 512}.length(10)), 10u);
}

TEST(Deficiency, SpecExamples) {
    auto env = uniform_env();
    env.machine.add_request_machine("m", 1);
    BitString s("01100101");
    env.machine.requests("m").request(s, 7, 0);  // K = 7 + 1 = 8
    auto d = deficiency(env, 0, s, 0);
    ASSERT_TRUE(d.is_finite());
    EXPECT_EQ(d.value(), 0);

    Environment e2;
    std::map<BitString, Dyadic> vals{{BitString(""), Dyadic(1)}, {BitString("0"), dy(7, 4)}, {BitString("1"), dy(9, 4)}};
    e2.registry.add(fast("t", TableLaw::from_values(vals)));
    e2.registry.freeze();
    e2.machine.add_request_machine("m", 1);
    e2.machine.requests("m").request(BitString("1"), 0, 0);  // K = 1
    EXPECT_EQ(deficiency(e2, 0, BitString("1"), 0).value(), 1 - 1);
}

TEST(Deficiency, UndefinedAndInfinite) {
    Environment env;
    std::map<BitString, Dyadic> cond{{BitString(""), Dyadic(1)}};
    env.registry.add(fast("ones", TableLaw::from_conditionals(cond)));
    env.registry.add({"slow", std::make_shared<UniformLaw>(), Schedule(IntFunction::constant(10))});
    env.registry.freeze();
    env.machine.add_request_machine("m", 1);
    EXPECT_FALSE(deficiency(env, 0, BitString("1"), 0).defined());  // K undefined
    EXPECT_TRUE(deficiency(env, 0, BitString("0"), 0).is_infinite());
    env.machine.requests("m").request(BitString("1"), 2, 0);
    EXPECT_FALSE(deficiency(env, 1, BitString("1"), 9).defined());  // μ undefined
    EXPECT_EQ(deficiency(env, 1, BitString("1"), 10).value(), 1 - 3);
}

TEST(Deficiency, MonotoneInStage) {
    auto env = uniform_env();
    env.machine.add_coder("cu", 2, 0);
    env.machine.add_request_machine("m", 2);
    BitString s("0000000000");
    env.machine.requests("m").request(s, 9, 3);
    env.machine.requests("m").request(s, 4, 7);
    env.machine.requests("m").request(s, 6, 8);
    std::optional<std::uint64_t> prevK;
    Deficiency prev = Deficiency::undefined();
    for (Stage st = 0; st < 12; ++st) {
        auto k = env.machine.K(env.registry, s, st);
        if (prevK) EXPECT_LE(*k, *prevK);
        prevK = k;
        auto d = deficiency(env, 2, s, st);
        if (prev.defined()) EXPECT_FALSE(d < prev);
        if (d.defined()) prev = d;
    }
    EXPECT_EQ(env.machine.K(env.registry, s, 11), 6u);
}

TEST(StreamDeficiency, SpecExamples) {
    auto env = uniform_env();
    env.machine.add_request_machine("m", 1);
    BitString x("0110100110010110");
    EXPECT_EQ(stream_deficiency(env, 0, x, 100).value(), 0);  // nothing compressed
    env.machine.requests("m").request(x.prefix(6), 1, 0);    // d = 6 - 2 = 4
    EXPECT_EQ(stream_deficiency(env, 0, x, 0).value(), 4);
    EXPECT_GE(stream_deficiency(env, 0, x.prefix(12), 0).value(), stream_deficiency(env, 0, x.prefix(8), 0).value());
}

TEST(PrefixProfile, AgreesWithDirectDeficiency) {
    auto env = uniform_env();
    env.machine.add_coder("cu", 3, 0);
    env.machine.add_coder("cb", 3, 1, LengthCode{LengthCode::Kind::elias_delta, 0});
    env.machine.add_request_machine("m", 2);
    std::mt19937_64 rng(3);
    BitString x = env.registry.sample_stream(1, 24, 17);
    for (std::size_t n = 0; n <= x.size(); n += 3) env.machine.requests("m").request(x.prefix(n), rng() % 20, n);
    PrefixProfile prof(env, x);
    for (std::size_t b = 0; b < 3; ++b)
        for (std::size_t m = 0; m <= x.size(); ++m)
            for (Stage st : {Stage{0}, Stage{5}, Stage{20}, Stage{60}}) {
                auto direct = deficiency(env, b, x.prefix(m), st);
                ASSERT_EQ(prof.deficiency(b, m, st), direct) << b << " " << m << " " << st;
                ASSERT_EQ(prof.K(m, st), [&]() -> std::optional<std::int64_t> {
                    auto k = env.machine.K(env.registry, x.prefix(m), st);
                    if (!k) return std::nullopt;
                    return static_cast<std::int64_t>(*k);
                }());
            }
}

TEST(Cost, SpecExamples) {
    auto env = uniform_env();
    env.machine.add_request_machine("m", 1);
    EXPECT_EQ(cost(env, BitString("0101"), 2, 10).value(), 2);  // nothing defined: e + 0
    BitString s("00000000");
    env.machine.requests("m").request(s.prefix(7), 1, 0);  // d = 7 - 2 = 5
    EXPECT_EQ(cost(env, s, 3, 0).value(), 3 + 5);
    env.machine.requests("m").request(s.prefix(8), 1, 4);  // d = 8 - 2 = 6 from stage 4
    EXPECT_EQ(cost(env, s, 3, 3).value(), 8);
    EXPECT_EQ(cost(env, s, 3, 4).value(), 9);
}

TEST(ClopenTest, SpecExamples) {
    auto env = uniform_env();
    ClopenTest empty{0, {}};
    EXPECT_TRUE(validate_clopen_test(env.registry, empty, 5).ok());
    ClopenTest good{0, {{0, {BitString("0"), BitString("1")}}, {1, {BitString("1")}}}};
    EXPECT_TRUE(validate_clopen_test(env.registry, good, 5).ok());
    ClopenTest bad{0, {{0, {BitString("")}}, {0, {BitString("0")}}, {0, {BitString("00"), BitString("1")}}}};
    auto rep = validate_clopen_test(env.registry, bad, 5);
    ASSERT_EQ(rep.violations.size(), 1u);  // 3/4 > 1/4 at D_2
    ClopenTest three_eighths{0, {{0, {BitString("")}}, {0, {BitString("0")}}, {0, {BitString("000"), BitString("11")}}}};
    EXPECT_FALSE(validate_clopen_test(env.registry, three_eighths, 5).ok());
    ClopenTest disordered{0, {{3, {BitString("")}}, {1, {BitString("0")}}}};
    EXPECT_FALSE(validate_clopen_test(env.registry, disordered, 5).ok());
}

TEST(Compressor, QFormula) { EXPECT_EQ(q_index(0, 1, 2, 7), 15u); }

TEST(Compressor, NeverFiresWithoutTheMember) {
    auto env = uniform_env();
    env.machine.add_request_machine("M", 3);
    ClopenTest short_test{0, {{1, {BitString("1")}}}};
    EXPECT_FALSE(compressor_run(env, "M", 0, 0, 0, short_test, 100).has_value());
    EXPECT_EQ(env.machine.requests("M").weight(), Dyadic());
}

TEST(Compressor, WeightBoundAndDeficiencyGuarantee) {
    auto env = uniform_env();
    env.machine.add_coder("cu", 2, 0);
    env.machine.add_request_machine("M", 3);
    const std::uint64_t t = 1, e = 0, k = 2, x = 3;
    const auto q = q_index(t, e, k, x);  // 11
    // Members halve in uniform measure: member j (ordinal j+1) = strings 1^{j+1} extended by anything to length 14.
    ClopenTest test{e, {}};
    for (std::uint64_t j = 1; j <= q; ++j) {
        std::vector<BitString> strings;
        for (std::uint64_t r = 0; r < (1u << 2); ++r)
            strings.push_back(BitString(std::string(j, '1')) + BitString::from_index(r, 2) + BitString::zeros(12 - j));
        test.members.push_back({j, strings});
    }
    // μ(member q) = 4 * 2^-14 = 2^-12 <= 2^-q = 2^-11
    auto f = compressor_run(env, "M", t, e, k, test, 100);
    ASSERT_TRUE(f.has_value());
    EXPECT_EQ(f->q, 11u);
    EXPECT_LE(f->added_weight, Dyadic::pow2(static_cast<std::int64_t>(t + e + 5)));
    for (const auto& s : f->target)
        for (Stage st = f->stage; st < f->stage + 5; ++st) EXPECT_TRUE(deficiency(env, e, s, st).at_least(k));
}

TEST(Compressor, GeometricBoundIsOneEighth) {
    // sum_{t,e >= 0} 2^{-t-e-5} = (sum_t 2^-t)^2 / 32 = 4/32 = 1/8; partial sums stay below it.
    Rational partial = 0;
    for (int t = 0; t < 40; ++t)
        for (int e = 0; e < 40; ++e) partial += Rational(1, BigInt(1) << (t + e + 5));
    EXPECT_LT(partial, Rational(1, 8));
    EXPECT_GT(partial, Rational(1, 8) - Rational(1, BigInt(1) << 30));
}

TEST(RequestLog, ReplayReproducesState) {
    auto env = uniform_env();
    env.machine.add_request_machine("M", 2);
    env.machine.add_request_machine("N", 2);
    std::mt19937_64 rng(8);
    for (Stage st = 0; st < 60; ++st)
        env.machine.requests(st % 2 ? "M" : "N").request(BitString::from_index(rng() % 32, 5), 2 + rng() % 6, st);
    auto lines = env.machine.request_log_lines();
    UniversalMachine copy;
    copy.add_request_machine("M", 2);
    copy.add_request_machine("N", 2);
    copy.replay(lines);
    EXPECT_EQ(copy.request_log_lines(), lines);
    for (const auto& s : strings_of_length(5))
        for (Stage st = 0; st < 60; st += 7) EXPECT_EQ(copy.K(env.registry, s, st), env.machine.K(env.registry, s, st));
}
