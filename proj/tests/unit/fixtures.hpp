#pragma once

#include "mlearn/deficiency.hpp"

namespace fixtures {

using namespace mlearn;

inline Dyadic dy(std::int64_t num, std::int64_t exp) { return Dyadic::from_parts(BigInt(num), exp); }

inline StagedMeasure fast(std::string name, LawPtr law) { return {std::move(name), std::move(law), Schedule::immediate()}; }

/// 0: uniform defined through length 6, 1: uniform, 2: bernoulli(3/4), 3: bernoulli(1/4),
/// 4: bernoulli(3/4) defined through length 10. Coders for 1..3.
inline Environment learn_env() {
    Environment env;
    auto& r = env.registry;
    r.add({"decoy-u", std::make_shared<UniformLaw>(), Schedule::through(6)});
    r.add(fast("u", std::make_shared<UniformLaw>()));
    r.add(fast("b34", std::make_shared<BernoulliLaw>(dy(3, 2))));
    r.add(fast("b14", std::make_shared<BernoulliLaw>(dy(1, 2))));
    r.add({"decoy-b34", std::make_shared<BernoulliLaw>(dy(3, 2)), Schedule::through(10)});
    r.freeze();
    env.machine.add_coder("code-u", 2, 1);
    env.machine.add_coder("code-b34", 2, 2);
    env.machine.add_coder("code-b14", 2, 3);
    return env;
}

}  // namespace fixtures
