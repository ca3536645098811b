#pragma once

#include <algorithm>
#include <cstdint>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "mlearn/learners.hpp"

namespace mlearn {

struct LearnerTrace {
    BitString stream;
    std::vector<Prediction> predictions;       // n = 0..N
    std::vector<Deficiency> deficiency;        // floored max prefix deficiency of the prediction at stage n
    std::size_t mind_changes = 0;              // changes between consecutive outputs (gaps skipped)
    std::optional<std::size_t> stabilization;  // least n0 with a constant gap-free tail

    std::size_t horizon() const { return stream.size(); }

    /// CSV: n, prediction or GAP, cost of chosen index, deficiency estimate.
    std::string csv() const {
        std::ostringstream os;
        os << "n,prediction,cost,deficiency\n";
        for (std::size_t n = 0; n < predictions.size(); ++n) {
            const auto& p = predictions[n];
            os << n << ',';
            if (p.index) {
                os << *p.index << (p.fallback ? "*" : "");
            } else {
                os << "GAP";
            }
            os << ',' << (p.cost.defined() ? p.cost.to_string() : "") << ','
               << (deficiency[n].defined() ? deficiency[n].to_string() : "") << '\n';
        }
        return os.str();
    }
};

inline Deficiency floored(Deficiency d) {
    if (!d.defined()) return Deficiency::finite(0);
    if (d.is_finite() && d.value() < 0) return Deficiency::finite(0);
    return d;
}

inline LearnerTrace run_trace(const Environment& env, const Learner& learner, const BitString& x) {
    LearnerTrace tr;
    tr.stream = x;
    tr.predictions = learner.predict_prefixes(env, x);
    if (tr.predictions.size() != x.size() + 1) throw InvariantViolation("learner returned a short prediction list");
    PrefixProfile prof(env, x);
    std::optional<Index> last;
    for (std::size_t n = 0; n <= x.size(); ++n) {
        const auto& p = tr.predictions[n];
        Deficiency d = Deficiency::undefined();
        if (p.index) {
            if (auto b = env.registry.slot_of(*p.index)) d = floored(prof.max_prefix_deficiency(*b, n, n));
            if (last && *last != *p.index) ++tr.mind_changes;
            last = p.index;
        }
        tr.deficiency.push_back(d);
    }
    std::size_t n0 = tr.predictions.size();
    while (n0 > 0 && tr.predictions[n0 - 1].index && tr.predictions[n0 - 1].index == tr.predictions.back().index) --n0;
    if (n0 < tr.predictions.size()) tr.stabilization = n0;
    return tr;
}

enum class Outcome { ex_success, partial_success, failure, undecided };

inline std::string to_string(Outcome o) {
    switch (o) {
        case Outcome::ex_success: return "ex_success";
        case Outcome::partial_success: return "partial_success";
        case Outcome::failure: return "failure";
        default: return "undecided";
    }
}

struct ClassifyParams {
    std::size_t window = 0;                 // 0 means N/4
    std::optional<std::int64_t> threshold;  // Delta; default is the stabilized index
};

struct Classification {
    Outcome outcome = Outcome::undecided;
    std::optional<Index> index;  // the single index of the final window, if any
    std::size_t window = 0;
    std::size_t window_mind_changes = 0;
    std::size_t window_gaps = 0;
    std::size_t occurrences = 0;
    Deficiency deficiency = Deficiency::undefined();
    std::string witness;  // reason for failure / undecided
};

/// Window rules. Final window = the last W predictions.
/// - one index, no gaps, total, stream deficiency <= Delta: ex_success
/// - one index recurring (>= 2 times) with gaps, total, deficiency <= Delta: partial_success
/// - one index that is not total or exceeds Delta: failure
/// - at least W/2 mind changes inside the window: failure (divergent)
/// - several indices, none of them total: failure
/// - otherwise undecided
inline Classification classify(const Environment& env, const LearnerTrace& tr, ClassifyParams params = {}) {
    Classification c;
    const std::size_t total = tr.predictions.size();
    std::size_t W = params.window ? params.window : std::max<std::size_t>(1, tr.horizon() / 4);
    W = std::min(W, total);
    c.window = W;
    std::set<Index> seen;
    std::optional<Index> last;
    for (std::size_t n = total - W; n < total; ++n) {
        const auto& p = tr.predictions[n];
        if (!p.index) {
            ++c.window_gaps;
            continue;
        }
        seen.insert(*p.index);
        if (last && *last != *p.index) ++c.window_mind_changes;
        last = p.index;
        ++c.occurrences;
    }
    if (seen.empty()) {
        c.witness = "no output in the final window";
        return c;
    }
    if (seen.size() > 1) {
        c.occurrences = 0;
        if (2 * c.window_mind_changes >= W) {
            c.outcome = Outcome::failure;
            c.witness = "divergent: " + std::to_string(c.window_mind_changes) + " mind changes in the final window";
        } else if (std::none_of(seen.begin(), seen.end(), [&](Index i) {
                       return env.registry.slot_of(i) && env.registry.is_total(i);
                   })) {
            c.outcome = Outcome::failure;
            c.witness = "every index in the final window is non-total";
        } else {
            c.witness = std::to_string(seen.size()) + " indices in the final window";
        }
        return c;
    }
    const Index j = *seen.begin();
    c.index = j;
    const auto& reg = env.registry;
    auto slot = reg.slot_of(j);
    if (!slot || !reg.is_total(j)) {
        c.outcome = Outcome::failure;
        c.witness = "limit index " + std::to_string(j) + " is not total";
        return c;
    }
    PrefixProfile prof(env, tr.stream);
    c.deficiency = floored(prof.max_prefix_deficiency(*slot, tr.horizon(), tr.horizon()));
    const std::int64_t delta = params.threshold ? *params.threshold : static_cast<std::int64_t>(j);
    if (!c.deficiency.at_most(delta)) {
        c.outcome = Outcome::failure;
        c.witness = "deficiency " + c.deficiency.to_string() + " exceeds " + std::to_string(delta);
        return c;
    }
    if (c.window_gaps == 0) {
        c.outcome = Outcome::ex_success;
    } else if (c.occurrences >= 2) {
        c.outcome = Outcome::partial_success;
    } else {
        c.witness = "single occurrence in the final window";
    }
    return c;
}

inline nlohmann::json to_json(const Classification& c) {
    nlohmann::json j = {{"outcome", to_string(c.outcome)},
                        {"window", c.window},
                        {"window_mind_changes", c.window_mind_changes},
                        {"window_gaps", c.window_gaps},
                        {"deficiency", c.deficiency.defined() ? c.deficiency.to_json() : nlohmann::json(nullptr)},
                        {"witness", c.witness}};
    j["index"] = c.index ? nlohmann::json(*c.index) : nlohmann::json(nullptr);
    return j;
}

}  // namespace mlearn
