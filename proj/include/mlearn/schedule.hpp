#pragma once

#include <cstdint>
#include <optional>

#include "mlearn/function.hpp"

namespace mlearn {

/// Halting schedule of a measure program: length n becomes defined (all of 2^{<=n}) at
/// stage stage_of_length(n); lengths above defined_through never become defined.
class Schedule {
public:
    Schedule() : stage_of_length_(IntFunction::constant(0)) {}
    explicit Schedule(IntFunction stage_of_length, std::optional<std::int64_t> defined_through = std::nullopt)
        : stage_of_length_(std::move(stage_of_length)), defined_through_(defined_through) {}

    static Schedule immediate() { return Schedule(); }
    static Schedule never() { return Schedule(IntFunction::constant(0), -1); }
    static Schedule through(std::int64_t last_length, IntFunction stage_of_length = IntFunction::constant(0)) {
        return Schedule(std::move(stage_of_length), last_length);
    }

    /// Least stage at which 2^{<=n} is defined; nullopt when never.
    std::optional<Stage> time_complexity(std::uint64_t n) const {
        if (defined_through_ && static_cast<std::int64_t>(n) > *defined_through_) return std::nullopt;
        return stage_of_length_(n);
    }

    bool defined(std::uint64_t n, Stage s) const {
        auto tc = time_complexity(n);
        return tc && *tc <= s;
    }

    bool total() const { return !defined_through_; }
    const std::optional<std::int64_t>& defined_through() const { return defined_through_; }
    const IntFunction& stage_of_length() const { return stage_of_length_; }

    /// Non-decreasing on [0, bound]; the time-complexity invariant.
    bool monotone_below(std::uint64_t bound) const {
        for (std::uint64_t n = 0; n < bound; ++n)
            if (stage_of_length_(n) > stage_of_length_(n + 1)) return false;
        return true;
    }

    static Schedule from_json(const nlohmann::json& j) {
        if (j.is_object() && j.value("kind", "") == "never") return never();
        if (j.is_object() && j.contains("function")) {
            std::optional<std::int64_t> through;
            if (j.contains("defined_through")) {
                const auto& t = j.at("defined_through");
                if (!t.is_number_integer() || t.get<std::int64_t>() < -1)
                    throw ScenarioError("defined_through must be an integer >= -1: " + j.dump());
                through = t.get<std::int64_t>();
            }
            return Schedule(IntFunction::from_json(j.at("function")), through);
        }
        return Schedule(IntFunction::from_json(j));
    }

    nlohmann::json to_json() const {
        nlohmann::json j = {{"function", stage_of_length_.to_json()}};
        if (defined_through_) j["defined_through"] = *defined_through_;
        return j;
    }

private:
    IntFunction stage_of_length_;
    std::optional<std::int64_t> defined_through_;
};

}  // namespace mlearn
