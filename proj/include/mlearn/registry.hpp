#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "mlearn/bitstring.hpp"
#include "mlearn/dyadic.hpp"
#include "mlearn/law.hpp"
#include "mlearn/schedule.hpp"

namespace mlearn {

using Index = std::uint64_t;

/// A measure program: values from the law, definedness from the schedule.
struct StagedMeasure {
    std::string name;
    LawPtr law;
    Schedule schedule;

    bool defined(std::size_t len, Stage s) const { return schedule.defined(len, s); }
};

struct Violation {
    std::string law;  // root | additivity | length-closure | negative
    BitString sigma;
    std::string detail;
};

struct ValidationReport {
    std::vector<Violation> violations;
    bool ok() const { return violations.empty(); }
    nlohmann::json to_json() const {
        auto arr = nlohmann::json::array();
        for (const auto& v : violations) arr.push_back({{"law", v.law}, {"sigma", v.sigma.str()}, {"detail", v.detail}});
        return arr;
    }
};

/// Finite stand-in for the universal enumeration (mu_i). Index x names slot x mod stride;
/// indices beyond the first block are the paddings p(i,j) = i + (j+1)*stride.
class MeasureRegistry {
public:
    explicit MeasureRegistry(std::size_t declared_stride = 0) : declared_stride_(declared_stride) {}

    Index add(StagedMeasure m) {
        check_open();
        slots_.push_back(Slot{m.name, std::move(m), true, false});
        return slots_.size() - 1;
    }

    /// Claim an index now, define its measure later (the recursion-theorem surrogate).
    Index reserve(std::string name) {
        check_open();
        slots_.push_back(Slot{name, StagedMeasure{std::move(name), nullptr, Schedule::never()}, false, true});
        return slots_.size() - 1;
    }

    void fill(Index slot, StagedMeasure m) {
        if (slot >= slots_.size()) throw UnknownIndex("fill of unknown slot " + std::to_string(slot));
        auto& s = slots_[slot];
        if (!s.reserved) throw Error("slot " + std::to_string(slot) + " (" + s.name + ") was not reserved");
        if (s.filled) throw Error("reserved slot " + std::to_string(slot) + " (" + s.name + ") filled twice");
        s.measure = std::move(m);
        s.filled = true;
    }

    /// Fix the padding stride; no slots may be added afterwards.
    void freeze() {
        if (frozen_) return;
        if (declared_stride_ != 0 && declared_stride_ < slots_.size())
            throw ScenarioError("padding stride " + std::to_string(declared_stride_) + " is below the slot count " +
                                std::to_string(slots_.size()));
        stride_ = std::max<std::size_t>(declared_stride_, slots_.size());
        frozen_ = true;
    }
    bool frozen() const { return frozen_; }

    std::size_t slot_count() const { return slots_.size(); }
    std::size_t stride() const {
        require_frozen();
        return stride_;
    }

    Index pad(Index i, std::uint64_t j) const {
        require_frozen();
        return sat_add(i, sat_mul(j + 1, stride_));
    }

    /// Slot of an index, or nullopt when the index names nothing.
    std::optional<std::size_t> slot_of(Index i) const {
        if (!frozen_) return i < slots_.size() ? std::optional<std::size_t>(i) : std::nullopt;
        if (stride_ == 0) return std::nullopt;
        auto b = static_cast<std::size_t>(i % stride_);
        return b < slots_.size() ? std::optional<std::size_t>(b) : std::nullopt;
    }
    std::size_t require_slot(Index i) const {
        auto b = slot_of(i);
        if (!b) throw UnknownIndex("unknown registry index " + std::to_string(i));
        return *b;
    }

    bool is_filled(Index i) const { return slots_[require_slot(i)].filled; }
    bool is_reserved(Index i) const { return slots_[require_slot(i)].reserved; }
    const std::string& name(Index i) const { return slots_[require_slot(i)].name; }

    /// nullptr for a reserved slot that has not been filled.
    const StagedMeasure* measure(Index i) const {
        const auto& s = slots_[require_slot(i)];
        return s.filled ? &s.measure : nullptr;
    }

    std::optional<Dyadic> eval(Index i, const BitString& sigma, Stage s) const {
        const auto* m = measure(i);
        if (!m || !m->defined(sigma.size(), s)) return std::nullopt;
        return m->law->value_of(sigma);
    }

    std::optional<Stage> time_complexity(Index i, std::uint64_t n) const {
        const auto* m = measure(i);
        if (!m) return std::nullopt;
        return m->schedule.time_complexity(n);
    }

    bool is_total(Index i) const {
        const auto* m = measure(i);
        return m && m->schedule.total();
    }

    /// tc(n) > h(n) for every n in [lo, hi]; never-defined lengths count as exceeding.
    bool dominates(Index i, const IntFunction& h, std::uint64_t lo, std::uint64_t hi) const {
        for (std::uint64_t n = lo; n <= hi; ++n) {
            auto tc = time_complexity(i, n);
            if (tc && *tc <= h(n)) return false;
        }
        return true;
    }

    ValidationReport validate_measure(Index i, std::size_t max_len, Stage s) const {
        ValidationReport rep;
        const auto* m = measure(i);
        if (!m) return rep;  // nothing is ever defined, so no law can fail
        auto defined = [&](std::size_t n) { return m->defined(n, s); };
        for (std::size_t n = 1; n <= max_len; ++n)
            if (defined(n) && !defined(n - 1))
                rep.violations.push_back({"length-closure", BitString::zeros(n - 1),
                                          "length " + std::to_string(n) + " defined but " + std::to_string(n - 1) + " is not"});
        if (defined(0)) {
            auto v = m->law->value(m->law->root());
            if (v != Dyadic(1)) rep.violations.push_back({"root", BitString(), "mu(empty) = " + v.to_string()});
        }
        struct Node {
            BitString sigma;
            LawState st;
        };
        std::vector<Node> stack{{BitString(), m->law->root()}};
        while (!stack.empty()) {
            Node nd = std::move(stack.back());
            stack.pop_back();
            const std::size_t n = nd.sigma.size();
            if (!defined(n)) continue;
            auto v = m->law->value(nd.st);
            if (v.sign() < 0) rep.violations.push_back({"negative", nd.sigma, "value " + v.to_string()});
            if (n == max_len || !defined(n + 1)) continue;
            auto s0 = m->law->step(nd.st, 0), s1 = m->law->step(nd.st, 1);
            auto v0 = m->law->value(s0), v1 = m->law->value(s1);
            if (v0 + v1 != v)
                rep.violations.push_back({"additivity", nd.sigma,
                                          v.to_string() + " != " + v0.to_string() + " + " + v1.to_string()});
            stack.push_back({nd.sigma.child(1), std::move(s1)});
            stack.push_back({nd.sigma.child(0), std::move(s0)});
        }
        return rep;
    }

    std::optional<Dyadic> measure_of_set(Index i, const std::vector<BitString>& set, Stage s) const {
        if (!is_prefix_free(set)) throw Error("measure_of_set: set is not prefix-free");
        Dyadic total;
        for (const auto& sigma : set) {
            auto v = eval(i, sigma, s);
            if (!v) return std::nullopt;
            total += *v;
        }
        return total;
    }

    /// Pure function of (i, n, seed): bit 1 is drawn with probability mu(σ1)/mu(σ).
    BitString sample_stream(Index i, std::size_t n, std::uint64_t seed) const {
        const auto* m = measure(i);
        if (!m || !m->schedule.time_complexity(n))
            throw Error("sample_stream: measure " + std::to_string(i) + " is partial below length " + std::to_string(n));
        std::mt19937_64 rng(seed);
        const Dyadic scale = Dyadic::pow2(-64);
        BitString x;
        LawState st = m->law->root();
        Dyadic v = m->law->value(st);
        for (std::size_t k = 0; k < n; ++k) {
            if (v.sign() <= 0) throw Error("sample_stream: zero-measure dead end at \"" + x.str() + "\"");
            auto s1 = m->law->step(st, 1);
            auto v1 = m->law->value(s1);
            const Dyadic u = Dyadic::from_parts(BigInt(rng()), 0);
            int bit = u * v < v1 * scale ? 1 : 0;
            if (bit) {
                st = std::move(s1);
                v = std::move(v1);
            } else {
                st = m->law->step(st, 0);
                v = m->law->value(st);
            }
            x.push_back(bit);
        }
        if (v.sign() <= 0) throw Error("sample_stream: zero-measure dead end at \"" + x.str() + "\"");
        return x;
    }

private:
    struct Slot {
        std::string name;
        StagedMeasure measure;
        bool filled;
        bool reserved;
    };

    void check_open() const {
        if (frozen_) throw Error("registry is frozen; indices are stable");
    }
    void require_frozen() const {
        if (!frozen_) throw Error("registry padding requires freeze()");
    }

    std::vector<Slot> slots_;
    std::size_t declared_stride_;
    std::size_t stride_ = 0;
    bool frozen_ = false;
};

}  // namespace mlearn
