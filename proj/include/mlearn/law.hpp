#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "json.hpp"
#include "mlearn/bitstring.hpp"
#include "mlearn/dyadic.hpp"

namespace mlearn {

/// Finite summary of a string sufficient to read off a measure's value on it.
/// Laws are automata: root(), step(state, bit), value(state).
using LawState = std::vector<std::int64_t>;
using StateView = std::span<const std::int64_t>;

struct LawStateHash {
    std::size_t operator()(const LawState& s) const noexcept {
        std::size_t h = 0x9e3779b97f4a7c15ULL;
        for (auto v : s) h ^= std::hash<std::int64_t>{}(v) + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
        return h;
    }
};

class MeasureLaw {
public:
    virtual ~MeasureLaw() = default;

    virtual std::size_t width() const = 0;
    virtual void append_root(LawState& out) const = 0;
    virtual void append_step(StateView in, int bit, LawState& out) const = 0;
    virtual Dyadic value(StateView st) const = 0;
    virtual nlohmann::json to_json() const = 0;

    LawState root() const {
        LawState s;
        s.reserve(width());
        append_root(s);
        return s;
    }
    LawState step(const LawState& st, int bit) const {
        LawState s;
        s.reserve(width());
        append_step(st, bit, s);
        return s;
    }
    LawState walk(const BitString& sigma) const {
        LawState s = root();
        for (std::size_t i = 0; i < sigma.size(); ++i) s = step(s, sigma[i]);
        return s;
    }
    Dyadic value_of(const BitString& sigma) const { return value(walk(sigma)); }
};

using LawPtr = std::shared_ptr<const MeasureLaw>;

namespace detail {

/// Thread-safe memo for value(state).
class ValueMemo {
public:
    template <class F>
    Dyadic get(StateView st, F&& compute) const {
        LawState key(st.begin(), st.end());
        {
            std::lock_guard<std::mutex> lock(mu_);
            auto it = memo_.find(key);
            if (it != memo_.end()) return it->second;
        }
        Dyadic v = compute();
        std::lock_guard<std::mutex> lock(mu_);
        memo_.emplace(std::move(key), v);
        return v;
    }

private:
    mutable std::mutex mu_;
    mutable std::unordered_map<LawState, Dyadic, LawStateHash> memo_;
};

}  // namespace detail

class UniformLaw final : public MeasureLaw {
public:
    std::size_t width() const override { return 1; }
    void append_root(LawState& out) const override { out.push_back(0); }
    void append_step(StateView in, int, LawState& out) const override { out.push_back(in[0] + 1); }
    Dyadic value(StateView st) const override { return Dyadic::pow2(st[0]); }
    nlohmann::json to_json() const override { return {{"kind", "uniform"}}; }
};

/// Independent bits, each 1 with probability q.
class BernoulliLaw final : public MeasureLaw {
public:
    explicit BernoulliLaw(Dyadic q) : q_(std::move(q)), r_(Dyadic(1) - q_) {
        if (q_.sign() < 0 || q_ > Dyadic(1)) throw ScenarioError("bernoulli parameter outside [0,1]: " + q_.to_string());
    }
    const Dyadic& q() const { return q_; }
    std::size_t width() const override { return 2; }
    void append_root(LawState& out) const override {
        out.push_back(0);
        out.push_back(0);
    }
    void append_step(StateView in, int bit, LawState& out) const override {
        out.push_back(in[0] + 1);
        out.push_back(in[1] + bit);
    }
    Dyadic value(StateView st) const override {
        std::lock_guard<std::mutex> lock(mu_);
        return power(q_pow_, q_, static_cast<std::size_t>(st[1])) *
               power(r_pow_, r_, static_cast<std::size_t>(st[0] - st[1]));
    }
    nlohmann::json to_json() const override { return {{"kind", "bernoulli"}, {"q", q_.to_json()}}; }

private:
    static const Dyadic& power(std::vector<Dyadic>& cache, const Dyadic& base, std::size_t k) {
        if (cache.empty()) cache.emplace_back(1);
        while (cache.size() <= k) cache.push_back(cache.back() * base);
        return cache[k];
    }

    Dyadic q_, r_;
    mutable std::mutex mu_;
    mutable std::vector<Dyadic> q_pow_, r_pow_;
};

/// Explicit values on 2^{<=depth}; beyond depth, mass splits evenly.
/// Values are taken as given so malformed tables can be represented and diagnosed.
class TableLaw final : public MeasureLaw {
public:
    /// values indexed by code(σ) = (1 << |σ|) | bits(σ), for |σ| <= depth.
    TableLaw(std::size_t depth, std::vector<Dyadic> values) : depth_(depth), values_(std::move(values)) {
        if (depth_ > 24) throw ScenarioError("finite-tree depth above 24 is not supported");
        if (values_.size() != (std::size_t{2} << depth_)) throw ScenarioError("finite-tree table has wrong size");
    }

    static std::size_t code(const BitString& s) {
        std::size_t c = 1;
        for (std::size_t i = 0; i < s.size(); ++i) c = (c << 1) | static_cast<std::size_t>(s[i]);
        return c;
    }

    /// From explicit values {"": v, "0": v, ...}; every string up to the deepest key is required.
    static std::shared_ptr<TableLaw> from_values(const std::map<BitString, Dyadic>& table) {
        std::size_t depth = 0;
        for (const auto& [k, v] : table) depth = std::max(depth, k.size());
        std::vector<Dyadic> vals(std::size_t{2} << depth);
        for (std::size_t n = 0; n <= depth; ++n)
            for (const auto& s : strings_of_length(n)) {
                auto it = table.find(s);
                if (it == table.end()) throw ScenarioError("finite-tree table misses string \"" + s.str() + "\"");
                vals[code(s)] = it->second;
            }
        return std::make_shared<TableLaw>(depth, std::move(vals));
    }

    /// From conditionals P(next bit = 1 | σ); missing entries default to 1/2.
    static std::shared_ptr<TableLaw> from_conditionals(const std::map<BitString, Dyadic>& cond) {
        std::size_t depth = 0;
        for (const auto& [k, v] : cond) {
            if (v.sign() < 0 || v > Dyadic(1))
                throw ScenarioError("conditional outside [0,1] at \"" + k.str() + "\"");
            depth = std::max(depth, k.size() + 1);
        }
        std::vector<Dyadic> vals(std::size_t{2} << depth);
        vals[1] = Dyadic(1);
        for (std::size_t n = 0; n < depth; ++n)
            for (const auto& s : strings_of_length(n)) {
                auto it = cond.find(s);
                Dyadic p1 = it == cond.end() ? Dyadic::pow2(1) : it->second;
                const Dyadic& v = vals[code(s)];
                vals[code(s.child(1))] = v * p1;
                vals[code(s.child(0))] = v * (Dyadic(1) - p1);
            }
        return std::make_shared<TableLaw>(depth, std::move(vals));
    }

    std::size_t depth() const { return depth_; }
    std::size_t width() const override { return 2; }
    void append_root(LawState& out) const override {
        out.push_back(0);
        out.push_back(1);
    }
    void append_step(StateView in, int bit, LawState& out) const override {
        out.push_back(in[0] + 1);
        out.push_back(static_cast<std::size_t>(in[0]) < depth_ ? (in[1] << 1) | bit : in[1]);
    }
    Dyadic value(StateView st) const override {
        const Dyadic& v = values_[static_cast<std::size_t>(st[1])];
        auto extra = st[0] - static_cast<std::int64_t>(depth_);
        return extra > 0 ? v * Dyadic::pow2(extra) : v;
    }
    nlohmann::json to_json() const override {
        nlohmann::json vals = nlohmann::json::object();
        for (std::size_t n = 0; n <= depth_; ++n)
            for (const auto& s : strings_of_length(n)) vals[s.str()] = values_[code(s)].to_json();
        return {{"kind", "finite-tree"}, {"values", vals}};
    }

private:
    std::size_t depth_;
    std::vector<Dyadic> values_;
};

/// Convex combination of component laws; its state is the concatenation of theirs.
class MixtureLaw final : public MeasureLaw {
public:
    MixtureLaw(std::vector<std::pair<Dyadic, LawPtr>> parts) : parts_(std::move(parts)) {
        if (parts_.empty()) throw ScenarioError("mixture without components");
        Dyadic total;
        for (const auto& [w, law] : parts_) {
            if (w.sign() < 0) throw ScenarioError("negative mixture weight " + w.to_string());
            total += w;
            offsets_.push_back(width_);
            width_ += law->width();
        }
        if (total != Dyadic(1)) throw ScenarioError("mixture weights sum to " + total.to_string() + ", not 1");
    }

    std::size_t width() const override { return width_; }
    void append_root(LawState& out) const override {
        for (const auto& p : parts_) p.second->append_root(out);
    }
    void append_step(StateView in, int bit, LawState& out) const override {
        for (std::size_t k = 0; k < parts_.size(); ++k)
            parts_[k].second->append_step(in.subspan(offsets_[k], parts_[k].second->width()), bit, out);
    }
    Dyadic value(StateView st) const override {
        return memo_.get(st, [&] {
            Dyadic v;
            for (std::size_t k = 0; k < parts_.size(); ++k)
                v += parts_[k].first * parts_[k].second->value(st.subspan(offsets_[k], parts_[k].second->width()));
            return v;
        });
    }
    nlohmann::json to_json() const override {
        nlohmann::json comps = nlohmann::json::array();
        for (const auto& [w, law] : parts_) comps.push_back({{"weight", w.to_json()}, {"measure", law->to_json()}});
        return {{"kind", "mixture"}, {"components", comps}};
    }

private:
    std::vector<std::pair<Dyadic, LawPtr>> parts_;
    std::vector<std::size_t> offsets_;
    std::size_t width_ = 0;
    detail::ValueMemo memo_;
};

/// Several laws run side by side; used by the state-space analyses.
class LawTuple {
public:
    explicit LawTuple(std::vector<const MeasureLaw*> laws) : laws_(std::move(laws)) {
        for (const auto* l : laws_) {
            offsets_.push_back(width_);
            width_ += l->width();
        }
    }
    LawState root() const {
        LawState s;
        for (const auto* l : laws_) l->append_root(s);
        return s;
    }
    LawState step(const LawState& st, int bit) const {
        LawState s;
        s.reserve(width_);
        StateView v(st);
        for (std::size_t k = 0; k < laws_.size(); ++k) laws_[k]->append_step(v.subspan(offsets_[k], laws_[k]->width()), bit, s);
        return s;
    }
    StateView part(const LawState& st, std::size_t k) const {
        return StateView(st).subspan(offsets_[k], laws_[k]->width());
    }
    Dyadic value(const LawState& st, std::size_t k) const { return laws_[k]->value(part(st, k)); }

private:
    std::vector<const MeasureLaw*> laws_;
    std::vector<std::size_t> offsets_;
    std::size_t width_ = 0;
};

}  // namespace mlearn
