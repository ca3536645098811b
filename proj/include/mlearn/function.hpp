#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <string>
#include <vector>

#include "json.hpp"
#include "mlearn/errors.hpp"

namespace mlearn {

using Stage = std::uint64_t;

/// Saturation value; any computation that overflows pins here.
inline constexpr std::uint64_t kSaturated = std::numeric_limits<std::uint64_t>::max();

inline std::uint64_t sat_add(std::uint64_t a, std::uint64_t b) {
    return a > kSaturated - b ? kSaturated : a + b;
}
inline std::uint64_t sat_mul(std::uint64_t a, std::uint64_t b) {
    if (a == 0 || b == 0) return 0;
    return a > kSaturated / b ? kSaturated : a * b;
}
inline std::uint64_t sat_pow(std::uint64_t base, std::uint64_t e) {
    std::uint64_t r = 1;
    for (std::uint64_t i = 0; i < e; ++i) {
        r = sat_mul(r, base);
        if (r == kSaturated || r == 0 || (base == 1)) break;
    }
    return r;
}

/// Total function N -> N from a small whitelist of closed forms, with saturating arithmetic.
class IntFunction {
public:
    using Fn = std::function<std::uint64_t(std::uint64_t)>;

    IntFunction() : IntFunction(constant(0)) {}

    static IntFunction constant(std::uint64_t v) {
        return {{{"kind", "constant"}, {"value", v}}, [v](std::uint64_t) { return v; }};
    }

    /// sum_k coeffs[k] * n^k
    static IntFunction polynomial(std::vector<std::uint64_t> coeffs) {
        nlohmann::json spec = {{"kind", "polynomial"}, {"coeffs", coeffs}};
        return {std::move(spec), [c = std::move(coeffs)](std::uint64_t n) {
                    std::uint64_t r = 0;
                    for (auto it = c.rbegin(); it != c.rend(); ++it) r = sat_add(sat_mul(r, n), *it);
                    return r;
                }};
    }

    /// coef * base^n + offset
    static IntFunction exponential(std::uint64_t coef, std::uint64_t base, std::uint64_t offset) {
        nlohmann::json spec = {{"kind", "exponential"}, {"coef", coef}, {"base", base}, {"offset", offset}};
        return {std::move(spec), [=](std::uint64_t n) { return sat_add(sat_mul(coef, sat_pow(base, n)), offset); }};
    }

    /// Explicit values for n < size, then the tail function (if any).
    static IntFunction table(std::vector<std::uint64_t> values, std::shared_ptr<const IntFunction> tail = nullptr) {
        nlohmann::json spec = {{"kind", "table"}, {"values", values}};
        if (tail) spec["tail"] = tail->to_json();
        return {std::move(spec), [v = std::move(values), tail](std::uint64_t n) {
                    if (n < v.size()) return v[n];
                    if (!tail) throw Error("table function undefined at " + std::to_string(n));
                    return (*tail)(n);
                }};
    }

    /// Arbitrary computable function; the description is what gets serialized.
    static IntFunction custom(nlohmann::json description, Fn fn) { return {std::move(description), std::move(fn)}; }

    static IntFunction from_json(const nlohmann::json& j) {
        if (j.is_number_unsigned() || (j.is_number_integer() && j.get<std::int64_t>() >= 0))
            return constant(j.get<std::uint64_t>());
        if (!j.is_object() || !j.contains("kind")) throw ScenarioError("function must have a kind: " + j.dump());
        const auto kind = j.at("kind").get<std::string>();
        auto nat = [&](const char* key, std::uint64_t dflt) {
            if (!j.contains(key)) return dflt;
            const auto& v = j.at(key);
            if (!v.is_number_integer() || v.get<std::int64_t>() < 0)
                throw ScenarioError(std::string("function field '") + key + "' must be a natural number: " + j.dump());
            return v.get<std::uint64_t>();
        };
        auto nats = [&](const char* key) {
            if (!j.contains(key) || !j.at(key).is_array())
                throw ScenarioError(std::string("function needs array '") + key + "': " + j.dump());
            std::vector<std::uint64_t> out;
            for (const auto& v : j.at(key)) {
                if (!v.is_number_integer() || v.get<std::int64_t>() < 0)
                    throw ScenarioError("function table entries must be natural numbers: " + j.dump());
                out.push_back(v.get<std::uint64_t>());
            }
            return out;
        };
        if (kind == "constant") return constant(nat("value", 0));
        if (kind == "polynomial") return polynomial(nats("coeffs"));
        if (kind == "exponential") return exponential(nat("coef", 1), nat("base", 2), nat("offset", 0));
        if (kind == "table") {
            std::shared_ptr<const IntFunction> tail;
            if (j.contains("tail")) tail = std::make_shared<const IntFunction>(from_json(j.at("tail")));
            return table(nats("values"), tail);
        }
        throw ScenarioError("unknown function kind '" + kind + "'");
    }

    std::uint64_t operator()(std::uint64_t n) const { return fn_(n); }
    const nlohmann::json& to_json() const { return spec_; }

    /// f(n) < f(n+1) for all n < bound.
    bool strictly_increasing_below(std::uint64_t bound) const {
        for (std::uint64_t n = 0; n < bound; ++n)
            if (!((*this)(n) < (*this)(n + 1))) return false;
        return true;
    }

private:
    IntFunction(nlohmann::json spec, Fn fn) : spec_(std::move(spec)), fn_(std::move(fn)) {}

    nlohmann::json spec_;
    Fn fn_;
};

}  // namespace mlearn
