#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>
#include <utility>
#include <variant>
#include <vector>

#include "json.hpp"
#include "mlearn/bitstring.hpp"
#include "mlearn/dyadic.hpp"
#include "mlearn/registry.hpp"

namespace mlearn {

inline std::uint64_t floor_log2(std::uint64_t n) {
    std::uint64_t r = 0;
    while (n >>= 1) ++r;
    return r;
}
inline std::uint64_t ceil_log2(std::uint64_t n) { return n <= 1 ? 0 : floor_log2(n - 1) + 1; }

/// Elias delta codeword length for n >= 1.
inline std::uint64_t elias_delta_length(std::uint64_t n) {
    const auto l = floor_log2(n);
    return l + 2 * floor_log2(l + 1) + 1;
}

/// Prefix-free code for string lengths; sum over n of 2^-length(n) <= 1.
struct LengthCode {
    enum class Kind { elias_delta, flat };
    Kind kind = Kind::flat;
    std::uint64_t horizon = 512;  // flat: lengths below horizon share one codeword size

    std::uint64_t length(std::uint64_t n) const {
        if (kind == Kind::elias_delta) return elias_delta_length(n + 1);
        if (n < horizon) return ceil_log2(horizon) + 1;
        return 1 + elias_delta_length(n + 1);
    }

    nlohmann::json to_json() const {
        if (kind == Kind::elias_delta) return {{"kind", "elias-delta"}};
        return {{"kind", "flat"}, {"horizon", horizon}};
    }
    static LengthCode from_json(const nlohmann::json& j) {
        LengthCode c;
        const auto kind = j.value("kind", std::string("flat"));
        if (kind == "elias-delta") {
            c.kind = Kind::elias_delta;
        } else if (kind == "flat") {
            c.horizon = j.value("horizon", std::uint64_t{512});
            if (c.horizon == 0) throw ScenarioError("flat length code needs horizon >= 1");
        } else {
            throw ScenarioError("unknown length code '" + kind + "'");
        }
        return c;
    }
};

struct CompressionRequest {
    Stage stage;
    BitString sigma;
    std::uint64_t codelength;
    bool accepted;
};

/// Prefix-free machine given by its stage-ordered request log, with Kraft accounting.
class RequestLogMachine {
public:
    /// Accepts iff the weight stays <= 1; a rejected request leaves the state unchanged
    /// except for its log entry.
    bool request(const BitString& sigma, std::uint64_t codelength, Stage stage) {
        if (!log_.empty() && stage < log_.back().stage)
            throw Error("compression requests must arrive in stage order");
        const Dyadic w = Dyadic::pow2(static_cast<std::int64_t>(codelength));
        const bool ok = weight_ + w <= Dyadic(1);
        log_.push_back({stage, sigma, codelength, ok});
        if (!ok) return false;
        weight_ += w;
        auto& steps = best_[sigma.str()];
        if (steps.empty() || codelength < steps.back().second) steps.emplace_back(stage, codelength);
        return true;
    }

    /// K_M(σ)[s]: least accepted codelength for σ requested at a stage <= s.
    std::optional<std::uint64_t> complexity(const BitString& sigma, Stage s) const {
        auto it = best_.find(sigma.str());
        if (it == best_.end()) return std::nullopt;
        std::optional<std::uint64_t> k;
        for (const auto& [st, len] : it->second)
            if (st <= s) k = len;
        return k;
    }

    /// (stage, codelength) pairs where K_M(σ) drops, in stage order.
    const std::vector<std::pair<Stage, std::uint64_t>>* steps(const std::string& sigma) const {
        auto it = best_.find(sigma);
        return it == best_.end() ? nullptr : &it->second;
    }

    const Dyadic& weight() const { return weight_; }
    Dyadic weight_at(Stage s) const {
        Dyadic w;
        for (const auto& r : log_)
            if (r.accepted && r.stage <= s) w += Dyadic::pow2(static_cast<std::int64_t>(r.codelength));
        return w;
    }
    const std::vector<CompressionRequest>& log() const { return log_; }
    bool empty() const { return best_.empty(); }

private:
    std::vector<CompressionRequest> log_;
    Dyadic weight_;
    std::unordered_map<std::string, std::vector<std::pair<Stage, std::uint64_t>>> best_;
};

/// Shannon-Fano coder for a registry measure: σ gets ceil(-log μ_b(σ)) + ell(|σ|)
/// bits once μ_b is defined on |σ|. Within one length the codewords satisfy Kraft by
/// sum μ_b = 1; the length prefix makes the union prefix-free.
struct MeasureCoder {
    Index measure = 0;
    LengthCode length_code;

    std::optional<std::uint64_t> complexity(const MeasureRegistry& reg, const BitString& sigma, Stage s) const {
        auto v = reg.eval(measure, sigma, s);
        if (!v || v->sign() <= 0) return std::nullopt;
        return codelength(v->ceil_neg_log2(), sigma.size());
    }
    std::uint64_t codelength(std::int64_t neglog, std::size_t len) const {
        return static_cast<std::uint64_t>(std::max<std::int64_t>(neglog, 0)) + length_code.length(len);
    }
};

struct MachineSlot {
    std::string name;
    std::uint64_t constant = 1;
    std::variant<RequestLogMachine, MeasureCoder> impl;

    bool is_coder() const { return std::holds_alternative<MeasureCoder>(impl); }
    const MeasureCoder& coder() const { return std::get<MeasureCoder>(impl); }
    RequestLogMachine& log() { return std::get<RequestLogMachine>(impl); }
    const RequestLogMachine& log() const { return std::get<RequestLogMachine>(impl); }
};

/// K(σ)[s] = min over registered machines of K_M(σ)[s] + const_M, with sum 2^-const <= 1.
class UniversalMachine {
public:
    std::size_t add_request_machine(std::string name, std::uint64_t constant) {
        return add({std::move(name), constant, RequestLogMachine{}});
    }
    std::size_t add_coder(std::string name, std::uint64_t constant, Index measure, LengthCode code = {}) {
        return add({std::move(name), constant, MeasureCoder{measure, code}});
    }

    std::size_t size() const { return slots_.size(); }
    const MachineSlot& slot(std::size_t k) const { return slots_.at(k); }
    MachineSlot& slot(std::size_t k) { return slots_.at(k); }
    const Dyadic& constant_weight() const { return constant_weight_; }

    std::optional<std::size_t> find(const std::string& name) const {
        for (std::size_t k = 0; k < slots_.size(); ++k)
            if (slots_[k].name == name) return k;
        return std::nullopt;
    }
    RequestLogMachine& requests(const std::string& name) {
        auto k = find(name);
        if (!k || slots_[*k].is_coder()) throw Error("no request machine named '" + name + "'");
        return slots_[*k].log();
    }

    std::optional<std::uint64_t> K(const MeasureRegistry& reg, const BitString& sigma, Stage s) const {
        std::optional<std::uint64_t> best;
        for (const auto& m : slots_) {
            auto k = m.is_coder() ? m.coder().complexity(reg, sigma, s) : m.log().complexity(sigma, s);
            if (k) {
                auto total = sat_add(*k, m.constant);
                if (!best || total < *best) best = total;
            }
        }
        return best;
    }

    /// One JSON object per logged request, machines in registration order.
    std::vector<nlohmann::json> request_log_lines() const {
        std::vector<nlohmann::json> out;
        for (const auto& m : slots_) {
            if (m.is_coder()) continue;
            for (const auto& r : m.log().log())
                out.push_back({{"machine", m.name},
                               {"stage", r.stage},
                               {"sigma", r.sigma.str()},
                               {"codelength", r.codelength},
                               {"accepted", r.accepted}});
        }
        return out;
    }

    /// Re-issue logged requests into this machine's request logs.
    void replay(const std::vector<nlohmann::json>& lines) {
        for (const auto& l : lines) {
            auto& m = requests(l.at("machine").get<std::string>());
            bool ok = m.request(BitString(l.at("sigma").get<std::string>()), l.at("codelength").get<std::uint64_t>(),
                                l.at("stage").get<Stage>());
            if (ok != l.at("accepted").get<bool>()) throw InvariantViolation("request log replay diverged");
        }
    }

private:
    std::size_t add(MachineSlot m) {
        if (m.constant == 0) throw ScenarioError("machine '" + m.name + "': coding constant must be positive");
        if (find(m.name)) throw ScenarioError("machine '" + m.name + "' declared twice");
        Dyadic w = constant_weight_ + Dyadic::pow2(static_cast<std::int64_t>(m.constant));
        if (w > Dyadic(1))
            throw ScenarioError("machines: coding constants violate Kraft (sum 2^-const = " + w.to_string() +
                                " > 1) at machine '" + m.name + "'");
        constant_weight_ = w;
        slots_.push_back(std::move(m));
        return slots_.size() - 1;
    }

    std::vector<MachineSlot> slots_;
    Dyadic constant_weight_;
};

}  // namespace mlearn
