#pragma once

#include <boost/multiprecision/cpp_int.hpp>

#include <cctype>
#include <compare>
#include <cstdint>
#include <functional>
#include <limits>
#include <ostream>
#include <string>

#include "json.hpp"
#include "mlearn/errors.hpp"

namespace mlearn {

using BigInt = boost::multiprecision::cpp_int;

/// Exact value num / 2^exp, kept canonical: num odd, or num == 0 and exp == 0.
class Dyadic {
public:
    Dyadic() = default;
    Dyadic(std::int64_t n) : num_(n) {}  // NOLINT: integers convert implicitly

    static Dyadic from_parts(BigInt num, std::int64_t exp) {
        Dyadic d;
        if (exp < 0) {
            num = shl(num, static_cast<std::uint64_t>(-exp));
            exp = 0;
        }
        d.num_ = std::move(num);
        d.exp_ = static_cast<std::uint64_t>(exp);
        d.normalize();
        return d;
    }

    /// 2^-k (k may be negative).
    static Dyadic pow2(std::int64_t k) { return from_parts(BigInt(1), k); }

    const BigInt& num() const { return num_; }
    std::uint64_t exp() const { return exp_; }

    bool is_zero() const { return num_ == 0; }
    int sign() const { return num_.sign(); }

    Dyadic halve() const {
        if (is_zero()) return *this;
        Dyadic d = *this;
        ++d.exp_;
        return d;
    }

    Dyadic operator-() const {
        Dyadic d = *this;
        d.num_ = -d.num_;
        return d;
    }

    friend Dyadic operator+(const Dyadic& a, const Dyadic& b) {
        if (a.exp_ >= b.exp_) return from_parts(a.num_ + shl(b.num_, a.exp_ - b.exp_), a.exp_);
        return from_parts(shl(a.num_, b.exp_ - a.exp_) + b.num_, b.exp_);
    }
    friend Dyadic operator-(const Dyadic& a, const Dyadic& b) { return a + (-b); }
    friend Dyadic operator*(const Dyadic& a, const Dyadic& b) {
        if (a.is_zero() || b.is_zero()) return {};
        Dyadic d;
        d.num_ = a.num_ * b.num_;  // odd * odd stays odd
        d.exp_ = a.exp_ + b.exp_;
        return d;
    }
    Dyadic& operator+=(const Dyadic& o) { return *this = *this + o; }
    Dyadic& operator-=(const Dyadic& o) { return *this = *this - o; }
    Dyadic& operator*=(const Dyadic& o) { return *this = *this * o; }

    friend bool operator==(const Dyadic& a, const Dyadic& b) {
        return a.exp_ == b.exp_ && a.num_ == b.num_;
    }
    friend std::strong_ordering operator<=>(const Dyadic& a, const Dyadic& b) {
        if (a.sign() != b.sign()) return a.sign() <=> b.sign();
        BigInt l = a.num_, r = b.num_;
        if (a.exp_ > b.exp_) r = shl(r, a.exp_ - b.exp_);
        else if (b.exp_ > a.exp_) l = shl(l, b.exp_ - a.exp_);
        if (l < r) return std::strong_ordering::less;
        if (l > r) return std::strong_ordering::greater;
        return std::strong_ordering::equal;
    }

    /// ceil(-log2 v) for v > 0, exact by bit inspection.
    std::int64_t ceil_neg_log2() const {
        if (sign() <= 0) throw Error("ceil_neg_log2 of a non-positive dyadic");
        // 2^top <= num < 2^(top+1), so -log2 v lies in (exp-top-1, exp-top].
        auto top = static_cast<std::int64_t>(boost::multiprecision::msb(num_));
        return static_cast<std::int64_t>(exp_) - top;
    }

    std::string to_string() const {
        if (exp_ == 0) return num_.str();
        BigInt den = BigInt(1) << exp_;
        return num_.str() + "/" + den.str();
    }

    nlohmann::json to_json() const {
        nlohmann::json j;
        if (num_ >= std::numeric_limits<std::int64_t>::min() &&
            num_ <= std::numeric_limits<std::int64_t>::max())
            j["num"] = static_cast<std::int64_t>(num_);
        else
            j["num"] = num_.str();
        j["exp"] = exp_;
        return j;
    }

    static Dyadic from_json(const nlohmann::json& j) {
        if (!j.is_object() || !j.contains("num") || !j.contains("exp"))
            throw ScenarioError("dyadic must be an object {\"num\", \"exp\"}: " + j.dump());
        const auto& e = j.at("exp");
        if (!e.is_number_integer() || e.get<std::int64_t>() < 0)
            throw ScenarioError("dyadic exponent must be a non-negative integer: " + j.dump());
        const auto& n = j.at("num");
        BigInt num;
        if (n.is_number_integer()) {
            num = n.get<std::int64_t>();
        } else if (n.is_string()) {
            const auto s = n.get<std::string>();
            bool ok = !s.empty();
            for (std::size_t i = 0; i < s.size(); ++i)
                ok = ok && (std::isdigit(static_cast<unsigned char>(s[i])) || (i == 0 && s[i] == '-' && s.size() > 1));
            if (!ok) throw ScenarioError("dyadic numerator is not an integer: " + j.dump());
            num = BigInt(s);
        } else {
            throw ScenarioError("dyadic numerator is not an integer: " + j.dump());
        }
        return from_parts(std::move(num), e.get<std::int64_t>());
    }

    std::size_t hash() const {
        return std::hash<std::string>{}(num_.str()) ^ (std::hash<std::uint64_t>{}(exp_) << 1);
    }

private:
    void normalize() {
        if (num_ == 0) {
            exp_ = 0;
            return;
        }
        if (exp_ == 0) return;
        BigInt mag = boost::multiprecision::abs(num_);
        auto low = static_cast<std::uint64_t>(boost::multiprecision::lsb(mag));
        auto k = low < exp_ ? low : exp_;
        if (k == 0) return;
        mag >>= k;
        num_ = num_.sign() < 0 ? BigInt(-mag) : mag;
        exp_ -= k;
    }

    // Shift on the magnitude so negative values never hit implementation-defined shifts.
    static BigInt shl(const BigInt& x, std::uint64_t k) {
        if (k == 0 || x == 0) return x;
        if (x.sign() < 0) return -(BigInt(-x) << k);
        return x << k;
    }

    BigInt num_ = 0;
    std::uint64_t exp_ = 0;
};

inline std::ostream& operator<<(std::ostream& os, const Dyadic& d) { return os << d.to_string(); }

}  // namespace mlearn
