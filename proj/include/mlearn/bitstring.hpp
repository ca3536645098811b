#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include "mlearn/errors.hpp"

namespace mlearn {

/// Finite binary string; stored as '0'/'1' characters so it doubles as a map key.
class BitString {
public:
    BitString() = default;
    explicit BitString(std::string_view bits) : bits_(bits) {
        for (char c : bits_)
            if (c != '0' && c != '1') throw Error("not a binary string: \"" + bits_ + "\"");
    }

    static BitString zeros(std::size_t n) { return from_raw(std::string(n, '0')); }

    /// The n-th string of length len in lexicographic order (bit len-1 is the low bit).
    static BitString from_index(std::uint64_t index, std::size_t len) {
        std::string s(len, '0');
        for (std::size_t i = 0; i < len; ++i)
            if ((index >> (len - 1 - i)) & 1U) s[i] = '1';
        return from_raw(std::move(s));
    }

    std::size_t size() const { return bits_.size(); }
    bool empty() const { return bits_.empty(); }
    int operator[](std::size_t i) const { return bits_[i] == '1' ? 1 : 0; }
    const std::string& str() const { return bits_; }

    BitString prefix(std::size_t n) const { return from_raw(bits_.substr(0, n)); }
    BitString child(int bit) const {
        BitString c = *this;
        c.push_back(bit);
        return c;
    }
    void push_back(int bit) { bits_.push_back(bit ? '1' : '0'); }
    void pop_back() { bits_.pop_back(); }
    BitString operator+(const BitString& o) const { return from_raw(bits_ + o.bits_); }

    bool is_prefix_of(const BitString& o) const {
        return bits_.size() <= o.bits_.size() && o.bits_.compare(0, bits_.size(), bits_) == 0;
    }
    std::size_t ones() const {
        std::size_t n = 0;
        for (char c : bits_) n += c == '1';
        return n;
    }

    friend bool operator==(const BitString&, const BitString&) = default;
    friend auto operator<=>(const BitString& a, const BitString& b) {
        if (a.size() != b.size()) return a.size() <=> b.size();
        return a.bits_ <=> b.bits_;
    }

private:
    static BitString from_raw(std::string s) {
        BitString b;
        b.bits_ = std::move(s);
        return b;
    }
    std::string bits_;
};

/// All strings of length n in lexicographic order.
inline std::vector<BitString> strings_of_length(std::size_t n) {
    if (n >= 40) throw Error("refusing to enumerate 2^" + std::to_string(n) + " strings");
    std::vector<BitString> out;
    out.reserve(std::size_t{1} << n);
    for (std::uint64_t i = 0; i < (std::uint64_t{1} << n); ++i) out.push_back(BitString::from_index(i, n));
    return out;
}

/// True iff no member is a proper or improper prefix of another (duplicates fail).
inline bool is_prefix_free(std::vector<BitString> set) {
    std::sort(set.begin(), set.end(), [](const BitString& a, const BitString& b) { return a.str() < b.str(); });
    for (std::size_t i = 1; i < set.size(); ++i)
        if (set[i - 1].is_prefix_of(set[i])) return false;
    return true;
}

}  // namespace mlearn

template <>
struct std::hash<mlearn::BitString> {
    std::size_t operator()(const mlearn::BitString& b) const noexcept {
        return std::hash<std::string>{}(b.str());
    }
};
