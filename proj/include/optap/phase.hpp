#pragma once

#include <array>
#include <complex>
#include <cstdint>
#include <initializer_list>
#include <stdexcept>
#include <string>
#include <string_view>

namespace optap {

using Complex = std::complex<double>;

enum class Phase : std::uint8_t { a = 0, b = 1, c = 2 };

inline constexpr std::array<Phase, 3> all_phases{Phase::a, Phase::b, Phase::c};

constexpr int index_of(Phase p) noexcept { return static_cast<int>(p); }

constexpr char phase_char(Phase p) noexcept { return "abc"[index_of(p)]; }

inline Phase phase_from_char(char ch) {
    switch (ch) {
    case 'a': case 'A': return Phase::a;
    case 'b': case 'B': return Phase::b;
    case 'c': case 'C': return Phase::c;
    default: throw std::invalid_argument(std::string("unknown phase '") + ch + "'");
    }
}

/// Subset of {a, b, c}. Iteration always runs a, b, c in order.
class PhaseMask {
public:
    constexpr PhaseMask() = default;
    constexpr PhaseMask(std::initializer_list<Phase> phases) {
        for (Phase p : phases) bits_ |= bit(p);
    }

    static constexpr PhaseMask all() { return from_bits(0b111); }
    static constexpr PhaseMask from_bits(std::uint8_t bits) {
        PhaseMask m;
        m.bits_ = bits & 0b111;
        return m;
    }
    static PhaseMask parse(std::string_view text) {
        PhaseMask m;
        for (char ch : text) {
            const Phase p = phase_from_char(ch);
            if (m.contains(p)) throw std::invalid_argument("duplicate phase in '" + std::string(text) + "'");
            m.bits_ |= bit(p);
        }
        return m;
    }

    constexpr bool contains(Phase p) const noexcept { return (bits_ & bit(p)) != 0; }
    constexpr bool empty() const noexcept { return bits_ == 0; }
    constexpr int size() const noexcept { return (bits_ & 1) + ((bits_ >> 1) & 1) + ((bits_ >> 2) & 1); }
    constexpr std::uint8_t bits() const noexcept { return bits_; }

    constexpr bool subset_of(PhaseMask other) const noexcept { return (bits_ & ~other.bits_) == 0; }
    constexpr PhaseMask operator&(PhaseMask o) const noexcept { return from_bits(bits_ & o.bits_); }
    constexpr PhaseMask operator|(PhaseMask o) const noexcept { return from_bits(bits_ | o.bits_); }
    constexpr bool operator==(const PhaseMask&) const = default;

    /// Position of `p` among the present phases ("ac": a -> 0, c -> 1).
    int rank(Phase p) const {
        if (!contains(p)) throw std::out_of_range(std::string("phase ") + phase_char(p) + " not in mask " + str());
        int r = 0;
        for (int i = 0; i < index_of(p); ++i) r += (bits_ >> i) & 1;
        return r;
    }

    std::string str() const {
        std::string s;
        for (Phase p : all_phases)
            if (contains(p)) s += phase_char(p);
        return s;
    }

    class iterator {
    public:
        constexpr iterator(std::uint8_t bits, int pos) : bits_(bits), pos_(pos) { skip(); }
        constexpr Phase operator*() const { return static_cast<Phase>(pos_); }
        constexpr iterator& operator++() { ++pos_; skip(); return *this; }
        constexpr bool operator==(const iterator&) const = default;

    private:
        constexpr void skip() { while (pos_ < 3 && ((bits_ >> pos_) & 1) == 0) ++pos_; }
        std::uint8_t bits_;
        int pos_;
    };
    constexpr iterator begin() const { return {bits_, 0}; }
    constexpr iterator end() const { return {bits_, 3}; }

private:
    static constexpr std::uint8_t bit(Phase p) { return static_cast<std::uint8_t>(1u << index_of(p)); }
    std::uint8_t bits_ = 0;
};

/// One value per present phase. Access to an absent phase throws.
template <typename T>
class PhaseVector {
public:
    PhaseVector() = default;
    explicit PhaseVector(PhaseMask mask, T fill = T{}) : mask_(mask) { values_.fill(fill); }

    PhaseMask mask() const noexcept { return mask_; }

    T& at(Phase p) { check(p); return values_[index_of(p)]; }
    const T& at(Phase p) const { check(p); return values_[index_of(p)]; }
    T& operator[](Phase p) { return at(p); }
    const T& operator[](Phase p) const { return at(p); }

    /// Value for `p`, or `fallback` when the phase is absent.
    T get_or(Phase p, T fallback) const { return mask_.contains(p) ? values_[index_of(p)] : fallback; }

    bool operator==(const PhaseVector& o) const {
        if (mask_ != o.mask_) return false;
        for (Phase p : mask_)
            if (!(values_[index_of(p)] == o.values_[index_of(p)])) return false;
        return true;
    }

private:
    void check(Phase p) const {
        if (!mask_.contains(p))
            throw std::out_of_range(std::string("phase ") + phase_char(p) + " absent from " + mask_.str());
    }
    PhaseMask mask_;
    std::array<T, 3> values_{};
};

using ComplexPhaseVector = PhaseVector<Complex>;
using RealPhaseVector = PhaseVector<double>;

/// Square complex matrix over the phases of `mask`.
class PhaseMatrix {
public:
    PhaseMatrix() = default;
    explicit PhaseMatrix(PhaseMask mask) : mask_(mask) {}

    static PhaseMatrix diagonal(PhaseMask mask, Complex value) {
        PhaseMatrix m(mask);
        for (Phase p : mask) m(p, p) = value;
        return m;
    }

    PhaseMask mask() const noexcept { return mask_; }

    Complex& operator()(Phase row, Phase col) { check(row, col); return entries_[index_of(row)][index_of(col)]; }
    const Complex& operator()(Phase row, Phase col) const {
        check(row, col);
        return entries_[index_of(row)][index_of(col)];
    }

    bool is_symmetric(double tol = 0.0) const {
        for (Phase r : mask_)
            for (Phase c : mask_)
                if (std::abs((*this)(r, c) - (*this)(c, r)) > tol) return false;
        return true;
    }

    bool operator==(const PhaseMatrix& o) const {
        if (mask_ != o.mask_) return false;
        for (Phase r : mask_)
            for (Phase c : mask_)
                if ((*this)(r, c) != o(r, c)) return false;
        return true;
    }

private:
    void check(Phase r, Phase c) const {
        if (!mask_.contains(r) || !mask_.contains(c))
            throw std::out_of_range(std::string("entry (") + phase_char(r) + "," + phase_char(c) + ") absent from " +
                                    mask_.str());
    }
    PhaseMask mask_;
    std::array<std::array<Complex, 3>, 3> entries_{};
};

} // namespace optap
