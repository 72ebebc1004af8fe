#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "nlexit/errors.hpp"

namespace nlexit {

/// Half-open/open conventions are not tracked: endpoints have measure zero
/// and every computed quantity is an integral.
template <typename Scalar = double>
struct Interval {
    Scalar lo;
    Scalar hi;

    Scalar length() const { return hi - lo; }
    bool contains(Scalar x) const { return x >= lo && x <= hi; }
    friend bool operator==(const Interval&, const Interval&) = default;
};

/// Finite union of disjoint intervals, kept sorted and merged: no two
/// stored intervals overlap or touch.
template <typename Scalar = double>
class IntervalSet {
public:
    using value_type = Interval<Scalar>;

    IntervalSet() = default;

    /// Accepts overlapping or unsorted input and normalizes it.
    explicit IntervalSet(std::vector<Interval<Scalar>> pieces) : pieces_(std::move(pieces)) {
        for (const auto& p : pieces_)
            if (!(p.lo < p.hi))
                throw ConfigError("interval [" + to_string(p.lo) + ", " + to_string(p.hi) +
                                  "] is empty or reversed");
        normalize();
    }

    IntervalSet(std::initializer_list<Interval<Scalar>> pieces)
        : IntervalSet(std::vector<Interval<Scalar>>(pieces)) {}

    static IntervalSet real_line() {
        constexpr Scalar inf = std::numeric_limits<Scalar>::infinity();
        return IntervalSet({{-inf, inf}});
    }

    const std::vector<Interval<Scalar>>& pieces() const { return pieces_; }
    std::size_t size() const { return pieces_.size(); }
    bool empty() const { return pieces_.empty(); }
    auto begin() const { return pieces_.begin(); }
    auto end() const { return pieces_.end(); }
    const Interval<Scalar>& operator[](std::size_t i) const { return pieces_[i]; }

    Scalar measure() const {
        Scalar total = 0;
        for (const auto& p : pieces_) total += p.length();
        return total;
    }

    bool contains(Scalar x) const {
        auto it = std::upper_bound(pieces_.begin(), pieces_.end(), x,
                                   [](Scalar v, const Interval<Scalar>& p) { return v < p.lo; });
        if (it == pieces_.begin()) return false;
        return std::prev(it)->contains(x);
    }

    /// Distance from x to the set (zero inside).
    Scalar distance(Scalar x) const {
        Scalar best = std::numeric_limits<Scalar>::infinity();
        for (const auto& p : pieces_) {
            if (p.contains(x)) return Scalar(0);
            best = std::min(best, std::min(std::abs(x - p.lo), std::abs(x - p.hi)));
        }
        return best;
    }

    IntervalSet unite(const IntervalSet& other) const {
        std::vector<Interval<Scalar>> all = pieces_;
        all.insert(all.end(), other.pieces_.begin(), other.pieces_.end());
        IntervalSet out;
        out.pieces_ = std::move(all);
        out.normalize();
        return out;
    }

    IntervalSet intersect(const IntervalSet& other) const {
        IntervalSet out;
        std::size_t i = 0, j = 0;
        while (i < pieces_.size() && j < other.pieces_.size()) {
            const Scalar lo = std::max(pieces_[i].lo, other.pieces_[j].lo);
            const Scalar hi = std::min(pieces_[i].hi, other.pieces_[j].hi);
            if (lo < hi) out.pieces_.push_back({lo, hi});
            if (pieces_[i].hi < other.pieces_[j].hi) ++i; else ++j;
        }
        out.normalize();
        return out;
    }

    IntervalSet intersect(const Interval<Scalar>& window) const {
        IntervalSet w;
        if (window.lo < window.hi) w.pieces_.push_back(window);
        return intersect(w);
    }

    /// Set difference; zero-length remnants are dropped.
    IntervalSet subtract(const IntervalSet& other) const {
        IntervalSet out;
        for (const auto& p : pieces_) {
            Scalar cursor = p.lo;
            for (const auto& q : other.pieces_) {
                if (q.hi <= cursor) continue;
                if (q.lo >= p.hi) break;
                if (q.lo > cursor) out.pieces_.push_back({cursor, q.lo});
                cursor = std::max(cursor, q.hi);
                if (cursor >= p.hi) break;
            }
            if (cursor < p.hi) out.pieces_.push_back({cursor, p.hi});
        }
        out.normalize();
        return out;
    }

    /// Minkowski sum with the open ball of radius r.
    IntervalSet dilate(Scalar r) const {
        std::vector<Interval<Scalar>> grown;
        grown.reserve(pieces_.size());
        for (const auto& p : pieces_) grown.push_back({p.lo - r, p.hi + r});
        IntervalSet out;
        out.pieces_ = std::move(grown);
        out.normalize();
        return out;
    }

    /// True when every piece of *this lies inside `other` up to `tol`.
    bool is_subset_of(const IntervalSet& other, Scalar tol = Scalar(0)) const {
        return first_uncovered(other, tol) == nullptr;
    }

    /// First piece of *this not covered by `other` (nullptr when covered).
    const Interval<Scalar>* first_uncovered(const IntervalSet& other, Scalar tol = Scalar(0)) const {
        for (const auto& p : pieces_) {
            bool covered = false;
            for (const auto& q : other.pieces_)
                if (p.lo >= q.lo - tol && p.hi <= q.hi + tol) covered = true;
            if (!covered) return &p;
        }
        return nullptr;
    }

    friend bool operator==(const IntervalSet&, const IntervalSet&) = default;

    friend std::ostream& operator<<(std::ostream& os, const IntervalSet& s) {
        os << '{';
        for (std::size_t i = 0; i < s.pieces_.size(); ++i)
            os << (i ? ", " : "") << '[' << s.pieces_[i].lo << ", " << s.pieces_[i].hi << ']';
        return os << '}';
    }

private:
    static std::string to_string(Scalar v) {
        std::ostringstream os;
        os << v;
        return os.str();
    }

    // Sort by left endpoint and sweep; touching pieces merge.
    void normalize() {
        std::sort(pieces_.begin(), pieces_.end(),
                  [](const auto& a, const auto& b) { return a.lo < b.lo; });
        std::vector<Interval<Scalar>> merged;
        for (const auto& p : pieces_) {
            if (!(p.lo < p.hi)) continue;
            if (!merged.empty() && p.lo <= merged.back().hi)
                merged.back().hi = std::max(merged.back().hi, p.hi);
            else
                merged.push_back(p);
        }
        pieces_ = std::move(merged);
    }

    std::vector<Interval<Scalar>> pieces_;
};

}  // namespace nlexit
