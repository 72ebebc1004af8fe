#pragma once

#include <algorithm>
#include <cmath>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "nlexit/errors.hpp"
#include "nlexit/intervals.hpp"

namespace nlexit {

/// lambda-collar of omega: (union of B_lambda(x), x in omega) minus omega.
template <typename Scalar>
IntervalSet<Scalar> interaction_domain(const IntervalSet<Scalar>& omega, Scalar lambda) {
    if (!(lambda > 0)) throw ConfigError("interaction_domain: lambda must be > 0");
    return omega.dilate(lambda).subtract(omega);
}

enum class Region { interior, absorbing, reflective, outside };

inline const char* to_string(Region r) {
    switch (r) {
        case Region::interior: return "interior";
        case Region::absorbing: return "absorbing";
        case Region::reflective: return "reflective";
        default: return "outside";
    }
}

/// How the absorbing set is chosen inside the collar.
enum class AbsorbingChoice { full, empty, explicit_set };

/// Omega, its collar Omega_I, and the absorbing subset Omega_d of the collar.
template <typename Scalar = double>
class DomainPartition {
public:
    DomainPartition(IntervalSet<Scalar> omega, Scalar lambda, AbsorbingChoice choice,
                    IntervalSet<Scalar> omega_d = {})
        : omega_(std::move(omega)), lambda_(lambda) {
        if (omega_.empty()) throw ConfigError("domain omega must contain at least one interval");
        for (const auto& p : omega_)
            if (!std::isfinite(static_cast<double>(p.lo)) || !std::isfinite(static_cast<double>(p.hi)))
                throw ConfigError("domain omega must be bounded");
        omega_i_ = interaction_domain(omega_, lambda_);
        switch (choice) {
            case AbsorbingChoice::full: omega_d_ = omega_i_; break;
            case AbsorbingChoice::empty: break;
            case AbsorbingChoice::explicit_set: {
                const Scalar tol = Scalar(1e-12) * std::max(Scalar(1), omega_i_.measure());
                if (const auto* bad = omega_d.first_uncovered(omega_i_, tol)) {
                    std::ostringstream os;
                    os << "omega_d interval [" << bad->lo << ", " << bad->hi
                       << "] is not contained in the interaction domain " << omega_i_;
                    throw ConfigError(os.str());
                }
                omega_d_ = omega_d.intersect(omega_i_);
                break;
            }
        }
        reflective_ = omega_i_.subtract(omega_d_);
    }

    static DomainPartition full(IntervalSet<Scalar> omega, Scalar lambda) {
        return DomainPartition(std::move(omega), lambda, AbsorbingChoice::full);
    }
    static DomainPartition censored(IntervalSet<Scalar> omega, Scalar lambda) {
        return DomainPartition(std::move(omega), lambda, AbsorbingChoice::empty);
    }

    const IntervalSet<Scalar>& omega() const { return omega_; }
    const IntervalSet<Scalar>& omega_i() const { return omega_i_; }
    const IntervalSet<Scalar>& omega_d() const { return omega_d_; }
    /// Omega_I minus Omega_d: the part of the collar jumps are censored from.
    const IntervalSet<Scalar>& reflective() const { return reflective_; }
    Scalar lambda() const { return lambda_; }

    /// Omega united with Omega_d: the state space of the confined process.
    IntervalSet<Scalar> active() const { return omega_.unite(omega_d_); }

    /// Region containing x; boundary ties resolve toward omega, then omega_d.
    Region region_of(Scalar x) const {
        if (omega_.contains(x)) return Region::interior;
        if (omega_d_.contains(x)) return Region::absorbing;
        if (reflective_.contains(x)) return Region::reflective;
        return Region::outside;
    }

private:
    IntervalSet<Scalar> omega_;
    Scalar lambda_;
    IntervalSet<Scalar> omega_i_;
    IntervalSet<Scalar> omega_d_;
    IntervalSet<Scalar> reflective_;
};

/// Uniform-per-piece cell partition of omega united with its collar. Cells
/// never straddle region boundaries.
template <typename Scalar = double>
struct Grid {
    using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

    Scalar h;        // requested width
    Vector centers;  // increasing
    Vector widths;
    std::vector<Region> tags;

    Eigen::Index size() const { return centers.size(); }
    Scalar lower(Eigen::Index i) const { return centers[i] - widths[i] / 2; }
    Scalar upper(Eigen::Index i) const { return centers[i] + widths[i] / 2; }
    Scalar max_width() const { return widths.size() ? widths.maxCoeff() : Scalar(0); }

    std::size_t count(Region r) const { return std::size_t(std::count(tags.begin(), tags.end(), r)); }

    /// Index of the cell whose closed extent contains x, or -1.
    Eigen::Index locate(Scalar x) const {
        const Scalar* first = centers.data();
        const Scalar* last = first + centers.size();
        auto it = std::lower_bound(first, last, x);
        for (Eigen::Index i : {Eigen::Index(it - first) - 1, Eigen::Index(it - first)}) {
            if (i < 0 || i >= size()) continue;
            if (x >= lower(i) && x <= upper(i)) return i;
        }
        return -1;
    }
};

/// Cells per piece: round(length / h), raised if needed so that no cell is
/// wider than lambda / 4.
template <typename Scalar>
Grid<Scalar> build_grid(const DomainPartition<Scalar>& partition, Scalar h) {
    const Scalar lambda = partition.lambda();
    const Scalar max_h = lambda / 4;
    if (!(h > 0)) throw ConfigError("grid spacing h must be > 0");
    if (h > max_h * (1 + Scalar(1e-12))) {
        std::ostringstream os;
        os << "grid spacing h = " << h << " exceeds lambda/4 = " << max_h
           << " (at least four cells across the horizon are required)";
        throw ConfigError(os.str());
    }

    struct Piece {
        Interval<Scalar> span;
        Region tag;
    };
    std::vector<Piece> pieces;
    for (const auto& p : partition.omega()) pieces.push_back({p, Region::interior});
    for (const auto& p : partition.omega_d()) pieces.push_back({p, Region::absorbing});
    for (const auto& p : partition.reflective()) pieces.push_back({p, Region::reflective});
    std::sort(pieces.begin(), pieces.end(), [](const Piece& a, const Piece& b) { return a.span.lo < b.span.lo; });

    std::vector<Scalar> centers, widths;
    std::vector<Region> tags;
    for (const auto& piece : pieces) {
        const Scalar len = piece.span.length();
        long n = std::max(1L, std::lround(static_cast<double>(len / h)));
        n = std::max(n, static_cast<long>(std::ceil(static_cast<double>(len / max_h) - 1e-9)));
        const Scalar w = len / Scalar(n);
        for (long k = 0; k < n; ++k) {
            centers.push_back(piece.span.lo + (Scalar(k) + Scalar(0.5)) * w);
            widths.push_back(w);
            tags.push_back(piece.tag);
        }
    }

    Grid<Scalar> grid;
    grid.h = h;
    grid.centers = Eigen::Map<const typename Grid<Scalar>::Vector>(centers.data(), Eigen::Index(centers.size()));
    grid.widths = Eigen::Map<const typename Grid<Scalar>::Vector>(widths.data(), Eigen::Index(widths.size()));
    grid.tags = std::move(tags);
    return grid;
}

}  // namespace nlexit
