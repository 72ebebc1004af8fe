#pragma once

#include <algorithm>
#include <cmath>
#include <random>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/SparseCore>

#include "nlexit/errors.hpp"
#include "nlexit/geometry.hpp"
#include "nlexit/kernel.hpp"
#include "nlexit/parallel.hpp"

namespace nlexit {

/// Discrete forward (a_star) and backward (a_gen) operators on the cells of
/// omega united with omega_d ("active" cells). Rows of absorbing cells are
/// identity rows; interior rows carry the censored master equation.
///
/// With W(i, j) the rate from active cell i into active cell j and H the
/// diagonal of cell widths:
///   a_gen(i, j)  = W(i, j)                      (i != j, i interior)
///   a_star(i, j) = W(j, i) h_j / h_i            (i != j, i interior)
///   a_gen(i, i)  = a_star(i, i) = -sum_j W(i, j)
/// so that H a_star = (H a_gen)^T on the interior block for any kernel.
template <typename Scalar = double>
class DiscreteOperator {
public:
    using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
    using SparseMatrix = Eigen::SparseMatrix<Scalar>;
    using RowMajorMatrix = Eigen::SparseMatrix<Scalar, Eigen::RowMajor>;

    std::vector<Eigen::Index> cells;      // grid index of each active unknown
    Vector centers;                       // active cell centers
    Vector widths;                        // active cell widths
    std::vector<Region> tags;             // interior or absorbing
    std::vector<Eigen::Index> interior;   // active positions of omega cells
    std::vector<Eigen::Index> absorbing;  // active positions of omega_d cells

    RowMajorMatrix weights;  // W, zero diagonal
    SparseMatrix a_star;
    SparseMatrix a_gen;
    SparseMatrix flux_to_d;  // absorbing x active: net absorption-flux density per omega_d cell
    Vector exit_rate;        // per active cell: rate of jumping into omega_d
    bool symmetric_kernel = true;

    Eigen::Index size() const { return centers.size(); }
    Eigen::Index interior_size() const { return Eigen::Index(interior.size()); }

    /// interior rows/cols of an active-sized matrix
    SparseMatrix interior_block(const SparseMatrix& m) const {
        const SparseMatrix p = selector();
        return SparseMatrix(p * m * p.transpose());
    }

    /// Active vector from an interior one (zero on omega_d).
    Vector prolong(const Vector& interior_values) const {
        Vector out = Vector::Zero(size());
        for (std::size_t k = 0; k < interior.size(); ++k) out[interior[k]] = interior_values[Eigen::Index(k)];
        return out;
    }

    Vector restrict_to_interior(const Vector& active_values) const {
        Vector out(interior_size());
        for (std::size_t k = 0; k < interior.size(); ++k) out[Eigen::Index(k)] = active_values[interior[k]];
        return out;
    }

    Vector interior_widths() const { return restrict_to_interior(widths); }

    /// Probability in omega: sum of u_i h_i over interior cells.
    Scalar mass_in_omega(const Vector& u) const {
        Scalar s = 0;
        for (Eigen::Index i : interior) s += u[i] * widths[i];
        return s;
    }

private:
    SparseMatrix selector() const {
        std::vector<Eigen::Triplet<Scalar>> t;
        t.reserve(interior.size());
        for (std::size_t k = 0; k < interior.size(); ++k) t.emplace_back(Eigen::Index(k), interior[k], Scalar(1));
        SparseMatrix p(interior_size(), size());
        p.setFromTriplets(t.begin(), t.end());
        return p;
    }
};

namespace detail {

/// Neumaier summation.
template <typename Scalar>
class CompensatedSum {
public:
    void add(Scalar v) {
        const Scalar t = sum_ + v;
        if (std::abs(sum_) >= std::abs(v))
            carry_ += (sum_ - t) + v;
        else
            carry_ += (v - t) + sum_;
        sum_ = t;
    }
    Scalar value() const { return sum_ + carry_; }

private:
    Scalar sum_ = 0;
    Scalar carry_ = 0;
};

}  // namespace detail

/// Midpoint-collocation assembly of the censored master equation on the grid.
/// Jumps into the reflective part of the collar are excluded from both gain
/// and loss. Kernels that prefer cell integrals use exact antiderivatives
/// over each target cell instead of the midpoint value.
template <typename Scalar>
DiscreteOperator<Scalar> assemble(const JumpKernel<Scalar>& kernel, const Grid<Scalar>& grid,
                                  const DomainPartition<Scalar>& partition, unsigned threads = 1) {
    using Op = DiscreteOperator<Scalar>;
    using Triplet = Eigen::Triplet<Scalar>;
    const Scalar lambda = partition.lambda();
    if (std::abs(kernel.horizon() - lambda) > Scalar(1e-12) * lambda)
        throw ConfigError("kernel horizon does not match the partition's lambda");

    Op op;
    op.symmetric_kernel = kernel.symmetric();
    for (Eigen::Index g = 0; g < grid.size(); ++g) {
        if (grid.tags[std::size_t(g)] == Region::interior || grid.tags[std::size_t(g)] == Region::absorbing) {
            const auto pos = Eigen::Index(op.cells.size());
            op.cells.push_back(g);
            op.tags.push_back(grid.tags[std::size_t(g)]);
            (grid.tags[std::size_t(g)] == Region::interior ? op.interior : op.absorbing).push_back(pos);
        }
    }
    const Eigen::Index n = Eigen::Index(op.cells.size());
    op.centers.resize(n);
    op.widths.resize(n);
    for (Eigen::Index k = 0; k < n; ++k) {
        op.centers[k] = grid.centers[op.cells[std::size_t(k)]];
        op.widths[k] = grid.widths[op.cells[std::size_t(k)]];
    }

    // Row-local weights; fixed summation order keeps results independent of threads.
    const Scalar reach = lambda + (n ? op.widths.maxCoeff() : Scalar(0));
    const bool cell_integrals = kernel.prefers_cell_integrals();
    std::vector<std::vector<std::pair<Eigen::Index, Scalar>>> rows(static_cast<std::size_t>(n));
    parallel_for(std::size_t(n), threads, [&](std::size_t row) {
        const auto i = Eigen::Index(row);
        const Scalar xi = op.centers[i];
        const Scalar* first = op.centers.data();
        const Eigen::Index j0 = Eigen::Index(std::lower_bound(first, first + n, xi - reach) - first);
        const Eigen::Index j1 = Eigen::Index(std::upper_bound(first, first + n, xi + reach) - first);
        auto& out = rows[row];
        for (Eigen::Index j = j0; j < j1; ++j) {
            if (j == i) continue;
            const Scalar xj = op.centers[j];
            const Scalar hj = op.widths[j];
            Scalar w;
            if (cell_integrals)
                w = kernel.mass(xi, xj - hj / 2, xj + hj / 2);
            else
                w = kernel(xi, xj) * hj;
            if (w != Scalar(0)) out.emplace_back(j, w);
        }
    });

    // Loss rates are compensated sums: the diagonal must cancel its column to
    // the last bit, or long time integrations drift in mass.
    std::vector<Triplet> w_trip, gen_trip, star_trip, flux_trip;
    std::vector<Scalar> loss(std::size_t(n), Scalar(0));
    op.exit_rate = Op::Vector::Zero(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        detail::CompensatedSum<Scalar> total, exits;
        for (const auto& [j, w] : rows[std::size_t(i)]) {
            w_trip.emplace_back(i, j, w);
            total.add(w);
            if (op.tags[std::size_t(j)] == Region::absorbing) exits.add(w);
        }
        loss[std::size_t(i)] = total.value();
        op.exit_rate[i] = exits.value();
    }
    op.weights.resize(n, n);
    op.weights.setFromTriplets(w_trip.begin(), w_trip.end());

    std::vector<Eigen::Index> absorbing_slot(std::size_t(n), -1);
    for (std::size_t k = 0; k < op.absorbing.size(); ++k) absorbing_slot[std::size_t(op.absorbing[k])] = Eigen::Index(k);

    for (Eigen::Index i = 0; i < n; ++i) {
        const bool interior_row = op.tags[std::size_t(i)] == Region::interior;
        if (interior_row) {
            gen_trip.emplace_back(i, i, -loss[std::size_t(i)]);
            star_trip.emplace_back(i, i, -loss[std::size_t(i)]);
        } else {
            gen_trip.emplace_back(i, i, Scalar(1));
            star_trip.emplace_back(i, i, Scalar(1));
            // Net flux density into this omega_d cell: its own outflow to omega.
            Scalar back = 0;
            for (const auto& [j, w] : rows[std::size_t(i)])
                if (op.tags[std::size_t(j)] == Region::interior) back += w;
            if (back != Scalar(0)) flux_trip.emplace_back(absorbing_slot[std::size_t(i)], i, -back);
        }
        for (const auto& [j, w] : rows[std::size_t(i)]) {
            if (interior_row) gen_trip.emplace_back(i, j, w);
            // Flow from i into j seen from row j.
            const Scalar scaled = w * op.widths[i] / op.widths[j];
            if (op.tags[std::size_t(j)] == Region::interior)
                star_trip.emplace_back(j, i, scaled);
            else if (interior_row)
                flux_trip.emplace_back(absorbing_slot[std::size_t(j)], i, scaled);
        }
    }
    op.a_gen.resize(n, n);
    op.a_gen.setFromTriplets(gen_trip.begin(), gen_trip.end());
    op.a_star.resize(n, n);
    op.a_star.setFromTriplets(star_trip.begin(), star_trip.end());
    op.flux_to_d.resize(Eigen::Index(op.absorbing.size()), n);
    op.flux_to_d.setFromTriplets(flux_trip.begin(), flux_trip.end());
    return op;
}

// ---------------------------------------------------------------------------
// Discrete nonlocal-calculus identities
// ---------------------------------------------------------------------------

namespace detail {

template <typename Scalar>
Scalar max_abs(const Eigen::SparseMatrix<Scalar>& m) {
    Scalar best = 0;
    for (Eigen::Index k = 0; k < m.outerSize(); ++k)
        for (typename Eigen::SparseMatrix<Scalar>::InnerIterator it(m, k); it; ++it)
            best = std::max(best, std::abs(it.value()));
    return best;
}

template <typename Scalar>
Scalar max_row_sum(const Eigen::SparseMatrix<Scalar>& m) {
    Eigen::Matrix<Scalar, Eigen::Dynamic, 1> sums = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>::Zero(m.rows());
    for (Eigen::Index k = 0; k < m.outerSize(); ++k)
        for (typename Eigen::SparseMatrix<Scalar>::InnerIterator it(m, k); it; ++it)
            sums[it.row()] += std::abs(it.value());
    return sums.size() ? sums.maxCoeff() : Scalar(0);
}

template <typename Scalar>
Scalar ratio(Scalar num, Scalar den) {
    return den > 0 ? num / den : (num > 0 ? std::numeric_limits<Scalar>::infinity() : Scalar(0));
}

}  // namespace detail

/// ||A - A^T||_max / ||A||_max on the interior block of a_gen.
template <typename Scalar>
Scalar symmetry_defect(const DiscreteOperator<Scalar>& op) {
    const Eigen::SparseMatrix<Scalar> a = op.interior_block(op.a_gen);
    const Eigen::SparseMatrix<Scalar> d = a - Eigen::SparseMatrix<Scalar>(a.transpose());
    return detail::ratio(detail::max_abs(d), detail::max_abs(a));
}

/// ||A 1||_inf over interior rows relative to ||A||_max.
template <typename Scalar>
Scalar constant_annihilation_defect(const DiscreteOperator<Scalar>& op) {
    using Vector = typename DiscreteOperator<Scalar>::Vector;
    const Vector r = op.a_gen * Vector::Ones(op.size());
    Scalar worst = 0;
    for (Eigen::Index i : op.interior) worst = std::max(worst, std::abs(r[i]));
    return detail::ratio(worst, detail::max_abs(op.interior_block(op.a_gen)));
}

template <typename Scalar = double>
struct AdjointReport {
    Scalar max_discrepancy;  // max |<v, A*u>_H - <A v, u>_H| / (|u|_H |v|_H)
    Scalar operator_norm;    // max absolute row sum of the interior block
    Scalar relative;         // max_discrepancy / operator_norm
};

/// Weighted adjointness of a_star and a_gen on random vectors supported on
/// omega. Holds for asymmetric kernels through the weighted transpose.
template <typename Scalar, typename Gen>
AdjointReport<Scalar> adjoint_check(const DiscreteOperator<Scalar>& op, int trials, Gen& gen) {
    using Vector = typename DiscreteOperator<Scalar>::Vector;
    std::normal_distribution<double> normal(0.0, 1.0);
    const Vector h = op.widths;
    Scalar worst = 0;
    for (int t = 0; t < trials; ++t) {
        Vector ui(op.interior_size()), vi(op.interior_size());
        for (Eigen::Index k = 0; k < ui.size(); ++k) ui[k] = Scalar(normal(gen));
        for (Eigen::Index k = 0; k < vi.size(); ++k) vi[k] = Scalar(normal(gen));
        const Vector u = op.prolong(ui), v = op.prolong(vi);
        const Vector au = op.a_star * u;
        const Vector av = op.a_gen * v;
        Scalar lhs = 0, rhs = 0, nu = 0, nv = 0;
        for (Eigen::Index i : op.interior) {
            lhs += h[i] * v[i] * au[i];
            rhs += h[i] * av[i] * u[i];
            nu += h[i] * u[i] * u[i];
            nv += h[i] * v[i] * v[i];
        }
        worst = std::max(worst, detail::ratio(std::abs(lhs - rhs), std::sqrt(nu * nv)));
    }
    const Scalar norm = detail::max_row_sum(op.interior_block(op.a_gen));
    return {worst, norm, detail::ratio(worst, norm)};
}

template <typename Scalar = double>
struct BalanceReport {
    Scalar antisymmetry;     // max |psi_ij + psi_ji| / max |psi|
    Scalar self_interaction; // max over subsets S of |sum_{S x S} psi| / sum |psi|
    Scalar action_reaction;  // disjoint S, S'
    Scalar additivity;       // divergence over S u S' vs the parts

    Scalar worst() const { return std::max({antisymmetry, self_interaction, action_reaction, additivity}); }
};

/// Discrete balance-law conditions for the pairwise flux
/// psi_ij h_i h_j = u_j h_j W(j, i) - u_i h_i W(i, j), over random subsets.
template <typename Scalar, typename Gen>
BalanceReport<Scalar> balance_check(const DiscreteOperator<Scalar>& op,
                                    const typename DiscreteOperator<Scalar>::Vector& u, Gen& gen,
                                    int subset_trials = 16) {
    using Sparse = Eigen::SparseMatrix<Scalar>;
    using Vector = typename DiscreteOperator<Scalar>::Vector;
    const Vector mass = u.cwiseProduct(op.widths);
    // outflow(i, j) = mass_i W(i, j)
    const Sparse outflow = Sparse(mass.asDiagonal() * Sparse(op.weights));
    const Sparse inflow = Sparse(outflow.transpose());
    const Sparse psi = inflow - outflow;
    const Sparse psi_t = Sparse(psi.transpose());
    const Sparse abs_psi = psi.cwiseAbs();

    BalanceReport<Scalar> r{};
    r.antisymmetry = detail::ratio(detail::max_abs(Sparse(psi + psi_t)), detail::max_abs(psi));

    const Eigen::Index n = op.size();
    std::bernoulli_distribution coin(0.5);
    std::uniform_int_distribution<int> pick(0, 2);
    const Vector div = psi * Vector::Ones(n);
    for (int t = 0; t < subset_trials; ++t) {
        Vector s = Vector::Zero(n), sp = Vector::Zero(n);
        for (Eigen::Index i = 0; i < n; ++i) {
            const int c = pick(gen);
            if (c == 1) s[i] = 1;
            if (c == 2) sp[i] = 1;
        }
        if (coin(gen)) s = Vector::Ones(n) - sp;  // also exercise complements
        const Scalar self = s.dot(psi * s);
        r.self_interaction = std::max(r.self_interaction, detail::ratio(std::abs(self), s.dot(abs_psi * s)));
        const Scalar ar = s.dot(psi * sp) + sp.dot(psi * s);
        r.action_reaction =
            std::max(r.action_reaction, detail::ratio(std::abs(ar), s.dot(abs_psi * sp) + sp.dot(abs_psi * s)));
        const Vector both = s + sp;
        const Scalar whole = both.dot(div);
        const Scalar parts = s.dot(div) + sp.dot(div);
        r.additivity = std::max(r.additivity, detail::ratio(std::abs(whole - parts), both.dot(div.cwiseAbs())));
    }
    return r;
}

template <typename Scalar = double>
struct DivergenceReport {
    Scalar discrepancy;  // |mass change in omega + absorbed flux|
    Scalar scale;        // ||u||_{1,H} times the max row sum of a_star
    Scalar relative;
};

/// Probability lost from omega equals the flux into omega_d.
template <typename Scalar>
DivergenceReport<Scalar> divergence_theorem_check(const DiscreteOperator<Scalar>& op,
                                                  const typename DiscreteOperator<Scalar>::Vector& u) {
    using Vector = typename DiscreteOperator<Scalar>::Vector;
    const Vector change = op.a_star * u;
    const Vector flux = op.flux_to_d * u;
    Scalar total = 0;
    for (Eigen::Index i : op.interior) total += change[i] * op.widths[i];
    for (std::size_t k = 0; k < op.absorbing.size(); ++k)
        total += flux[Eigen::Index(k)] * op.widths[op.absorbing[k]];
    const Scalar scale = u.cwiseAbs().dot(op.widths) * detail::max_row_sum(op.a_star);
    return {std::abs(total), scale, detail::ratio(std::abs(total), scale)};
}

}  // namespace nlexit
