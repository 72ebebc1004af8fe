#pragma once

#include <algorithm>
#include <cmath>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/SparseCholesky>
#include <Eigen/SparseCore>
#include <Eigen/SparseLU>

#include "nlexit/errors.hpp"
#include "nlexit/operator.hpp"

namespace nlexit {

enum class TimeScheme { implicit_euler, crank_nicolson };

inline const char* to_string(TimeScheme s) {
    return s == TimeScheme::implicit_euler ? "implicit_euler" : "crank_nicolson";
}

/// Survival density history. survival[n] = S(times[n]) is the probability
/// still in omega; absorbed[n] = F(times[n]) the cumulative flux into omega_d.
template <typename Scalar = double>
struct DensityTrajectory {
    using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

    std::vector<Scalar> times;
    std::vector<Scalar> survival;
    std::vector<Scalar> absorbed;
    std::vector<Scalar> density_times;  // times at which `densities` were stored
    std::vector<Vector> densities;      // active-sized
    Scalar dt = 0;                      // step actually used
    Scalar min_density = 0;
    bool negative_density = false;      // some component fell below -1e-14
};

template <typename Scalar = double>
struct ExitMoments {
    int order;
    Eigen::Matrix<Scalar, Eigen::Dynamic, 1> values;  // active-sized, zero on omega_d
};

struct EvolveOptions {
    int store_every = 0;  // 0: keep only the initial and final density
};

// ---------------------------------------------------------------------------
// Initial data
// ---------------------------------------------------------------------------

/// Uniform probability density on omega.
template <typename Scalar>
typename DiscreteOperator<Scalar>::Vector uniform_density(const DiscreteOperator<Scalar>& op) {
    typename DiscreteOperator<Scalar>::Vector u = DiscreteOperator<Scalar>::Vector::Zero(op.size());
    Scalar measure = 0;
    for (Eigen::Index i : op.interior) measure += op.widths[i];
    for (Eigen::Index i : op.interior) u[i] = 1 / measure;
    return u;
}

/// Point mass at x as the single-cell density 1/h.
template <typename Scalar>
typename DiscreteOperator<Scalar>::Vector point_mass(const DiscreteOperator<Scalar>& op, Scalar x) {
    typename DiscreteOperator<Scalar>::Vector u = DiscreteOperator<Scalar>::Vector::Zero(op.size());
    for (Eigen::Index i : op.interior) {
        const Scalar half = op.widths[i] / 2;
        if (x >= op.centers[i] - half && x <= op.centers[i] + half) {
            u[i] = 1 / op.widths[i];
            return u;
        }
    }
    std::ostringstream os;
    os << "point-mass location x = " << x << " is not inside omega";
    throw ConfigError(os.str());
}

// ---------------------------------------------------------------------------
// Forward equation
// ---------------------------------------------------------------------------

/// Time-integrates u_t = A* u on omega with u = 0 on omega_d. One sparse LU
/// factorization is reused for every step.
template <typename Scalar>
DensityTrajectory<Scalar> evolve(const DiscreteOperator<Scalar>& op,
                                 const typename DiscreteOperator<Scalar>::Vector& u0, Scalar dt, Scalar t_end,
                                 TimeScheme scheme = TimeScheme::implicit_euler, EvolveOptions options = {}) {
    using Vector = typename DiscreteOperator<Scalar>::Vector;
    using Sparse = Eigen::SparseMatrix<Scalar>;
    if (!(dt > 0)) throw ConfigError("time step dt must be > 0");
    if (!(t_end >= 0)) throw ConfigError("t_end must be >= 0");
    if (u0.size() != op.size()) throw ConfigError("initial density has the wrong length");
    for (Eigen::Index k : op.absorbing)
        if (u0[k] != Scalar(0)) throw ConfigError("initial density must vanish on omega_d");
    if (u0.minCoeff() < Scalar(-1e-14)) throw ConfigError("initial density must be nonnegative");
    const Scalar m0 = op.mass_in_omega(u0);
    if (std::abs(m0 - 1) > Scalar(1e-8)) {
        std::ostringstream os;
        os << "initial density must integrate to 1 over omega (got " << m0 << ")";
        throw ConfigError(os.str());
    }

    const long steps = std::max(0L, static_cast<long>(std::ceil(static_cast<double>(t_end / dt) - 1e-9)));
    const Scalar step = steps > 0 ? t_end / Scalar(steps) : dt;
    const Scalar theta = scheme == TimeScheme::implicit_euler ? Scalar(1) : Scalar(0.5);

    const Sparse a = op.interior_block(op.a_star);
    const Eigen::Index n = a.rows();
    Sparse identity(n, n);
    identity.setIdentity();
    Sparse lhs = identity - (theta * step) * a;
    lhs.makeCompressed();
    Eigen::SparseLU<Sparse> lu;
    lu.compute(lhs);
    if (lu.info() != Eigen::Success) throw NumericalError("evolve: factorization of (I - theta dt A*) failed");

    const Vector h = op.interior_widths();
    const Vector exit_rate = op.restrict_to_interior(op.exit_rate);
    const Vector weighted_exit = h.cwiseProduct(exit_rate);

    DensityTrajectory<Scalar> traj;
    traj.dt = step;
    Vector u = op.restrict_to_interior(u0);
    Scalar s = h.dot(u);
    Scalar f = 0;
    traj.times.push_back(0);
    traj.survival.push_back(s);
    traj.absorbed.push_back(f);
    traj.density_times.push_back(0);
    traj.densities.push_back(op.prolong(u));
    traj.min_density = u.size() ? u.minCoeff() : Scalar(0);

    for (long k = 1; k <= steps; ++k) {
        // Increment form (I - theta dt A) du = dt A u: rounding acts on du, not on u.
        const Vector au = a * u;
        Vector du = lu.solve(Vector(step * au));
        if (lu.info() != Eigen::Success) throw NumericalError("evolve: linear solve failed");
        Vector next = u + du;
        // Flux at the scheme's stage value keeps S + F conserved to rounding.
        const Scalar outflow = theta * weighted_exit.dot(next) + (1 - theta) * weighted_exit.dot(u);
        f += step * outflow;
        u = std::move(next);
        s = h.dot(u);
        const Scalar t = step * Scalar(k);
        traj.times.push_back(t);
        traj.survival.push_back(s);
        traj.absorbed.push_back(f);
        if (u.size()) traj.min_density = std::min(traj.min_density, u.minCoeff());
        if ((options.store_every > 0 && k % options.store_every == 0) || k == steps) {
            traj.density_times.push_back(t);
            traj.densities.push_back(op.prolong(u));
        }
    }
    traj.negative_density = traj.min_density < Scalar(-1e-14);
    return traj;
}

// ---------------------------------------------------------------------------
// Backward equation: exit-time moments
// ---------------------------------------------------------------------------

namespace detail {

template <typename Scalar>
void factor_generator(const DiscreteOperator<Scalar>& op, Eigen::SparseLU<Eigen::SparseMatrix<Scalar>>& lu) {
    if (op.absorbing.empty())
        throw ConfigError("exit-time moments need a nonempty omega_d (constants are in the null space)");
    Eigen::SparseMatrix<Scalar> block = op.interior_block(op.a_gen);
    block.makeCompressed();
    lu.compute(block);
    if (lu.info() != Eigen::Success)
        throw NumericalError("exit-time solve: generator block is singular (is omega_d reachable from omega?)");
}

}  // namespace detail

/// Moments m_1..m_kmax of the exit time from A m_k = -k m_{k-1}, m_0 = 1,
/// m_k = 0 on omega_d.
template <typename Scalar>
std::vector<ExitMoments<Scalar>> exit_moments(const DiscreteOperator<Scalar>& op, int k_max) {
    using Vector = typename DiscreteOperator<Scalar>::Vector;
    if (k_max < 1) throw ConfigError("k_max must be >= 1");
    Eigen::SparseLU<Eigen::SparseMatrix<Scalar>> lu;
    detail::factor_generator(op, lu);
    std::vector<ExitMoments<Scalar>> out;
    Vector prev = Vector::Ones(op.interior_size());
    for (int k = 1; k <= k_max; ++k) {
        Vector m = lu.solve(Vector(-Scalar(k) * prev));
        if (lu.info() != Eigen::Success || !m.allFinite())
            throw NumericalError("exit-time solve failed for moment " + std::to_string(k));
        const Scalar scale = m.cwiseAbs().maxCoeff();
        if (m.size() && m.minCoeff() < -Scalar(1e-10) * scale)
            throw NumericalError("exit-time moment " + std::to_string(k) + " has negative entries");
        out.push_back({k, op.prolong(m)});
        prev = std::move(m);
    }
    return out;
}

/// Mean exit time: A m = -1 on omega, m = 0 on omega_d.
template <typename Scalar>
ExitMoments<Scalar> mean_exit_time(const DiscreteOperator<Scalar>& op) {
    return exit_moments(op, 1).front();
}

/// Probability of first landing in `target` (a subset of omega_d) from each
/// interior cell: A p = -(rate into target) on omega, p = 0 on omega_d.
template <typename Scalar>
typename DiscreteOperator<Scalar>::Vector exit_probability(const DiscreteOperator<Scalar>& op,
                                                           const IntervalSet<Scalar>& target) {
    using Vector = typename DiscreteOperator<Scalar>::Vector;
    Eigen::SparseLU<Eigen::SparseMatrix<Scalar>> lu;
    detail::factor_generator(op, lu);
    Vector rate = Vector::Zero(op.interior_size());
    for (std::size_t k = 0; k < op.interior.size(); ++k) {
        const Eigen::Index i = op.interior[k];
        for (typename DiscreteOperator<Scalar>::RowMajorMatrix::InnerIterator it(op.weights, i); it; ++it)
            if (op.tags[std::size_t(it.col())] == Region::absorbing && target.contains(op.centers[it.col()]))
                rate[Eigen::Index(k)] += it.value();
    }
    Vector p = lu.solve(Vector(-rate));
    if (lu.info() != Eigen::Success || !p.allFinite()) throw NumericalError("exit-probability solve failed");
    return op.prolong(p);
}

// ---------------------------------------------------------------------------
// Coercivity
// ---------------------------------------------------------------------------

template <typename Scalar = double>
struct SigmaEstimate {
    Scalar value;
    Scalar residual;  // ||K v - sigma H v||_{H^-1} with ||v||_H = 1
    int iterations;
    Eigen::Matrix<Scalar, Eigen::Dynamic, 1> eigenvector;  // interior, H-normalized
};

struct SigmaOptions {
    int max_iterations = 1000;
    double tolerance = 1e-10;  // on the residual, relative to the largest diagonal rate
};

/// Smallest eigenvalue of the energy form -sym(H A) against the mass H on the
/// interior block, by shifted inverse iteration.
template <typename Scalar>
SigmaEstimate<Scalar> coercivity_sigma(const DiscreteOperator<Scalar>& op, SigmaOptions options = {}) {
    using Vector = typename DiscreteOperator<Scalar>::Vector;
    using Sparse = Eigen::SparseMatrix<Scalar>;
    if (!op.symmetric_kernel) throw ConfigError("coercivity estimate requires a symmetric kernel");
    const Eigen::Index n = op.interior_size();
    if (n == 0) throw ConfigError("coercivity estimate needs at least one interior cell");

    const Vector h = op.interior_widths();
    const Sparse ha = h.asDiagonal() * op.interior_block(op.a_gen);
    const Sparse energy = Sparse(-(ha + Sparse(ha.transpose())) / Scalar(2));

    Scalar scale = 0;
    for (Eigen::Index i = 0; i < n; ++i) scale = std::max(scale, std::abs(energy.coeff(i, i)) / h[i]);
    if (scale == 0) {
        // Zero kernel: every vector is a minimizer with sigma = 0.
        Vector v = Vector::Ones(n) / std::sqrt(h.sum());
        return {Scalar(0), Scalar(0), 0, v};
    }
    const Scalar shift = Scalar(1e-6) * scale;
    Sparse shifted = energy;
    for (Eigen::Index i = 0; i < n; ++i) shifted.coeffRef(i, i) += shift * h[i];
    shifted.makeCompressed();
    Eigen::SimplicialLDLT<Sparse> ldlt;
    ldlt.compute(shifted);
    if (ldlt.info() != Eigen::Success) throw NumericalError("coercivity: shifted energy matrix is not factorizable");

    auto h_norm = [&](const Vector& x) { return std::sqrt(x.cwiseProduct(h).dot(x)); };
    Vector v(n);
    for (Eigen::Index i = 0; i < n; ++i) v[i] = 1 + Scalar(0.1) * std::sin(Scalar(0.7) * Scalar(i));
    v /= h_norm(v);

    Scalar sigma = v.dot(energy * v);
    Scalar residual = 0;
    for (int it = 1; it <= options.max_iterations; ++it) {
        Vector x = ldlt.solve(Vector(h.cwiseProduct(v)));
        v = x / h_norm(x);
        const Vector kv = energy * v;
        sigma = v.dot(kv);
        const Vector r = kv - sigma * h.cwiseProduct(v);
        residual = std::sqrt(r.cwiseProduct(h.cwiseInverse()).dot(r));
        if (residual <= Scalar(options.tolerance) * scale) return {sigma, residual, it, v};
    }
    std::ostringstream os;
    os << "coercivity: inverse iteration did not converge (residual " << residual << " after "
       << options.max_iterations << " iterations)";
    throw NumericalError(os.str());
}

}  // namespace nlexit
