#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <type_traits>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "nlexit/errors.hpp"
#include "nlexit/intervals.hpp"
#include "nlexit/random.hpp"

namespace nlexit {

// ---------------------------------------------------------------------------
// Piecewise-linear profile with exact integration and CDF inversion.
// ---------------------------------------------------------------------------

/// Nonnegative piecewise-linear function on [nodes.front(), nodes.back()],
/// zero outside. Integrals are exact (trapezoid on the breakpoints) and the
/// cumulative integral can be inverted exactly (quadratic per segment).
template <typename Scalar = double>
class PiecewiseLinear {
public:
    PiecewiseLinear() = default;

    PiecewiseLinear(std::vector<Scalar> nodes, std::vector<Scalar> values)
        : nodes_(std::move(nodes)), values_(std::move(values)) {
        if (nodes_.size() != values_.size() || nodes_.size() < 2)
            throw ConfigError("piecewise-linear table needs at least two (node, value) pairs");
        for (std::size_t k = 0; k + 1 < nodes_.size(); ++k)
            if (!(nodes_[k] < nodes_[k + 1]))
                throw ConfigError("table nodes must be strictly increasing");
        for (Scalar v : values_)
            if (!(v >= 0) || !std::isfinite(static_cast<double>(v)))
                throw ConfigError("jump-rate table values must be finite and nonnegative");
        cumulative_.assign(nodes_.size(), Scalar(0));
        for (std::size_t k = 0; k + 1 < nodes_.size(); ++k)
            cumulative_[k + 1] =
                cumulative_[k] + (nodes_[k + 1] - nodes_[k]) * (values_[k] + values_[k + 1]) / 2;
    }

    const std::vector<Scalar>& nodes() const { return nodes_; }
    const std::vector<Scalar>& values() const { return values_; }
    Scalar front() const { return nodes_.front(); }
    Scalar back() const { return nodes_.back(); }
    Scalar total() const { return cumulative_.back(); }

    Scalar operator()(Scalar t) const {
        if (t < nodes_.front() || t > nodes_.back()) return Scalar(0);
        const std::size_t k = segment(t);
        const Scalar w = (t - nodes_[k]) / (nodes_[k + 1] - nodes_[k]);
        return values_[k] + w * (values_[k + 1] - values_[k]);
    }

    /// C(t) = integral from front() to t.
    Scalar cumulative(Scalar t) const {
        if (t <= nodes_.front()) return Scalar(0);
        if (t >= nodes_.back()) return cumulative_.back();
        const std::size_t k = segment(t);
        const Scalar tau = t - nodes_[k];
        const Scalar slope = (values_[k + 1] - values_[k]) / (nodes_[k + 1] - nodes_[k]);
        return cumulative_[k] + values_[k] * tau + slope * tau * tau / 2;
    }

    Scalar integral(Scalar a, Scalar b) const { return cumulative(b) - cumulative(a); }

    /// Smallest t with C(t) = c, for c in [0, total()].
    Scalar inverse_cumulative(Scalar c) const {
        c = std::clamp(c, Scalar(0), total());
        auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), c);
        std::size_t k = it == cumulative_.begin() ? 0 : std::size_t(it - cumulative_.begin()) - 1;
        k = std::min(k, nodes_.size() - 2);
        const Scalar dt = nodes_[k + 1] - nodes_[k];
        const Scalar f0 = values_[k];
        const Scalar slope = (values_[k + 1] - f0) / dt;
        const Scalar r = c - cumulative_[k];
        const Scalar disc = std::max(Scalar(0), f0 * f0 + 2 * slope * r);
        const Scalar denom = f0 + std::sqrt(disc);
        const Scalar tau = denom > 0 ? 2 * r / denom : Scalar(0);
        return nodes_[k] + std::clamp(tau, Scalar(0), dt);
    }

private:
    std::size_t segment(Scalar t) const {
        auto it = std::upper_bound(nodes_.begin(), nodes_.end(), t);
        std::size_t k = it == nodes_.begin() ? 0 : std::size_t(it - nodes_.begin()) - 1;
        return std::min(k, nodes_.size() - 2);
    }

    std::vector<Scalar> nodes_;
    std::vector<Scalar> values_;
    std::vector<Scalar> cumulative_;
};

// ---------------------------------------------------------------------------
// Kernel families
// ---------------------------------------------------------------------------

/// Uniform jumps on |y - x| < lambda with total rate `rate`.
template <typename Scalar = double>
struct CompoundPoissonUniform {
    Scalar rate;
};

/// epsilon-regularized truncated alpha-stable rate:
///   (1/m) |d|^-(1+alpha) for epsilon < |d| < lambda,
///   (1/m) epsilon^-(1+alpha) for |d| <= epsilon.
template <typename Scalar = double>
struct TruncatedStable {
    Scalar alpha;
    Scalar m;
    Scalar epsilon;
};

/// Translation-invariant table: gamma(x, y) = f(y - x), f piecewise linear.
template <typename Scalar = double>
struct TabulatedDisplacement {
    PiecewiseLinear<Scalar> profile;
};

/// Position-dependent table on a tensor grid, bilinear in (x, y); zero
/// outside the tabulated rectangle.
template <typename Scalar = double>
struct TabulatedTwoPoint {
    std::vector<Scalar> xs;
    std::vector<Scalar> ys;
    Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> values;  // xs.size() x ys.size()
};

enum class Activity { finite, infinite };
enum class Variation { finite, infinite };

struct ActivityClass {
    Activity activity;
    Variation variation;
    bool heuristic = false;

    friend bool operator==(const ActivityClass& a, const ActivityClass& b) {
        return a.activity == b.activity && a.variation == b.variation;
    }
};

inline std::string to_string(const ActivityClass& c) {
    std::string s = c.activity == Activity::finite ? "finite activity" : "infinite activity";
    s += c.variation == Variation::finite ? ", finite variation" : ", infinite variation";
    if (c.heuristic) s += " (heuristic)";
    return s;
}

/// Finite-range two-point jump rate gamma(x, y): the rate density of jumps
/// from x to y, zero whenever |x - y| >= horizon. Immutable.
template <typename Scalar = double>
class JumpKernel {
public:
    using Family = std::variant<CompoundPoissonUniform<Scalar>, TruncatedStable<Scalar>,
                                TabulatedDisplacement<Scalar>, TabulatedTwoPoint<Scalar>>;

    static JumpKernel compound_poisson_uniform(Scalar rate, Scalar horizon) {
        if (!(rate >= 0)) throw ConfigError("compound_poisson_uniform: rate must be >= 0");
        return JumpKernel(horizon, CompoundPoissonUniform<Scalar>{rate});
    }

    static JumpKernel truncated_stable(Scalar alpha, Scalar m, Scalar epsilon, Scalar horizon) {
        if (!(alpha > 0 && alpha < 2)) throw ConfigError("truncated_stable: alpha must lie in (0, 2)");
        if (!(m > 0)) throw ConfigError("truncated_stable: m must be > 0");
        if (!(epsilon > 0))
            throw ConfigError("truncated_stable: epsilon must be > 0 (the unregularized rate is not integrable)");
        if (!(epsilon < horizon)) throw ConfigError("truncated_stable: epsilon must be smaller than lambda");
        return JumpKernel(horizon, TruncatedStable<Scalar>{alpha, m, epsilon});
    }

    /// f sampled at displacement nodes; nodes outside (-horizon, horizon)
    /// are rejected.
    static JumpKernel tabulated(std::vector<Scalar> displacements, std::vector<Scalar> values,
                                Scalar horizon) {
        if (!displacements.empty() &&
            (displacements.front() < -horizon || displacements.back() > horizon))
            throw ConfigError("tabulated kernel: displacement nodes must lie within [-lambda, lambda]");
        return JumpKernel(horizon, TabulatedDisplacement<Scalar>{
                                       PiecewiseLinear<Scalar>(std::move(displacements), std::move(values))});
    }

    static JumpKernel tabulated(std::vector<Scalar> xs, std::vector<Scalar> ys,
                                Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> values,
                                Scalar horizon) {
        if (xs.size() < 2 || ys.size() < 2 || values.rows() != Eigen::Index(xs.size()) ||
            values.cols() != Eigen::Index(ys.size()))
            throw ConfigError("tabulated kernel: value grid must be xs.size() x ys.size(), both >= 2");
        for (std::size_t k = 0; k + 1 < xs.size(); ++k)
            if (!(xs[k] < xs[k + 1])) throw ConfigError("tabulated kernel: x nodes must increase");
        for (std::size_t k = 0; k + 1 < ys.size(); ++k)
            if (!(ys[k] < ys[k + 1])) throw ConfigError("tabulated kernel: y nodes must increase");
        if (!(values.array() >= 0).all() || !values.allFinite())
            throw ConfigError("tabulated kernel: values must be finite and nonnegative");
        return JumpKernel(horizon,
                          TabulatedTwoPoint<Scalar>{std::move(xs), std::move(ys), std::move(values)});
    }

    Scalar horizon() const { return horizon_; }
    const Family& family() const { return family_; }
    bool symmetric() const { return symmetric_; }

    std::string family_name() const {
        return std::visit(
            [](const auto& f) -> std::string {
                using F = std::decay_t<decltype(f)>;
                if constexpr (std::is_same_v<F, CompoundPoissonUniform<Scalar>>) return "compound_poisson_uniform";
                else if constexpr (std::is_same_v<F, TruncatedStable<Scalar>>) return "truncated_stable";
                else return "custom_tabulated";
            },
            family_);
    }

    bool is_tabulated() const { return family_.index() >= 2; }

    /// The power-law family is quadrature-hostile near the diagonal; the
    /// operator assembly integrates it exactly over cells.
    bool prefers_cell_integrals() const { return std::holds_alternative<TruncatedStable<Scalar>>(family_); }

    /// gamma(x, y).
    Scalar operator()(Scalar x, Scalar y) const {
        const Scalar d = y - x;
        if (!(std::abs(d) < horizon_)) return Scalar(0);
        return std::visit(
            [&](const auto& f) -> Scalar {
                using F = std::decay_t<decltype(f)>;
                if constexpr (std::is_same_v<F, CompoundPoissonUniform<Scalar>>) {
                    return f.rate / (2 * horizon_);
                } else if constexpr (std::is_same_v<F, TruncatedStable<Scalar>>) {
                    const Scalar r = std::max(std::abs(d), f.epsilon);
                    return std::pow(r, -(1 + f.alpha)) / f.m;
                } else if constexpr (std::is_same_v<F, TabulatedDisplacement<Scalar>>) {
                    return f.profile(d);
                } else {
                    return bilinear(f, x, y);
                }
            },
            family_);
    }

    /// Integral of gamma(x, .) over [a, b] (a <= b).
    Scalar mass(Scalar x, Scalar a, Scalar b) const {
        a = std::max(a, x - horizon_);
        b = std::min(b, x + horizon_);
        if (!(a < b)) return Scalar(0);
        if (const auto* t = std::get_if<TabulatedTwoPoint<Scalar>>(&family_)) {
            const auto profile = row_profile(*t, x);
            return profile ? profile->integral(a, b) : Scalar(0);
        }
        return displacement_cdf(b - x) - displacement_cdf(a - x);
    }

    /// y >= a with mass(x, a, y) == target, for 0 <= target <= mass(x, a, b).
    Scalar locate(Scalar x, Scalar a, Scalar target) const {
        a = std::max(a, x - horizon_);
        if (const auto* t = std::get_if<TabulatedTwoPoint<Scalar>>(&family_)) {
            const auto profile = row_profile(*t, x);
            if (!profile) return a;
            return profile->inverse_cumulative(profile->cumulative(a) + target);
        }
        return x + displacement_cdf_inverse(displacement_cdf(a - x) + target);
    }

    /// Same kernel with every rate multiplied by c > 0.
    JumpKernel scaled(Scalar c) const {
        if (!(c > 0)) throw ConfigError("kernel scale factor must be > 0");
        JumpKernel out = *this;
        std::visit(
            [&](auto& f) {
                using F = std::decay_t<decltype(f)>;
                if constexpr (std::is_same_v<F, CompoundPoissonUniform<Scalar>>) {
                    f.rate *= c;
                } else if constexpr (std::is_same_v<F, TruncatedStable<Scalar>>) {
                    f.m /= c;
                } else if constexpr (std::is_same_v<F, TabulatedDisplacement<Scalar>>) {
                    std::vector<Scalar> v = f.profile.values();
                    for (auto& e : v) e *= c;
                    f.profile = PiecewiseLinear<Scalar>(f.profile.nodes(), std::move(v));
                } else {
                    f.values *= c;
                }
            },
            out.family_);
        return out;
    }

private:
    JumpKernel(Scalar horizon, Family family) : horizon_(horizon), family_(std::move(family)) {
        if (!(horizon > 0) || !std::isfinite(static_cast<double>(horizon)))
            throw ConfigError("kernel horizon lambda must be finite and > 0");
        symmetric_ = detect_symmetry();
    }

    bool detect_symmetry() const {
        if (const auto* t = std::get_if<TabulatedDisplacement<Scalar>>(&family_)) {
            for (Scalar d : t->profile.nodes()) {
                if (std::abs(d) > horizon_) continue;
                if (t->profile(d) != t->profile(-d)) return false;
            }
            return true;
        }
        if (const auto* t = std::get_if<TabulatedTwoPoint<Scalar>>(&family_)) {
            return t->xs == t->ys && t->values == t->values.transpose();
        }
        return true;
    }

    // Signed cumulative displacement integral from 0 to d, clipped to the horizon.
    Scalar displacement_cdf(Scalar d) const {
        d = std::clamp(d, -horizon_, horizon_);
        return std::visit(
            [&](const auto& f) -> Scalar {
                using F = std::decay_t<decltype(f)>;
                if constexpr (std::is_same_v<F, CompoundPoissonUniform<Scalar>>) {
                    return f.rate / (2 * horizon_) * d;
                } else if constexpr (std::is_same_v<F, TruncatedStable<Scalar>>) {
                    const Scalar s = std::abs(d);
                    const Scalar plateau = std::pow(f.epsilon, -(1 + f.alpha)) / f.m;
                    Scalar v;
                    if (s <= f.epsilon)
                        v = plateau * s;
                    else
                        v = plateau * f.epsilon +
                            (std::pow(f.epsilon, -f.alpha) - std::pow(s, -f.alpha)) / (f.alpha * f.m);
                    return d < 0 ? -v : v;
                } else if constexpr (std::is_same_v<F, TabulatedDisplacement<Scalar>>) {
                    return f.profile.cumulative(d) - f.profile.cumulative(Scalar(0));
                } else {
                    return Scalar(0);
                }
            },
            family_);
    }

    Scalar displacement_cdf_inverse(Scalar v) const {
        return std::visit(
            [&](const auto& f) -> Scalar {
                using F = std::decay_t<decltype(f)>;
                if constexpr (std::is_same_v<F, CompoundPoissonUniform<Scalar>>) {
                    return f.rate > 0 ? std::clamp(v * 2 * horizon_ / f.rate, -horizon_, horizon_) : Scalar(0);
                } else if constexpr (std::is_same_v<F, TruncatedStable<Scalar>>) {
                    const Scalar s = std::abs(v);
                    const Scalar plateau = std::pow(f.epsilon, -(1 + f.alpha)) / f.m;
                    const Scalar plateau_mass = plateau * f.epsilon;
                    Scalar d;
                    if (s <= plateau_mass) {
                        d = s / plateau;
                    } else {
                        const Scalar base = std::pow(f.epsilon, -f.alpha) - f.alpha * f.m * (s - plateau_mass);
                        d = base > 0 ? std::pow(base, -1 / f.alpha) : horizon_;
                    }
                    d = std::min(d, horizon_);
                    return v < 0 ? -d : d;
                } else if constexpr (std::is_same_v<F, TabulatedDisplacement<Scalar>>) {
                    return std::clamp(f.profile.inverse_cumulative(v + f.profile.cumulative(Scalar(0))),
                                      -horizon_, horizon_);
                } else {
                    return Scalar(0);
                }
            },
            family_);
    }

    static Scalar interp_weight(const std::vector<Scalar>& nodes, Scalar t, std::size_t& k) {
        auto it = std::upper_bound(nodes.begin(), nodes.end(), t);
        k = it == nodes.begin() ? 0 : std::size_t(it - nodes.begin()) - 1;
        k = std::min(k, nodes.size() - 2);
        return (t - nodes[k]) / (nodes[k + 1] - nodes[k]);
    }

    static Scalar bilinear(const TabulatedTwoPoint<Scalar>& t, Scalar x, Scalar y) {
        if (x < t.xs.front() || x > t.xs.back() || y < t.ys.front() || y > t.ys.back()) return Scalar(0);
        std::size_t i, j;
        const Scalar wx = interp_weight(t.xs, x, i);
        const Scalar wy = interp_weight(t.ys, y, j);
        return (1 - wx) * ((1 - wy) * t.values(i, j) + wy * t.values(i, j + 1)) +
               wx * ((1 - wy) * t.values(i + 1, j) + wy * t.values(i + 1, j + 1));
    }

    // gamma(x, .) restricted to the horizon window as a piecewise-linear profile.
    std::optional<PiecewiseLinear<Scalar>> row_profile(const TabulatedTwoPoint<Scalar>& t, Scalar x) const {
        if (x < t.xs.front() || x > t.xs.back()) return std::nullopt;
        const Scalar lo = std::max(t.ys.front(), x - horizon_);
        const Scalar hi = std::min(t.ys.back(), x + horizon_);
        if (!(lo < hi)) return std::nullopt;
        std::vector<Scalar> nodes{lo};
        for (Scalar y : t.ys)
            if (y > lo && y < hi) nodes.push_back(y);
        nodes.push_back(hi);
        std::vector<Scalar> values;
        values.reserve(nodes.size());
        for (Scalar y : nodes) values.push_back(bilinear(t, x, y));
        return PiecewiseLinear<Scalar>(std::move(nodes), std::move(values));
    }

    Scalar horizon_;
    Family family_;
    bool symmetric_ = true;
};

// ---------------------------------------------------------------------------
// Free-function interface
// ---------------------------------------------------------------------------

template <typename Scalar>
Scalar evaluate(const JumpKernel<Scalar>& kernel, Scalar x, Scalar y) {
    return kernel(x, y);
}

/// Lambda(x) = integral of gamma(x, y) over the region.
template <typename Scalar>
Scalar total_rate(const JumpKernel<Scalar>& kernel, Scalar x, const IntervalSet<Scalar>& region) {
    Scalar total = 0;
    for (const auto& p : region) total += kernel.mass(x, p.lo, p.hi);
    return total;
}

template <typename Scalar>
struct JumpDraw {
    Scalar y;
    std::size_t piece;  // index into the region's pieces
    Scalar total_rate;  // Lambda(x) over the region
};

/// Exact inverse-CDF draw from gamma(x, .) restricted to the region; also
/// reports which region piece the target landed in.
template <typename Scalar, typename Gen>
JumpDraw<Scalar> sample_jump_in(const JumpKernel<Scalar>& kernel, Scalar x,
                                const IntervalSet<Scalar>& region, Gen& gen) {
    // Masses of region pieces intersected with the horizon window.
    const Scalar lam = kernel.horizon();
    Scalar masses_buf[8];
    std::vector<Scalar> masses_vec;
    Scalar* masses = masses_buf;
    if (region.size() > 8) {
        masses_vec.resize(region.size());
        masses = masses_vec.data();
    }
    Scalar total = 0;
    for (std::size_t k = 0; k < region.size(); ++k) {
        const auto& p = region[k];
        masses[k] = (p.hi <= x - lam || p.lo >= x + lam) ? Scalar(0) : kernel.mass(x, p.lo, p.hi);
        total += masses[k];
    }
    if (!(total > 0))
        throw ConfigError("zero total jump rate at x = " + std::to_string(static_cast<double>(x)) +
                             " (isolated point; check the domain configuration)");
    Scalar target = Scalar(uniform01(gen)) * total;
    std::size_t k = 0;
    for (; k + 1 < region.size(); ++k) {
        if (masses[k] > 0 && target < masses[k]) break;
        target -= masses[k];
    }
    while (masses[k] <= 0 && k > 0) --k;  // rounding pushed us past the last live piece
    target = std::clamp(target, Scalar(0), masses[k]);
    const auto& p = region[k];
    const Scalar lo = std::max(p.lo, x - lam);
    const Scalar hi = std::min(p.hi, x + lam);
    const Scalar y = std::clamp(kernel.locate(x, lo, target), lo, hi);
    return {y, k, total};
}

template <typename Scalar, typename Gen>
Scalar sample_jump(const JumpKernel<Scalar>& kernel, Scalar x, const IntervalSet<Scalar>& region, Gen& gen) {
    return sample_jump_in(kernel, x, region, gen).y;
}

/// Activity/variation class of the unregularized family.
template <typename Scalar>
ActivityClass classify(const JumpKernel<Scalar>& kernel) {
    if (std::holds_alternative<CompoundPoissonUniform<Scalar>>(kernel.family()))
        return {Activity::finite, Variation::finite, false};
    if (const auto* s = std::get_if<TruncatedStable<Scalar>>(&kernel.family()))
        return {Activity::infinite, s->alpha < 1 ? Variation::finite : Variation::infinite, false};

    // Tabulated: watch the truncated integrals over delta < |d| < lambda as
    // delta shrinks. Bounded tables always converge, but the check is kept
    // numerical so that steep tables are judged on their values.
    const Scalar lam = kernel.horizon();
    Scalar x = 0;
    if (const auto* t = std::get_if<TabulatedTwoPoint<Scalar>>(&kernel.family()))
        x = (t->xs.front() + t->xs.back()) / 2;
    auto truncated = [&](Scalar delta, bool first_moment) {
        constexpr int n = 64;
        Scalar sum = 0;
        for (int side : {-1, 1}) {
            // geometric panels from delta to lambda
            const Scalar ratio = std::pow(lam / delta, Scalar(1) / n);
            Scalar a = delta;
            for (int k = 0; k < n; ++k) {
                const Scalar b = a * ratio;
                const Scalar mid = (a + b) / 2;
                const Scalar g = kernel(x, x + side * mid);
                sum += (b - a) * g * (first_moment ? mid : Scalar(1));
                a = b;
            }
        }
        return sum;
    };
    auto diverges = [&](bool first_moment) {
        Scalar prev = truncated(lam * Scalar(1e-3), first_moment);
        Scalar prev_inc = -1;
        for (int k = 1; k <= 4; ++k) {
            const Scalar cur = truncated(lam * std::pow(Scalar(10), Scalar(-3 - 2 * k)), first_moment);
            const Scalar inc = cur - prev;
            if (prev_inc >= 0 && inc < Scalar(0.5) * prev_inc) return false;
            prev_inc = inc;
            prev = cur;
        }
        return prev_inc > Scalar(1e-12) * std::max(prev, Scalar(1));
    };
    const bool inf_act = diverges(false);
    const bool inf_var = inf_act && diverges(true);
    return {inf_act ? Activity::infinite : Activity::finite,
            inf_var ? Variation::infinite : Variation::finite, true};
}

/// Symmetric/antisymmetric split gamma = gamma_s + gamma_a.
template <typename Scalar = double>
class KernelDecomposition {
public:
    explicit KernelDecomposition(JumpKernel<Scalar> kernel) : kernel_(std::move(kernel)) {}

    Scalar symmetric_part(Scalar x, Scalar y) const { return (kernel_(x, y) + kernel_(y, x)) / 2; }
    Scalar antisymmetric_part(Scalar x, Scalar y) const { return (kernel_(x, y) - kernel_(y, x)) / 2; }
    /// gamma_a vanishes identically.
    bool antisymmetric_vanishes() const { return kernel_.symmetric(); }
    const JumpKernel<Scalar>& kernel() const { return kernel_; }

private:
    JumpKernel<Scalar> kernel_;
};

template <typename Scalar>
KernelDecomposition<Scalar> decompose(const JumpKernel<Scalar>& kernel) {
    return KernelDecomposition<Scalar>(kernel);
}

}  // namespace nlexit
