#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <sstream>
#include <vector>

#include "nlexit/errors.hpp"
#include "nlexit/geometry.hpp"
#include "nlexit/kernel.hpp"
#include "nlexit/parallel.hpp"
#include "nlexit/random.hpp"

namespace nlexit {

/// One Monte Carlo exit record. Censored records carry exit_time = t_max and
/// a NaN exit location.
template <typename Scalar = double>
struct ExitRecord {
    Scalar x0;
    Scalar exit_time;
    Scalar exit_location;
    long jumps;
    bool censored;
};

template <typename Scalar = double>
struct ExitEnsemble {
    std::vector<ExitRecord<Scalar>> records;
    std::uint64_t seed = 0;
    std::size_t n_paths = 0;
    Scalar t_max = 0;
};

/// Jump instants and post-jump positions; times[0] = 0 holds the start.
template <typename Scalar = double>
struct SamplePath {
    std::vector<Scalar> times;
    std::vector<Scalar> positions;
    bool exited = false;
};

/// Where paths start: a fixed point or uniformly over omega.
template <typename Scalar = double>
struct InitialCondition {
    enum class Kind { uniform, point } kind = Kind::uniform;
    Scalar x0 = 0;

    static InitialCondition uniform() { return {Kind::uniform, 0}; }
    static InitialCondition point(Scalar x) { return {Kind::point, x}; }

    template <typename Gen>
    Scalar draw(const DomainPartition<Scalar>& partition, Gen& gen) const {
        if (kind == Kind::point) return x0;
        const auto& omega = partition.omega();
        Scalar target = Scalar(uniform01(gen)) * omega.measure();
        for (const auto& p : omega) {
            if (target < p.length()) return p.lo + target;
            target -= p.length();
        }
        return omega.pieces().back().hi;
    }
};

/// Follows the confined process from x0 until it lands in omega_d or the
/// clock passes t_max. Jumps are drawn from gamma restricted to omega united
/// with omega_d, so the reflective collar is never visited.
template <typename Scalar, typename Gen>
ExitRecord<Scalar> simulate_exit(const JumpKernel<Scalar>& kernel, const DomainPartition<Scalar>& partition,
                                 Scalar x0, Gen& gen, Scalar t_max, SamplePath<Scalar>* trace = nullptr) {
    if (partition.region_of(x0) != Region::interior) {
        std::ostringstream os;
        os << "start point x0 = " << x0 << " is not in omega";
        throw ConfigError(os.str());
    }
    const IntervalSet<Scalar> region = partition.active();
    if (trace) {
        trace->times.assign(1, Scalar(0));
        trace->positions.assign(1, x0);
        trace->exited = false;
    }
    Scalar x = x0;
    Scalar t = 0;
    long jumps = 0;
    for (;;) {
        const auto draw = sample_jump_in(kernel, x, region, gen);
        t += Scalar(exponential(gen, static_cast<double>(draw.total_rate)));
        if (t >= t_max) return {x0, t_max, std::numeric_limits<Scalar>::quiet_NaN(), jumps, true};
        ++jumps;
        x = draw.y;
        if (trace) {
            trace->times.push_back(t);
            trace->positions.push_back(x);
        }
        if (partition.region_of(x) == Region::absorbing) {
            if (trace) trace->exited = true;
            return {x0, t, x, jumps, false};
        }
    }
}

/// n_paths independent exits; path i uses stream (seed, i), so the ensemble
/// is bit-identical for any thread count.
template <typename Scalar>
ExitEnsemble<Scalar> simulate_ensemble(const JumpKernel<Scalar>& kernel, const DomainPartition<Scalar>& partition,
                                       const InitialCondition<Scalar>& initial, std::size_t n_paths,
                                       std::uint64_t seed, Scalar t_max, unsigned threads = 1,
                                       std::vector<SamplePath<Scalar>>* traces = nullptr) {
    if (n_paths == 0) throw ConfigError("n_paths must be >= 1");
    if (!(t_max > 0)) throw ConfigError("t_max must be > 0");
    ExitEnsemble<Scalar> ens;
    ens.seed = seed;
    ens.n_paths = n_paths;
    ens.t_max = t_max;
    ens.records.resize(n_paths);
    if (traces) traces->assign(n_paths, {});
    parallel_for(n_paths, threads, [&](std::size_t i) {
        Rng gen = stream_for(seed, i);
        const Scalar x0 = initial.draw(partition, gen);
        ens.records[i] = simulate_exit(kernel, partition, x0, gen, t_max, traces ? &(*traces)[i] : nullptr);
    });
    return ens;
}

/// Free-space (region = real line) or confined sample path up to t_max. A
/// confined path stops when it lands in omega_d.
template <typename Scalar, typename Gen>
SamplePath<Scalar> simulate_path(const JumpKernel<Scalar>& kernel, Scalar x0, Gen& gen, Scalar t_max,
                                 const DomainPartition<Scalar>* confined = nullptr) {
    if (!(t_max > 0)) throw ConfigError("t_max must be > 0");
    SamplePath<Scalar> path;
    path.times.push_back(0);
    path.positions.push_back(x0);
    if (confined) {
        simulate_exit(kernel, *confined, x0, gen, t_max, &path);
        return path;
    }
    const IntervalSet<Scalar> line = IntervalSet<Scalar>::real_line();
    Scalar x = x0, t = 0;
    for (;;) {
        const auto draw = sample_jump_in(kernel, x, line, gen);
        t += Scalar(exponential(gen, static_cast<double>(draw.total_rate)));
        if (t >= t_max) break;
        x = draw.y;
        path.times.push_back(t);
        path.positions.push_back(x);
    }
    return path;
}

/// Gaussian-increment comparator with E[(X_t - x0)^2] = 2 D t, sampled on a
/// uniform time grid.
template <typename Scalar, typename Gen>
SamplePath<Scalar> brownian_path(Scalar x0, Gen& gen, Scalar t_max, Scalar dt, Scalar diffusion = Scalar(0.5)) {
    if (!(dt > 0) || !(t_max > 0)) throw ConfigError("brownian_path: dt and t_max must be > 0");
    std::normal_distribution<double> normal(0.0, 1.0);
    const long steps = static_cast<long>(std::ceil(static_cast<double>(t_max / dt) - 1e-9));
    const Scalar step = t_max / Scalar(steps);
    const Scalar sd = std::sqrt(2 * diffusion * step);
    SamplePath<Scalar> path;
    path.times.reserve(std::size_t(steps) + 1);
    path.positions.reserve(std::size_t(steps) + 1);
    path.times.push_back(0);
    path.positions.push_back(x0);
    Scalar x = x0;
    for (long k = 1; k <= steps; ++k) {
        x += sd * Scalar(normal(gen));
        path.times.push_back(step * Scalar(k));
        path.positions.push_back(x);
    }
    return path;
}

/// Position of a piecewise-constant path at time t.
template <typename Scalar>
Scalar position_at(const SamplePath<Scalar>& path, Scalar t) {
    auto it = std::upper_bound(path.times.begin(), path.times.end(), t);
    const std::size_t k = it == path.times.begin() ? 0 : std::size_t(it - path.times.begin()) - 1;
    return path.positions[k];
}

template <typename Scalar = double>
struct SurvivalEstimate {
    std::vector<Scalar> times;
    std::vector<Scalar> s_hat;
    std::vector<Scalar> stderr_;
    std::vector<std::size_t> n_eff;
};

/// S_hat(t) = fraction of records with T > t and its binomial standard
/// error. Censored records count as surviving for t < t_max and are dropped
/// from both counts beyond.
template <typename Scalar>
SurvivalEstimate<Scalar> empirical_survival(const ExitEnsemble<Scalar>& ens, const std::vector<Scalar>& times) {
    if (ens.records.empty()) throw ConfigError("empirical_survival: empty ensemble");
    SurvivalEstimate<Scalar> out;
    for (Scalar t : times) {
        std::size_t alive = 0, n = 0;
        for (const auto& r : ens.records) {
            if (r.censored && t >= r.exit_time) continue;
            ++n;
            if (r.censored || r.exit_time > t) ++alive;
        }
        const Scalar s = n ? Scalar(alive) / Scalar(n) : Scalar(0);
        out.times.push_back(t);
        out.s_hat.push_back(s);
        out.stderr_.push_back(n ? std::sqrt(s * (1 - s) / Scalar(n)) : Scalar(0));
        out.n_eff.push_back(n);
    }
    return out;
}

template <typename Scalar = double>
struct MomentEstimate {
    Scalar mean;
    Scalar stderr_;
    std::size_t used;      // uncensored records
    std::size_t censored;
};

/// Sample mean of T^k over uncensored records (pairwise summation).
template <typename Scalar>
MomentEstimate<Scalar> exit_time_moment(const ExitEnsemble<Scalar>& ens, int k = 1) {
    std::vector<Scalar> values, squares;
    std::size_t censored = 0;
    for (const auto& r : ens.records) {
        if (r.censored) { ++censored; continue; }
        const Scalar v = std::pow(r.exit_time, Scalar(k));
        values.push_back(v);
        squares.push_back(v * v);
    }
    auto pairwise = [](auto& self, const Scalar* p, std::size_t n) -> Scalar {
        if (n <= 8) {
            Scalar s = 0;
            for (std::size_t i = 0; i < n; ++i) s += p[i];
            return s;
        }
        return self(self, p, n / 2) + self(self, p + n / 2, n - n / 2);
    };
    const std::size_t n = values.size();
    if (n == 0) return {std::numeric_limits<Scalar>::quiet_NaN(), Scalar(0), 0, censored};
    const Scalar mean = pairwise(pairwise, values.data(), n) / Scalar(n);
    const Scalar second = pairwise(pairwise, squares.data(), n) / Scalar(n);
    const Scalar var = n > 1 ? std::max(Scalar(0), (second - mean * mean) * Scalar(n) / Scalar(n - 1)) : Scalar(0);
    return {mean, std::sqrt(var / Scalar(n)), n, censored};
}

}  // namespace nlexit
