#include <doctest.h>

#include <cmath>
#include <random>
#include <vector>

#include "nlexit/kernel.hpp"
#include "oracles.hpp"

using nlexit::Activity;
using nlexit::IntervalSet;
using nlexit::JumpKernel;
using nlexit::Variation;

namespace {

const auto uniform_kernel = JumpKernel<>::compound_poisson_uniform(0.2, 1.0);
const auto stable_half = JumpKernel<>::truncated_stable(0.5, 1.0, 1e-3, 1.0);
const auto stable_three_halves = JumpKernel<>::truncated_stable(1.5, 1000.0, 1e-3, 1.0);

// gamma(x, y) = c1 for y > x, c2 for y < x (the jump at 0 is smeared over 1e-9).
JumpKernel<> two_sided(double c1, double c2, double lambda = 1.0) {
    return JumpKernel<>::tabulated({-lambda, -1e-9, 1e-9, lambda}, {c2, c2, c1, c1}, lambda);
}

JumpKernel<> position_dependent() {
    std::vector<double> nodes;
    for (int k = 0; k <= 30; ++k) nodes.push_back(-1.0 + 0.1 * k);
    Eigen::MatrixXd v(nodes.size(), nodes.size());
    for (std::size_t i = 0; i < nodes.size(); ++i)
        for (std::size_t j = 0; j < nodes.size(); ++j)
            v(Eigen::Index(i), Eigen::Index(j)) = 1.0 + 0.5 * std::sin(nodes[i]) + 0.25 * nodes[j] * nodes[j];
    return JumpKernel<>::tabulated(nodes, nodes, v, 1.0);
}

// Breakpoints of gamma(x, .) for the quadrature oracle.
std::vector<double> kinks(double x, double eps = 1e-3, double lambda = 1.0) {
    return {x - lambda, x - eps, x, x + eps, x + lambda};
}

double quad_rate(const JumpKernel<>& k, double x, double a, double b, std::vector<double> breaks) {
    return oracle::integrate([&](double y) { return k(x, y); }, a, b, std::move(breaks), 1e-13);
}

}  // namespace

TEST_CASE("evaluate: regularized stable kernel branches") {
    CHECK(stable_half(0.0, 2.0) == 0.0);
    CHECK(stable_half(0.3, 0.3 + 0.0005) == doctest::Approx(std::pow(1e-3, -1.5)).epsilon(1e-14));
    CHECK(std::pow(1e-3, -1.5) == doctest::Approx(31622.7766).epsilon(1e-9));
    // closed plateau: |d| == epsilon uses the plateau value
    CHECK(stable_half(0.0, 1e-3) == doctest::Approx(std::pow(1e-3, -1.5)));
    CHECK(stable_half(0.0, 0.25) == doctest::Approx(std::pow(0.25, -1.5)));
    CHECK(stable_three_halves(0.0, -0.5) == doctest::Approx(std::pow(0.5, -2.5) / 1000.0));
    CHECK(stable_half(0.0, 1.0) == 0.0);  // |d| == lambda is outside the range
}

TEST_CASE("evaluate: compound Poisson uniform density integrates to the rate") {
    CHECK(uniform_kernel(0.0, 0.3) == doctest::Approx(0.1));
    CHECK(uniform_kernel(0.0, -1.0) == 0.0);
    const double integral = quad_rate(uniform_kernel, 0.4, -5, 5, kinks(0.4));
    CHECK(integral == doctest::Approx(0.2).epsilon(1e-10));
}

TEST_CASE("total_rate: closed forms agree with quadrature of evaluate") {
    const double eps = 1e-3;
    const double derived = 6 * std::pow(eps, -0.5) - 4;
    CHECK(derived == doctest::Approx(185.7367).epsilon(1e-6));
    const double rate = nlexit::total_rate(stable_half, 0.0, IntervalSet<>::real_line());
    CHECK(rate == doctest::Approx(derived).epsilon(1e-13));
    CHECK(rate == doctest::Approx(quad_rate(stable_half, 0.0, -2, 2, kinks(0.0))).epsilon(1e-9));

    CHECK(nlexit::total_rate(uniform_kernel, 0.3, IntervalSet<>::real_line()) == doctest::Approx(0.2));
    CHECK(nlexit::total_rate(uniform_kernel, 0.5, IntervalSet<>({{-1, 2}})) == doctest::Approx(0.2));

    // truncated regions against quadrature, including partially covered windows
    const IntervalSet<> region({{-0.7, -0.2}, {0.1, 0.35}, {0.9, 3.0}});
    for (double x : {0.0, 0.2, 0.5, 1.1}) {
        double expect = 0;
        for (const auto& p : region) expect += quad_rate(stable_half, x, p.lo, p.hi, kinks(x));
        CHECK(nlexit::total_rate(stable_half, x, region) == doctest::Approx(expect).epsilon(1e-9));
        double expect_u = 0;
        for (const auto& p : region) expect_u += quad_rate(uniform_kernel, x, p.lo, p.hi, kinks(x));
        CHECK(nlexit::total_rate(uniform_kernel, x, region) == doctest::Approx(expect_u).epsilon(1e-10));
    }
}

TEST_CASE("total_rate: tabulated kernels integrate exactly") {
    const auto k = position_dependent();
    const IntervalSet<> region({{-0.8, 0.05}, {0.3, 1.7}});
    for (double x : {-0.55, 0.0, 0.62}) {
        double expect = 0;
        std::vector<double> breaks;
        for (int j = 0; j <= 30; ++j) breaks.push_back(-1.0 + 0.1 * j);
        breaks.push_back(x - 1);
        breaks.push_back(x + 1);
        for (const auto& p : region) expect += quad_rate(k, x, p.lo, p.hi, breaks);
        CHECK(nlexit::total_rate(k, x, region) == doctest::Approx(expect).epsilon(1e-10));
    }
}

TEST_CASE("unregularized stable kernel is rejected") {
    CHECK_THROWS_AS(JumpKernel<>::truncated_stable(0.5, 1.0, 0.0, 1.0), nlexit::ConfigError);
    CHECK_THROWS_AS(JumpKernel<>::truncated_stable(2.0, 1.0, 1e-3, 1.0), nlexit::ConfigError);
    CHECK_THROWS_AS(JumpKernel<>::truncated_stable(0.5, -1.0, 1e-3, 1.0), nlexit::ConfigError);
    CHECK_THROWS_AS(JumpKernel<>::compound_poisson_uniform(0.2, 0.0), nlexit::ConfigError);
}

TEST_CASE("finite range and nonnegativity on random pairs") {
    std::mt19937_64 gen(7);
    std::uniform_real_distribution<double> pos(-3, 3);
    const std::vector<JumpKernel<>> kernels{uniform_kernel, stable_half, stable_three_halves, two_sided(0.3, 0.1),
                                            position_dependent()};
    for (const auto& k : kernels) {
        for (int t = 0; t < 2000; ++t) {
            const double x = pos(gen), y = pos(gen);
            const double g = k(x, y);
            CHECK(g >= 0);
            if (std::abs(x - y) >= k.horizon()) CHECK(g == 0);
        }
    }
}

TEST_CASE("total_rate is additive over disjoint regions") {
    std::mt19937_64 gen(11);
    std::uniform_real_distribution<double> u(-1.5, 1.5);
    for (const auto& k : {uniform_kernel, stable_half, stable_three_halves, position_dependent()}) {
        for (int t = 0; t < 200; ++t) {
            double a = u(gen), b = u(gen), c = u(gen);
            if (a > b) std::swap(a, b);
            const double x = u(gen) * 0.5;
            const IntervalSet<> left({{a - 1, a}}), mid({{a, b + 1e-3}});
            const IntervalSet<> both = left.unite(mid);
            const double whole = nlexit::total_rate(k, x, both);
            const double parts = nlexit::total_rate(k, x, left) + nlexit::total_rate(k, x, mid);
            CHECK(std::abs(whole - parts) <= 1e-12 * std::max(1.0, std::abs(whole)));
            (void)c;
        }
    }
}

TEST_CASE("sample_jump: empirical CDF matches the analytic CDF (KS at 1%)") {
    constexpr std::size_t n = 100000;
    SUBCASE("compound Poisson uniform jumps are uniform on (-1, 1)") {
        nlexit::Rng gen(2024);
        const double x = 0.4;
        const IntervalSet<> region({{x - 1, x + 1}});
        std::vector<double> d(n);
        for (auto& v : d) v = nlexit::sample_jump(uniform_kernel, x, region, gen) - x;
        const double stat = oracle::ks_statistic(d, [](double s) { return std::clamp((s + 1) / 2, 0.0, 1.0); });
        CHECK(stat < oracle::ks_critical_1pct(n));
    }
    SUBCASE("regularized stable jumps on the real line") {
        nlexit::Rng gen(99);
        const double x = 0.0;
        std::vector<double> d(n);
        for (auto& v : d) v = nlexit::sample_jump(stable_half, x, IntervalSet<>::real_line(), gen) - x;
        const double stat = oracle::ks_statistic_density(
            d, [&](double s) { return stable_half(x, x + s); }, -1, 1, {-1e-3, 0.0, 1e-3});
        CHECK(stat < oracle::ks_critical_1pct(n));

        // plateau mass fraction 2 eps^{-1/2} / (6 eps^{-1/2} - 4)
        const double eps = 1e-3;
        const double p = 2 * std::pow(eps, -0.5) / (6 * std::pow(eps, -0.5) - 4);
        CHECK(p == doctest::Approx(0.3405).epsilon(1e-3));
        const double hits = double(std::count_if(d.begin(), d.end(), [&](double s) { return std::abs(s) <= eps; }));
        CHECK(std::abs(hits / n - p) <= 3 * std::sqrt(p * (1 - p) / n));
    }
    SUBCASE("restricted region: samples stay inside and follow the restricted law") {
        nlexit::Rng gen(5);
        const double x = 0.2;
        const IntervalSet<> region({{-0.7, -0.1}, {0.15, 0.22}, {0.5, 3.0}});
        std::vector<double> ys(20000);
        for (auto& y : ys) {
            y = nlexit::sample_jump(stable_three_halves, x, region, gen);
            REQUIRE(region.contains(y));
            REQUIRE(std::abs(y - x) < 1.0);
        }
        const auto density = [&](double y) { return region.contains(y) ? stable_three_halves(x, y) : 0.0; };
        std::vector<double> breaks = kinks(x);
        for (const auto& p : region) {
            breaks.push_back(p.lo);
            breaks.push_back(p.hi);
        }
        CHECK(oracle::ks_statistic_density(ys, density, x - 1, x + 1, breaks) < oracle::ks_critical_1pct(ys.size()));
    }
    SUBCASE("tabulated two-point kernel") {
        nlexit::Rng gen(17);
        const auto k = position_dependent();
        const double x = 0.33;
        const IntervalSet<> region({{-1.0, 0.0}, {0.4, 2.0}});
        std::vector<double> ys(20000);
        for (auto& y : ys) y = nlexit::sample_jump(k, x, region, gen);
        std::vector<double> breaks;
        for (int j = 0; j <= 30; ++j) breaks.push_back(-1.0 + 0.1 * j);
        breaks.push_back(x - 1);
        breaks.push_back(x + 1);
        for (const auto& p : region) {
            breaks.push_back(p.lo);
            breaks.push_back(p.hi);
        }
        const auto density = [&](double y) { return region.contains(y) ? k(x, y) : 0.0; };
        CHECK(oracle::ks_statistic_density(ys, density, x - 1, x + 1, breaks) < oracle::ks_critical_1pct(ys.size()));
    }
}

TEST_CASE("sample_jump: symmetric kernel on a symmetric region has zero mean displacement") {
    nlexit::Rng gen(3);
    constexpr int n = 100000;
    const double x = 1.7;
    const IntervalSet<> region({{x - 0.6, x - 0.1}, {x + 0.1, x + 0.6}});
    double sum = 0, sq = 0;
    for (int i = 0; i < n; ++i) {
        const double d = nlexit::sample_jump(stable_half, x, region, gen) - x;
        sum += d;
        sq += d * d;
    }
    const double mean = sum / n;
    const double sd = std::sqrt(sq / n - mean * mean);
    CHECK(std::abs(mean) <= 4 * sd / std::sqrt(double(n)));
}

TEST_CASE("sample_jump fails on an isolated point") {
    nlexit::Rng gen(1);
    const IntervalSet<> far({{5.0, 6.0}});
    CHECK_THROWS_AS(nlexit::sample_jump(uniform_kernel, 0.0, far, gen), nlexit::ConfigError);
}

TEST_CASE("classify: built-in families") {
    const auto a = nlexit::classify(uniform_kernel);
    CHECK(a.activity == Activity::finite);
    CHECK(a.variation == Variation::finite);
    CHECK_FALSE(a.heuristic);

    const auto b = nlexit::classify(stable_half);
    CHECK(b.activity == Activity::infinite);
    CHECK(b.variation == Variation::finite);

    const auto c = nlexit::classify(stable_three_halves);
    CHECK(c.activity == Activity::infinite);
    CHECK(c.variation == Variation::infinite);

    const auto d = nlexit::classify(position_dependent());
    CHECK(d.activity == Activity::finite);
    CHECK(d.heuristic);
}

TEST_CASE("classify matches the truncated-integral growth test") {
    // Truncated integrals of the *unregularized* kernels over delta < |y| < 1.
    auto truncated = [](double alpha, double moment, double delta) {
        const auto f = [&](double y) { return std::pow(y, moment - 1 - alpha); };
        // geometric panels make the singular end tractable for Simpson
        double total = 0, a = delta;
        while (a < 1) {
            const double b = std::min(1.0, a * 2);
            total += oracle::integrate(f, a, b, {}, 1e-10 * std::pow(a, moment - alpha));
            a = b;
        }
        return 2 * total;
    };
    auto grows = [&](double alpha, double moment) {
        const double i1 = truncated(alpha, moment, 1e-4);
        const double i2 = truncated(alpha, moment, 1e-8);
        return i2 > 10 * i1;
    };
    for (const auto& k : {stable_half, stable_three_halves}) {
        const auto& s = std::get<nlexit::TruncatedStable<double>>(k.family());
        const auto cls = nlexit::classify(k);
        CHECK((cls.activity == Activity::infinite) == grows(s.alpha, 0));
        CHECK((cls.variation == Variation::infinite) == grows(s.alpha, 1));
    }
    // The uniform density's truncated integral is bounded by its total rate.
    const double bounded = quad_rate(uniform_kernel, 0.0, -1, -1e-8, {}) + quad_rate(uniform_kernel, 0.0, 1e-8, 1, {});
    CHECK(bounded <= 0.2 + 1e-12);
    CHECK(nlexit::classify(uniform_kernel).activity == Activity::finite);
}

TEST_CASE("decompose: symmetric and antisymmetric parts") {
    std::mt19937_64 gen(21);
    std::uniform_real_distribution<double> u(-2, 2);

    const auto sym = nlexit::decompose(stable_half);
    CHECK(sym.antisymmetric_vanishes());
    for (int t = 0; t < 500; ++t) {
        const double x = u(gen), y = u(gen);
        CHECK(sym.antisymmetric_part(x, y) == 0.0);
    }

    const double c1 = 0.3, c2 = 0.1;
    const auto asym = nlexit::decompose(two_sided(c1, c2));
    CHECK_FALSE(asym.antisymmetric_vanishes());
    CHECK(asym.symmetric_part(0.0, 0.5) == doctest::Approx((c1 + c2) / 2));
    CHECK(asym.antisymmetric_part(0.0, 0.5) == doctest::Approx((c1 - c2) / 2));
    CHECK(asym.antisymmetric_part(0.5, 0.0) == doctest::Approx(-(c1 - c2) / 2));

    for (const auto& k : {two_sided(c1, c2), position_dependent(), stable_three_halves}) {
        const auto dec = nlexit::decompose(k);
        for (int t = 0; t < 500; ++t) {
            const double x = u(gen), y = u(gen);
            const double s = dec.symmetric_part(x, y), a = dec.antisymmetric_part(x, y);
            CHECK(s + a == doctest::Approx(k(x, y)).epsilon(1e-15));
            CHECK(a == -dec.antisymmetric_part(y, x));
            CHECK(s == dec.symmetric_part(y, x));
            CHECK(s >= std::abs(a));
        }
    }
}

TEST_CASE("scaled kernel multiplies every rate") {
    for (const auto& k : {uniform_kernel, stable_half, two_sided(0.3, 0.1), position_dependent()}) {
        const auto k3 = k.scaled(3.0);
        for (double y : {-0.7, -0.2, 0.0005, 0.4, 0.9})
            CHECK(k3(0.1, 0.1 + y) == doctest::Approx(3.0 * k(0.1, 0.1 + y)).epsilon(1e-14));
    }
}
