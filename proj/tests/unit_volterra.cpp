#include <cmath>
#include <vector>

#include "doctest.h"
#include "snlp/errors.hpp"
#include "snlp/volterra.hpp"

using namespace snlp;

TEST_CASE("grid") {
    Grid g(0.0, 1.0, 4);
    CHECK(g.h() == 0.25);
    CHECK(g.node(4) == 1.0);
    CHECK(g.node_index(0.5).value() == 2);
    CHECK_FALSE(g.node_index(0.3).has_value());
    CHECK_THROWS_AS(Grid(1.0, 1.0, 3), DomainError);
    CHECK_THROWS_AS(Grid(0.0, 1.0, 0), DomainError);
    CHECK(Grid::with_density(0.0, 4.0, 4096).n() == 16384);
}

TEST_CASE("marching: zero kernel returns forcing") {
    VolterraProblem p{Grid(0, 1, 100), [](double, double) { return 0.0; }, [](double x) { return x * x; }};
    auto t = solve_marching(p);
    for (int i = 0; i <= 100; ++i) CHECK(t.values[i] == p.forcing(p.grid.node(i)));
}

TEST_CASE("marching: exponential benchmark and order") {
    auto err = [](int n) {
        VolterraProblem p{Grid(0, 1, n), [](double, double) { return 1.0; }, [](double) { return 1.0; }};
        return std::abs(solve_marching(p).values.back() - std::exp(1.0));
    };
    CHECK(err(1000) < 1e-5);
    double e0 = err(100);
    for (int k = 1; k <= 3; ++k) {
        double e1 = err(100 << k);
        double ratio = e0 / e1;
        CHECK(ratio >= 3.5);
        CHECK(ratio <= 4.5);
        CHECK(std::log2(ratio) >= 1.9);
        e0 = e1;
    }
}

TEST_CASE("marching: step-size error") {
    VolterraProblem p{Grid(0, 1, 2), [](double, double) { return 10.0; }, [](double) { return 1.0; }};
    CHECK_THROWS_AS(solve_marching(p), StepSizeError);
}

TEST_CASE("neumann") {
    VolterraProblem zero{Grid(0, 1, 50), [](double, double) { return 0.0; }, [](double x) { return std::sin(x); }};
    auto z = solve_neumann(zero, 10, 1e-10);
    CHECK(z.iterations == 1);
    CHECK(z.values[7] == std::sin(zero.grid.node(7)));

    VolterraProblem one{Grid(0, 1, 1000), [](double, double) { return 1.0; }, [](double) { return 1.0; }};
    auto a = solve_neumann(one, 200, 1e-10);
    auto b = solve_marching(one);
    CHECK(std::abs(a.values.back() - b.values.back()) < 1e-8);
    CHECK(a.method == SolveMethod::Neumann);

    // sup|K| (a - d) = 0.5
    VolterraProblem half{Grid(0, 1, 200), [](double x, double y) { return 0.5 * std::cos(x - y); },
                         [](double) { return 1.0; }};
    double tol = 1e-10;
    auto c = solve_neumann(half, 200, tol);
    CHECK(c.iterations <= static_cast<int>(std::ceil(std::log(tol) / std::log(0.5))) + 1);
    auto m = solve_marching(half);
    double sup = 0;
    for (int i = 0; i <= 200; ++i) sup = std::max(sup, std::abs(c.values[i] - m.values[i]));
    CHECK(sup <= 10 * tol);

    VolterraProblem big{Grid(0, 1, 20), [](double, double) { return 50.0; }, [](double) { return 1.0; }};
    CHECK_THROWS_AS(solve_neumann(big, 3, 1e-12), IterationError);
}

TEST_CASE("lower triangularity and linearity") {
    Grid g(0, 2, 300);
    auto k1 = [](double x, double y) { return std::exp(-(x - y)); };
    auto k2 = [&](double x, double y) { return y > x ? 1e6 * std::sin(x * y) : k1(x, y); };
    auto g1 = [](double x) { return std::cos(x); };
    auto g2 = [](double x) { return x * x - 1.0; };
    auto a = solve_marching({g, k1, g1});
    auto b = solve_marching({g, k2, g1});
    CHECK(a.values == b.values);
    auto c = solve_marching({g, k1, g2});
    auto d = solve_marching({g, k1, [&](double x) { return 2.0 * g1(x) - 3.0 * g2(x); }});
    for (int i = 0; i <= 300; ++i)
        CHECK(std::abs(d.values[i] - (2.0 * a.values[i] - 3.0 * c.values[i])) <= 1e-13 * (1 + std::abs(d.values[i])));
}

TEST_CASE("integrate_table") {
    Grid g(0, 1, 1000);
    auto ones = integrate_samples(g, std::vector<double>(1001, 1.0), 0.0);
    for (int i = 0; i <= 1000; ++i) CHECK(ones.values[i] == doctest::Approx(g.node(i)).epsilon(1e-13));
    std::vector<double> ch(1001);
    for (int i = 0; i <= 1000; ++i) ch[i] = std::cosh(g.node(i));
    CHECK(std::abs(integrate_samples(g, ch, 0.0).values.back() - std::sinh(1.0)) < 1e-6);
    auto single = integrate_samples(Grid(0, 2, 1), {1.0, 3.0}, 5.0);
    CHECK(single.values[1] == doctest::Approx(5.0 + 4.0));
    // one-sided limits: a unit jump at x = 0.5 integrates exactly
    SolutionTable step{Grid(0, 1, 2), {0.0, 1.0, 1.0}, {0.0, 0.0, 1.0}, SolveMethod::Quadrature, 0};
    CHECK(integrate_table(step, 0.0).values.back() == doctest::Approx(0.5));
}

TEST_CASE("convolution marching matches generic marching") {
    Grid g(0, 2, 400);
    const int n = g.n();
    std::vector<double> k(n + 1), a(n + 1), b(n + 1), f(n + 1);
    for (int i = 0; i <= n; ++i) {
        double x = g.node(i);
        k[i] = std::exp(-0.7 * i * g.h());
        a[i] = 1.0 / (1.0 + 0.1 * x);
        b[i] = 0.3 + x;
        f[i] = std::cos(x);
    }
    auto conv = solve_convolution({g, k, NodeSamples::continuous(a), NodeSamples::continuous(b), NodeSamples::continuous(f)});
    // same equation as u = A g + int A(x) k(x-y) B(y) u(y) dy
    auto gen = solve_marching({g,
                               [](double x, double y) { return std::exp(-0.7 * (x - y)) * (0.3 + y) / (1.0 + 0.1 * x); },
                               [](double x) { return std::cos(x) / (1.0 + 0.1 * x); }});
    for (int i = 0; i <= n; ++i) CHECK(conv.values[i] == doctest::Approx(gen.values[i]).epsilon(1e-12));
    CHECK(conv.left_limits.empty());
}

TEST_CASE("table interpolation with one-sided limits") {
    SolutionTable t{Grid(0, 1, 2), {0.0, 2.0, 3.0}, {0.0, 1.0, 3.0}, SolveMethod::Quadrature, 0};
    CHECK(t.value_at(0.5) == 2.0);
    CHECK(t.left_value_at(0.5) == 1.0);
    CHECK(t.value_at(0.25) == doctest::Approx(0.5));
    CHECK(t.value_at(0.75) == doctest::Approx(2.5));
    CHECK_THROWS_AS(t.value_at(1.5), DomainError);
}
