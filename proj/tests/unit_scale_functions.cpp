#include <cmath>
#include <vector>

#include "doctest.h"
#include "oracles.hpp"
#include "snlp/errors.hpp"
#include "snlp/scale_functions.hpp"

using namespace snlp;

namespace {
ModelSpec bm2() { return ModelSpec::brownian(0.0, std::sqrt(2.0)); }
ModelSpec cl() { return ModelSpec::cramer_lundberg(2.0, 1.0, 1.0); }

double sup_diff(const ScaleTable& a, const ScaleTable& b) {
    double e = 0.0;
    for (int i = 0; i < a.grid().size(); ++i) e = std::max(e, std::abs(a.table.values[i] - b.table.values[i]));
    return e;
}

template <class F>
double sup_vs(const ScaleTable& a, F f) {
    double e = 0.0;
    for (int i = 0; i < a.grid().size(); ++i) e = std::max(e, std::abs(a.table.values[i] - f(a.grid().node(i))));
    return e;
}

bool nondecreasing(const ScaleTable& t, double from = -1e300) {
    for (int i = 1; i < t.grid().size(); ++i)
        if (t.grid().node(i) > from && t.table.values[i] < t.table.values[i - 1] - 1e-12) return false;
    return true;
}
}  // namespace

TEST_CASE("xi") {
    RateFunction one = RateFunction::steps({{0.0, 1.0}});
    CHECK(xi(bm2(), 1.0, one, 3.0) == 1.0);
    CHECK(xi(cl(), 1.0, one, 1.0) == doctest::Approx(0.5));
    CHECK(xi(cl(), 1.0, one, -2.0) == 1.0);
    CHECK_THROWS_AS(level_scale(cl(), 1.0, RateFunction::steps({{0.0, 2.0}}), Grid(0, 1, 10)), ConstraintError);
}

TEST_CASE("level_scale reductions and anchors") {
    Grid g = Grid::with_density(0.0, 4.0, 512);
    for (const auto& m : {bm2(), cl()}) {
        ScaleFunction sf(m, 1.0);
        ScalePair p = level_scale(m, 1.0, RateFunction::zero(), g);
        CHECK(sup_vs(p.w, [&](double x) { return sf.w(x); }) < 1e-12 * sf.w(4.0));
        CHECK(sup_vs(p.z, [&](double x) { return sf.z(x); }) < 1e-12 * sf.z(4.0));
        CHECK(p.w.value(0.0) == sf.w0());
        CHECK(p.z.value(0.0) == 1.0);
        CHECK(p.w.right_derivative(0.0) == doctest::Approx(sf.w_prime0()));
        CHECK(p.w.value(-1.0) == 0.0);
        CHECK(p.z.value(-1.0) == 1.0);
    }
    ScalePair z0 = level_scale(bm2(), 0.0, RateFunction::zero(), g);
    for (double v : z0.z.table.values) CHECK(v == 1.0);
    CHECK(level_scale(bm2(), 1.0, RateFunction::zero(), g).w.value(1.0) == doctest::Approx(std::sinh(1.0)).epsilon(1e-12));
}

TEST_CASE("level_scale against the refracted quadrature oracle") {
    // w(x) = W(x) + delta int_b^x W_1(x-y) W'(y) dy, z(x) = Z(x) + q delta int_b^x W_1(x-y) W(y) dy
    const double q = 0.5, b = 1.0, delta = 0.5;
    for (const auto& m : {cl(), bm2()}) {
        ScaleFunction W(m, q), W1(drift_changed(m, delta), q);
        Grid g = Grid::with_density(0.0, 3.0, 1024);
        ScalePair p = level_scale(m, q, RateFunction::steps({{b, delta}}), g);
        for (double x : {0.5, 1.0, 1.3, 2.0, 3.0}) {
            double w = W.w(x), z = W.z(x);
            if (x > b) {
                w += delta * oracle::integrate([&](double y) { return W1.w(x - y) * W.w_prime(y); }, b, x);
                z += q * delta * oracle::integrate([&](double y) { return W1.w(x - y) * W.w(y); }, b, x);
            }
            CHECK(p.w.value(x) == doctest::Approx(w).epsilon(1e-6));
            CHECK(p.z.value(x) == doctest::Approx(z).epsilon(1e-6));
        }
        CHECK(nondecreasing(p.w));
        CHECK(nondecreasing(p.z));
        // right derivative against differences of the table
        int i = g.node_index(2.0).value();
        double fd = (p.w.table.values[i + 1] - p.w.table.values[i - 1]) / (2 * g.h());
        CHECK(p.w.right_derivative(2.0) == doctest::Approx(fd).epsilon(1e-5));
    }
}

TEST_CASE("multi-refracted recursion") {
    Grid g = Grid::with_density(0.0, 3.0, 4096);
    for (const auto& m : {bm2(), cl()}) {
        ScaleFunction sf(m, 1.0);
        ScalePair k0 = multi_refracted_scale(m, 1.0, RateFunction::zero(), g);
        CHECK(sup_vs(k0.w, [&](double x) { return sf.w(x); }) < 1e-12 * sf.w(3.0));
        CHECK(sup_vs(k0.z, [&](double x) { return sf.z(x); }) < 1e-12 * sf.z(3.0));
        for (auto steps : {RateFunction::steps({{1.0, 0.5}}), RateFunction::steps({{1.0, 0.3}, {2.0, 0.4}}),
                           RateFunction::steps({{0.5, 0.2}, {1.5, 0.3}, {2.25, 0.6}})}) {
            ScalePair rec = multi_refracted_scale(m, 1.0, steps, g);
            ScalePair dir = level_scale(m, 1.0, steps, g);
            CHECK(sup_diff(rec.w, dir.w) <= 1e-6);
            CHECK(sup_diff(rec.z, dir.z) <= 1e-6);
        }
    }
    CHECK_THROWS_AS(multi_refracted_scale(cl(), 1.0, RateFunction::steps({{1.0, 1.5}, {2.0, 0.6}}), g), ConstraintError);
    CHECK_THROWS_AS(multi_refracted_scale(cl(), 1.0, RateFunction::steps({{1.0001, 0.5}}), g), PreconditionError);
}

TEST_CASE("closed form above the top level") {
    RateFunction steps = RateFunction::steps({{1.0, 0.3}, {2.0, 0.4}});
    for (const auto& m : {bm2(), cl()}) {
        double y = 2.5;
        Grid g = Grid::with_density(y, y + 2.0, 1024);
        ScalePair rec = multi_refracted_scale(m, 1.0, steps, g);
        for (int i = 0; i < g.size(); i += 37) {
            double x = g.node(i);
            CHECK(std::abs(rec.w.value(x) - lemma14_closed_form(m, 1.0, steps, x, y)) <= 1e-6);
        }
        CHECK(lemma14_closed_form(m, 1.0, steps, 2.0, 2.5) == 0.0);
        CHECK_THROWS_AS(lemma14_closed_form(m, 1.0, steps, 3.0, 1.5), PreconditionError);
    }
    CHECK(lemma14_closed_form(cl(), 1.0, RateFunction::zero(), 3.0, 1.0) == doctest::Approx(base_scale_w(cl(), 1.0, 2.0)));
}

TEST_CASE("u function") {
    Grid g = Grid::with_density(0.0, 2.0, 1024);
    ScaleTable u0 = u_function(cl(), 1.0, RateFunction::zero(), g);
    double phi = phi_inverse(cl(), 1.0).value;
    CHECK(sup_vs(u0, [&](double x) { return std::exp(phi * x); }) < 1e-12 * std::exp(2 * phi));
    CHECK(u0.value(-1.0) == doctest::Approx(std::exp(-phi)));

    // u(x) = lim W(x; -gamma) / W(gamma), gamma = 8
    RateFunction r = RateFunction::steps({{0.0, 0.5}});
    ScaleTable u = u_function(bm2(), 1.0, r, g);
    CHECK(u.value(0.0) == 1.0);
    const double gamma = 8.0;
    ScalePair shifted = level_scale(bm2(), 1.0, r, Grid::with_density(-gamma, 1.5, 1024));
    double lim = shifted.w.value(1.0) / std::sinh(gamma);
    CHECK(u.value(1.0) == doctest::Approx(lim).epsilon(1e-6));
    CHECK_THROWS_AS(u_function(bm2(), 1.0, RateFunction::steps({{0.5, 0.5}}), Grid(1.0, 2.0, 10)), PreconditionError);
}

TEST_CASE("omega-killed reductions") {
    Grid g = Grid::with_density(0.0, 3.0, 512);
    RateFunction r = RateFunction::steps({{0.5, 0.25}});
    for (const auto& m : {bm2(), cl()}) {
        ScalePair lvl = level_scale(m, 1.0, r, g);
        for (double split : {0.0, 1.0, 2.5}) {
            ScalePair om = omega_level_scale(m, OmegaFunction::constant(1.0), r, g, split);
            CHECK(sup_diff(om.w, lvl.w) <= 5e-6);
            CHECK(sup_diff(om.z, lvl.z) <= 5e-6);
            CHECK(om.w.family == Family::OmegaLevelW);
            CHECK(om.z.value(0.0) == 1.0);
        }
        ScaleFunction sf(m, 1.0);
        ScalePair cls = omega_level_scale(m, OmegaFunction::constant(1.0), RateFunction::zero(), g, 0.0);
        CHECK(cls.w.family == Family::OmegaW);
        CHECK(sup_vs(cls.w, [&](double x) { return sf.w(x); }) <= 5e-6);
        CHECK(sup_vs(cls.z, [&](double x) { return sf.z(x); }) <= 5e-6);
    }
}

TEST_CASE("omega-level split invariance and combined-form oracle") {
    OmegaFunction om = OmegaFunction::steps(1.0, {{1.0, 0.5}});
    RateFunction r = RateFunction::steps({{0.5, 0.25}});
    Grid g = Grid::with_density(0.0, 3.0, 1024);
    for (const auto& m : {bm2(), cl()}) {
        ScalePair a = omega_level_scale(m, om, r, g, 0.0);
        for (double split : {om.min_value(), om.max_value()}) {
            ScalePair b = omega_level_scale(m, om, r, g, split);
            CHECK(sup_diff(a.w, b.w) <= 1e-7);
            CHECK(sup_diff(a.z, b.z) <= 1e-7);
        }
        CHECK(nondecreasing(a.w));
        CHECK(nondecreasing(a.z));
        CHECK(a.z.value(0.0) == 1.0);
    }
    // smooth phi, omega: compare against the jointly marched combined form, Richardson-refined
    RateFunction rs = RateFunction::sampled({0.0, 0.5, 2.0}, {0.0, 0.1, 0.4});
    OmegaFunction os = OmegaFunction::sampled({0.0, 3.0}, {0.5, 2.0});
    for (const auto& m : {bm2(), cl()}) {
        ScaleFunction sf(m, 0.0);
        auto run = [&](int n, bool zfam) {
            auto h0 = [&](double x) { return zfam ? 1.0 : sf.w(x); };
            auto h0p = [&](double x) { return zfam ? 0.0 : sf.w_prime(x); };
            return oracle::combined_march(
                0.0, 2.0, n, 0.0, [&](double x) { return sf.w(x); }, [&](double x) { return sf.w_prime(x); }, h0, h0p,
                [&](double x) { return rs.value(x); }, [&](double x) { return os.value(x); });
        };
        ScalePair prod = omega_level_scale(m, os, rs, Grid::with_density(0.0, 2.0, 1024), 0.0);
        for (bool zfam : {false, true}) {
            auto fine = run(2048, zfam), coarse = run(1024, zfam);
            double err = 0.0;
            for (int i = 0; i <= 1024; i += 16) {
                double ref = (4.0 * fine.F[2 * i] - coarse.F[i]) / 3.0;
                err = std::max(err, std::abs((zfam ? prod.z : prod.w).value(coarse.x[i]) - ref));
            }
            CHECK(err <= 1e-6);
        }
    }
}

TEST_CASE("omega_h") {
    Grid g = Grid::with_density(0.0, 2.0, 512);
    double p = 1.0;
    CHECK_THROWS_AS(omega_h(bm2(), OmegaFunction::constant(1.0), RateFunction::zero(), g), PreconditionError);
    OmegaFunction flat = OmegaFunction::constant(p).with_left_tail(p);
    double phip = phi_inverse(bm2(), p).value;
    ScaleTable h0 = omega_h(bm2(), flat, RateFunction::zero(), g);
    CHECK(h0.family == Family::OmegaH);
    CHECK(sup_vs(h0, [&](double x) { return std::exp(phip * x); }) <= 1e-9);
    CHECK(h0.value(-0.5) == doctest::Approx(std::exp(-0.5 * phip)));
    RateFunction r = RateFunction::steps({{0.0, 0.5}});
    ScaleTable hu = omega_h(cl(), flat, r, g);
    ScaleTable u = u_function(cl(), p, r, g);
    CHECK(sup_diff(hu, u) <= 5e-6);
    CHECK(hu.value(0.0) == 1.0);

    // phi = 0, omega = 1 + 1{x>0}: independent generic solve of H = e^{Phi x} + int W(x-y)(omega - p) H dy
    OmegaFunction om = OmegaFunction::steps(1.0, {{0.0, 1.0}}).with_left_tail(1.0);
    ScaleFunction sf(bm2(), p);
    ScaleTable H = omega_h(bm2(), om, RateFunction::zero(), Grid::with_density(0.0, 2.0, 1024));
    auto solve = [&](int n) {
        return solve_marching({Grid(0.0, 2.0, n), [&](double x, double y) { return sf.w(x - y) * 1.0; },
                               [&](double x) { return std::exp(phip * x); }});
    };
    SolutionTable f = solve(4096), c = solve(2048);
    for (int i = 0; i <= 2048; i += 64) {
        double ref = (4.0 * f.values[2 * i] - c.values[i]) / 3.0;
        CHECK(H.value(c.grid.node(i)) == doctest::Approx(ref).epsilon(1e-8));
    }
    CHECK(nondecreasing(H));
}

TEST_CASE("derived constants") {
    Grid g = Grid::with_density(0.0, 8.0, 128);
    ScalePair zm = level_scale(bm2(), 0.0, RateFunction::zero(), g);
    DerivedConstants c = derived_constants({&zm.w, &zm.z, &zm.w});
    REQUIRE(c.C_q);
    CHECK(c.C_q->value == doctest::Approx(1.0 / 8.0));
    CHECK_FALSE(c.C_q->converged);
    CHECK_THROWS_AS(require_converged(*c.C_q), ConvergenceError);
    CHECK(c.c_q->value == 1.0);
    CHECK(c.c_q->converged);

    ScalePair one = level_scale(bm2(), 1.0, RateFunction::zero(), g);
    TailConstant C1 = tail_ratio("C_q", one.z, one.w);
    CHECK(C1.converged);
    CHECK(require_converged(C1) == doctest::Approx(1.0).epsilon(1e-6));
}
