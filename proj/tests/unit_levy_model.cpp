#include <cmath>
#include <vector>

#include "doctest.h"
#include "oracles.hpp"
#include "snlp/errors.hpp"
#include "snlp/levy_model.hpp"

using namespace snlp;

namespace {
ModelSpec bm2() { return ModelSpec::brownian(0.0, std::sqrt(2.0)); }
ModelSpec cl() { return ModelSpec::cramer_lundberg(2.0, 1.0, 1.0); }
ModelSpec bmcp() { return ModelSpec(0.5, 0.8, CompoundPoissonExp{1.5, 2.0}); }
oracle::Params params(const ModelSpec& m) { return {m.mu(), m.sigma(), m.jump_rate(), m.jump_alpha()}; }
}  // namespace

TEST_CASE("laplace exponent values") {
    CHECK(laplace_exponent(bm2(), 1.0) == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(laplace_exponent(cl(), 0.0) == 0.0);
    CHECK(laplace_exponent(cl(), 1.0) == doctest::Approx(1.5).epsilon(1e-15));
    CHECK_THROWS_AS(laplace_exponent(cl(), -0.1), DomainError);
    for (const auto& m : {bm2(), cl(), bmcp()})
        for (double t : {0.1, 0.7, 3.0}) CHECK(laplace_exponent(m, t) == doctest::Approx(oracle::psi(params(m), t)));
}

TEST_CASE("variation class and constraints") {
    CHECK(bm2().variation_class() == VariationClass::Unbounded);
    CHECK(cl().variation_class() == VariationClass::Bounded);
    CHECK_THROWS_AS(ModelSpec::cramer_lundberg(-1.0, 1.0, 1.0), ConstraintError);
    CHECK_THROWS_AS(ModelSpec(1.0, -1.0), DomainError);
    CHECK_THROWS_AS(ModelSpec::cramer_lundberg(1.0, 0.0, 1.0), DomainError);
}

TEST_CASE("phi inverse") {
    CHECK(phi_inverse(bm2(), 4.0).value == doctest::Approx(2.0).epsilon(1e-14));
    CHECK(phi_inverse(bm2(), 0.0).value == 0.0);
    CHECK(phi_inverse(cl(), 0.0).value == 0.0);
    // negative drift: Phi(0) > 0
    ModelSpec neg = ModelSpec::brownian(-1.0, 1.0);
    CHECK(phi_inverse(neg, 0.0).value == doctest::Approx(2.0).epsilon(1e-13));
    for (const auto& m : {bm2(), cl(), bmcp(), neg, ModelSpec::cramer_lundberg(1.0, 2.0, 1.0)}) {
        for (double q : {0.0, 0.1, 1.0, 10.0}) {
            PhiValue p = phi_inverse(m, q);
            CHECK(std::abs(laplace_exponent(m, p.value) - q) <= 1e-10 * std::max(1.0, q));
            CHECK(p.residual <= 1e-12 * std::max(1.0, q));
            // largest root: psi > q just above
            CHECK(laplace_exponent(m, p.value + 1e-6) > q);
        }
    }
}

TEST_CASE("base scale function closed forms") {
    CHECK(base_scale_w(cl(), 1.0, -0.5) == 0.0);
    CHECK(base_scale_w(cl(), 1.0, 0.0) == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(base_scale_w(bm2(), 1.0, 1.0) == doctest::Approx(std::sinh(1.0)).epsilon(1e-13));
    CHECK(base_scale_z(bm2(), 3.0, -1.0) == 1.0);
    CHECK(base_scale_z(cl(), 0.0, 7.0) == 1.0);
    CHECK(base_scale_z(bm2(), 1.0, 1.0) == doctest::Approx(std::cosh(1.0)).epsilon(1e-13));
    // zero-mean Brownian at q = 0: W(x) = x (double root)
    CHECK(base_scale_w(bm2(), 0.0, 0.7) == doctest::Approx(0.7).epsilon(1e-13));
    CHECK(base_scale_w_prime(bm2(), 0.0, 0.0) == doctest::Approx(1.0).epsilon(1e-13));
    // Cramer-Lundberg ruin-based closed form at q = 0
    for (double x : {0.0, 0.3, 2.0, 9.0})
        CHECK(base_scale_w(cl(), 0.0, x) == doctest::Approx(oracle::cl_w0(2.0, 1.0, 1.0, x)).epsilon(1e-13));
    // right derivative at zero
    for (double q : {0.0, 0.5, 2.0})
        CHECK(base_scale_w_prime(cl(), q, 0.0) == doctest::Approx((1.0 + q) / 4.0).epsilon(1e-12));
    CHECK(base_scale_w_prime(bmcp(), 1.0, 0.0) == doctest::Approx(2.0 / 0.64).epsilon(1e-12));
    // zero-mean CL at q = 0 has a double root at 0: W(0) = 1/c
    ModelSpec cl0 = ModelSpec::cramer_lundberg(1.0, 1.0, 1.0);
    CHECK(base_scale_w(cl0, 0.0, 0.0) == doctest::Approx(1.0));
    // W(x) = (1 + alpha x) / c here; Laplace transform alpha(alpha + theta) / (c alpha theta^2)
    CHECK(base_scale_w(cl0, 0.0, 2.0) == doctest::Approx(3.0).epsilon(1e-12));
}

TEST_CASE("laplace residual oracle") {
    for (const auto& m : {bm2(), cl(), bmcp(), ModelSpec::brownian(0.3, 0.5)}) {
        for (double q : {0.0, 1.0}) {
            ScaleFunction sf(m, q);
            double phi = sf.phi();
            for (double dtheta : {1.0, 1.5, 2.5, 4.0, 6.0}) {
                double theta = phi + dtheta;
                // tail e^{-(theta - phi) X} W-scale below 1e-12
                double X = std::ceil(30.0 / dtheta) + 5.0;
                double lt = oracle::laplace([&](double x) { return sf.w(x); }, theta, X);
                double ref = 1.0 / (oracle::psi(params(m), theta) - q);
                CHECK(std::abs(lt - ref) / std::abs(ref) <= 1e-6);
            }
        }
    }
}

TEST_CASE("shape properties") {
    for (const auto& m : {bm2(), cl(), bmcp()}) {
        for (double q : {0.0, 1.0}) {
            ScaleFunction sf(m, q);
            CHECK(sf.z(0.0) == 1.0);
            double pw = sf.w(0.0), pz = sf.z(0.0);
            for (int i = 1; i <= 1000; ++i) {
                double x = 10.0 * i / 1000.0;
                double w = sf.w(x), z = sf.z(x);
                CHECK(w >= 0.0);
                CHECK(w >= pw);
                CHECK(z >= pz);
                pw = w;
                pz = z;
            }
            // right derivative against central differences
            for (double x : {0.2, 1.0, 3.0}) {
                double e = 1e-4;
                double fd = (sf.w(x + e) - sf.w(x - e)) / (2 * e);
                CHECK(sf.w_prime(x) == doctest::Approx(fd).epsilon(1e-6));
            }
        }
    }
}

TEST_CASE("asymptotic form") {
    CHECK(asymptotic_w(bm2(), 1.0) == doctest::Approx(0.5));
    CHECK_THROWS_AS(asymptotic_w(bm2(), 0.0), UndefinedLimitError);
    // finite-difference psi'
    double e = 1e-6;
    double fd = (oracle::psi(params(cl()), e) - oracle::psi(params(cl()), 0.0)) / e;
    CHECK(asymptotic_w(cl(), 0.0) == doctest::Approx(1.0 / fd).epsilon(1e-5));
    ScaleFunction sf(bm2(), 1.0);
    // continuity across the switch Phi x = 30 and stability far out
    CHECK(sf.w(30.0 - 1e-12) == doctest::Approx(sf.w(30.0 + 1e-12)).epsilon(1e-10));
    CHECK(sf.w(100.0) == doctest::Approx(std::sinh(100.0)).epsilon(1e-13));
    CHECK(sf.w_scaled(1000.0) == doctest::Approx(0.5).epsilon(1e-13));
}

TEST_CASE("drift change") {
    ModelSpec m1 = drift_changed(bm2(), 1.0);
    CHECK(laplace_exponent(m1, 2.0) == doctest::Approx(4.0 - 2.0));
    CHECK(drift_changed(cl(), 0.5).drift() == doctest::Approx(1.5));
    CHECK_THROWS_AS(drift_changed(cl(), 2.5), ConstraintError);
    ModelSpec twice = drift_changed(drift_changed(bmcp(), 0.2), 0.3);
    for (double t : {0.0, 0.5, 1.7, 4.0})
        CHECK(std::abs(laplace_exponent(twice, t) - (laplace_exponent(bmcp(), t) - 0.5 * t)) <= 1e-14 * (1 + t * t));
}
