#include <cmath>

#include "doctest.h"
#include "snlp/errors.hpp"
#include "snlp/identities.hpp"
#include "snlp/montecarlo.hpp"

using namespace snlp;

namespace {
ModelSpec bm2() { return ModelSpec::brownian(0.0, std::sqrt(2.0)); }

ProcessKind kind(ModelSpec m, RateFunction r = RateFunction::zero(), OmegaFunction o = OmegaFunction::constant(0.0),
                 Reflection refl = Reflection::None) {
    return ProcessKind{m, r, o, refl};
}

PathConfig cfg(long n, double dt = 1e-3, std::uint64_t seed = 7, int workers = 1) {
    PathConfig c;
    c.n_paths = n;
    c.dt = dt;
    c.seed = seed;
    c.workers = workers;
    return c;
}

bool agrees(const Estimate& e, double expect, double margin = 0.01) {
    return std::abs(e.mean - expect) <= 3.0 * e.std_error + margin;
}
}  // namespace

TEST_CASE("deterministic paths") {
    MonteCarlo drift(kind(ModelSpec::pure_drift(1.0)), cfg(1, 1e-3));
    auto p = drift.simulate_path(0.0, 1.0, {}, 1);
    CHECK(p.back().t == doctest::Approx(1.0));
    CHECK(p.back().state == doctest::Approx(1.0).epsilon(1e-9));

    SimDomain refl;
    refl.reflect_below = 0.0;
    MonteCarlo down(kind(ModelSpec::pure_drift(-1.0)), cfg(1, 1e-3));
    auto q = down.simulate_path(0.5, 1.0, refl, 1);
    CHECK(q.back().state == 0.0);
    CHECK(q.back().pushed == doctest::Approx(0.5).epsilon(1e-9));

    MonteCarlo refr(kind(ModelSpec::pure_drift(2.0), RateFunction::steps({{0.0, 1.0}})), cfg(1, 1e-4));
    auto r = refr.simulate_path(0.0, 1.0, {}, 1);
    CHECK(std::abs(r.back().state - 1.0) <= 2e-4);
    CHECK_THROWS_AS(ScaleFunction(ModelSpec::pure_drift(-1.0), 0.0), ConstraintError);
}

TEST_CASE("construction and trivial estimates") {
    CHECK_THROWS_AS(MonteCarlo(kind(bm2()), cfg(0)), DomainError);
    CHECK_THROWS_AS(MonteCarlo(kind(bm2()), cfg(10, -1.0)), DomainError);
    MonteCarlo mc(kind(bm2()), cfg(100));
    Estimate at = mc.exit_two_sided(2.0, 0.0, 2.0, true);
    CHECK(at.mean == 1.0);
    CHECK(at.std_error == 0.0);
    CHECK(mc.occupation(2.0, 0.5, 0.6, 0.0, 2.0).mean == 0.0);
    CHECK(mc.occupation(1.0, 3.0, 3.1, 0.0, 2.0).mean == 0.0);
    CHECK_THROWS_AS(MonteCarlo(kind(bm2()), cfg(10, 0.05)).exit_two_sided(1.0, 0.0, 2.0, true), PreconditionError);
}

TEST_CASE("Brownian two-sided exit") {
    MonteCarlo mc(kind(bm2()), cfg(20000));
    Estimate up = mc.exit_two_sided(1.0, 0.0, 2.0, true);
    CHECK(agrees(up, 0.5));
    CHECK(up.truncated_fraction == 0.0);
    CHECK(up.overshoot_exceed_fraction <= 1e-3);
    Estimate dn = mc.exit_two_sided(1.0, 0.0, 2.0, false);
    CHECK(up.mean + dn.mean == doctest::Approx(1.0));

    // zero omega through a non-constant representation is the same estimator
    MonteCarlo zero(kind(bm2(), RateFunction::zero(), OmegaFunction::sampled({0.0, 1.0}, {0.0, 0.0})), cfg(20000));
    CHECK(zero.exit_two_sided(1.0, 0.0, 2.0, true).mean == up.mean);
}

TEST_CASE("seeds and workers") {
    MonteCarlo a(kind(bm2()), cfg(4000, 1e-3, 11, 1));
    MonteCarlo b(kind(bm2()), cfg(4000, 1e-3, 11, 1));
    MonteCarlo c(kind(bm2()), cfg(4000, 1e-3, 11, 4));
    MonteCarlo c2(kind(bm2()), cfg(4000, 1e-3, 11, 4));
    Estimate ea = a.exit_two_sided(1.0, 0.0, 2.0, true);
    Estimate eb = b.exit_two_sided(1.0, 0.0, 2.0, true);
    Estimate ec = c.exit_two_sided(1.0, 0.0, 2.0, true);
    Estimate ec2 = c2.exit_two_sided(1.0, 0.0, 2.0, true);
    CHECK(ea.mean == eb.mean);
    CHECK(ea.std_error == eb.std_error);
    CHECK(ec.mean == ec2.mean);
    CHECK(std::abs(ea.mean - ec.mean) <= 3.0 * std::hypot(ea.std_error, ec.std_error));
    CHECK(worker_seed(11, 0) != worker_seed(11, 1));
    CHECK(worker_seed(11, 0) != worker_seed(12, 0));
}

TEST_CASE("reflection and killing against closed forms") {
    SimDomain refl;
    refl.reflect_below = 0.0;
    refl.upper = 1.0;
    MonteCarlo path(kind(ModelSpec::cramer_lundberg(1.0, 3.0, 1.0)), cfg(1));
    for (const auto& pt : path.simulate_path(0.2, 5.0, refl, 3)) CHECK(pt.state >= 0.0);

    ProcessKind inf = kind(bm2(), RateFunction::zero(), OmegaFunction::constant(1.0), Reflection::AtInfimum);
    MonteCarlo mi(inf, cfg(10000, 1e-4));
    CHECK(agrees(mi.reflected_exit(0.0, 1.0), 1.0 / std::cosh(1.0)));
    FluctuationSolver si(inf);
    Estimate occ = mi.reflected_occupation(0.5, 0.2, 0.3, 1.0);
    CHECK(agrees(occ, 0.1 * si.reflected_resolvent_density(0.5, 0.25, 1.0).density));

    ProcessKind sup = kind(bm2(), RateFunction::zero(), OmegaFunction::constant(1.0), Reflection::AtSupremum);
    MonteCarlo ms(sup, cfg(10000, 1e-4));
    double expect = std::cosh(0.5) - std::sinh(1.0) * std::sinh(0.5) / std::cosh(1.0);
    CHECK(agrees(ms.reflected_exit(0.5, 1.0), expect));

    ProcessKind plain = kind(bm2(), RateFunction::zero(), OmegaFunction::constant(1.0));
    MonteCarlo mp(plain, cfg(20000));
    FluctuationSolver sp(plain);
    double dens = sp.resolvent_density(1.0, 0.5, 0.0, 2.0).density;
    CHECK(agrees(mp.occupation(1.0, 0.45, 0.55, 0.0, 2.0), 0.1 * dens));
}

TEST_CASE("supremum reflection discounts at the level of the reflected-below process") {
    // omega read at L = a - Yhat; the analytic side is the omega-killed supremum formula
    OmegaFunction om = OmegaFunction::steps(0.5, {{0.5, 1.5}});
    ProcessKind sup = kind(ModelSpec::brownian(0.5, 1.0), RateFunction::zero(), om, Reflection::AtSupremum);
    SolverOptions o;
    o.n_per_unit = 1024;
    o.upper = 1.0;
    FluctuationSolver s(sup, o);
    MonteCarlo mc(sup, cfg(10000, 1e-4));
    double analytic = s.reflected_exit(0.25, 1.0);
    CHECK(agrees(mc.reflected_exit(0.25, 1.0), analytic));
}
