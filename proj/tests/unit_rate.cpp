#include <cmath>

#include "doctest.h"
#include "snlp/errors.hpp"
#include "snlp/rate.hpp"

using namespace snlp;

TEST_CASE("steps rate") {
    RateFunction r = RateFunction::steps({{1.0, 0.3}, {2.0, 0.4}});
    CHECK(r.d_prime() == 1.0);
    CHECK(r.value(1.0) == 0.0);
    CHECK(r.right_limit(1.0) == doctest::Approx(0.3));
    CHECK(r.value(1.5) == doctest::Approx(0.3));
    CHECK(r.value(5.0) == doctest::Approx(0.7));
    CHECK(r.sup() == doctest::Approx(0.7));
    CHECK(r.jumps() == std::vector<double>{1.0, 2.0});
    CHECK(r.deltas_increasing());
    CHECK_FALSE(RateFunction::steps({{1.0, 0.5}, {2.0, 0.4}}).deltas_increasing());
    CHECK_THROWS_AS(RateFunction::steps({{1.0, 0.0}}), DomainError);
    CHECK_THROWS_AS(RateFunction::steps({{2.0, 0.1}, {1.0, 0.1}}), DomainError);

    NodeSamples s = r.sample(Grid(0.0, 2.0, 4));
    CHECK(s.left[2] == 0.0);
    CHECK(s.right[2] == doctest::Approx(0.3));
    CHECK(s.left[4] == doctest::Approx(0.3));
    CHECK(s.right[4] == doctest::Approx(0.7));
}

TEST_CASE("sampled rate and constraint") {
    RateFunction r = RateFunction::sampled({0.0, 1.0, 2.0}, {0.0, 0.5, 0.5});
    CHECK(r.value(0.5) == doctest::Approx(0.25));
    CHECK(r.value(-3.0) == 0.0);
    CHECK(r.value(9.0) == 0.5);
    CHECK(r.jumps().empty());
    CHECK_THROWS_AS(RateFunction::sampled({0.0, 1.0}, {0.1, 0.2}), DomainError);
    CHECK_THROWS_AS(RateFunction::sampled({0.0, 1.0}, {0.0, -0.2}), DomainError);
    CHECK_THROWS_AS(RateFunction::sampled({0.0, 0.0}, {0.0, 0.2}), DomainError);

    ModelSpec cl = ModelSpec::cramer_lundberg(1.0, 1.0, 1.0);
    CHECK_NOTHROW(r.check_against(cl));
    CHECK_THROWS_AS(RateFunction::steps({{0.0, 1.0}}).check_against(cl), ConstraintError);
    CHECK_NOTHROW(RateFunction::steps({{0.0, 5.0}}).check_against(ModelSpec::brownian(0.0, 1.0)));
    CHECK(xi(cl, 0.0, r, 1.0) == doctest::Approx(0.5));
    CHECK(xi(ModelSpec::brownian(0.0, 1.0), 0.0, r, 1.0) == 1.0);
}

TEST_CASE("omega") {
    OmegaFunction c = OmegaFunction::constant(2.0);
    CHECK(c.is_constant());
    CHECK(c.value(-5.0) == 2.0);
    CHECK_THROWS_AS(OmegaFunction::constant(-1.0), DomainError);

    OmegaFunction s = OmegaFunction::steps(1.0, {{1.0, 1.0}, {2.0, -1.5}});
    CHECK_FALSE(s.is_constant());
    CHECK(s.value(1.0) == 1.0);
    CHECK(s.right_limit(1.0) == 2.0);
    CHECK(s.value(3.0) == doctest::Approx(0.5));
    CHECK(s.min_value() == doctest::Approx(0.5));
    CHECK(s.max_value() == 2.0);
    CHECK_THROWS_AS(OmegaFunction::steps(1.0, {{1.0, -2.0}}), DomainError);

    OmegaFunction t = s.with_left_tail(3.0);
    CHECK(t.value(-1.0) == 3.0);
    CHECK(t.value(0.0) == 3.0);
    CHECK(t.right_limit(0.0) == 1.0);
    CHECK(t.jumps().front() == 0.0);
    CHECK(t.max_value() == 3.0);
    CHECK(OmegaFunction::constant(1.0).with_left_tail(1.0).jumps().empty());

    OmegaFunction sm = OmegaFunction::sampled({0.0, 2.0}, {1.0, 3.0});
    CHECK(sm.value(1.0) == doctest::Approx(2.0));
    CHECK_THROWS_AS(OmegaFunction::sampled({0.0, 1.0}, {1.0, -0.1}), DomainError);
}

TEST_CASE("misaligned jumps") {
    Grid g(0.0, 1.0, 8);
    auto bad = misaligned_jumps(g, {0.25, 0.3, 0.5});
    REQUIRE(bad.size() == 1);
    CHECK(bad[0] == 0.3);
}
