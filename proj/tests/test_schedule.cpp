#include <cmath>

#include "alf/schedule.hpp"
#include "doctest.h"

using namespace alf;

TEST_CASE("two-step schedule oracle") {
    NoiseSchedule s = make_schedule(2, 0.1, 0.2);
    REQUIRE(s.betas.size() == 2);
    CHECK(s.betas[0] == doctest::Approx(0.1));
    CHECK(s.betas[1] == doctest::Approx(0.2));
    CHECK(s.alpha(0) == doctest::Approx(1.0));
    CHECK(s.alpha(1) == doctest::Approx(0.9));
    CHECK(s.alpha(2) == doctest::Approx(0.72));
}

TEST_CASE("default training schedule properties") {
    NoiseSchedule s = make_schedule(1000, 1e-4, 0.02);
    s.validate();
    CHECK(s.betas.front() == doctest::Approx(1e-4));
    CHECK(s.betas.back() == doctest::Approx(0.02));
    // nearly all signal destroyed by the last step
    CHECK(s.alpha(1000) < 0.01);
    for (int t = 1; t <= 1000; ++t) {
        CHECK(s.alpha(t) < s.alpha(t - 1));
        if (t > 1) CHECK(s.beta(t) > s.beta(t - 1));
    }
}

TEST_CASE("schedule argument and index validation") {
    CHECK_THROWS_AS(make_schedule(0, 1e-4, 0.02), ConfigError);
    CHECK_THROWS_AS(make_schedule(10, 0.02, 1e-4), ConfigError);
    CHECK_THROWS_AS(make_schedule(10, 0.0, 0.5), ConfigError);
    CHECK_THROWS_AS(make_schedule(10, 0.1, 1.0), ConfigError);

    NoiseSchedule s = make_schedule(10, 1e-4, 0.02);
    CHECK_THROWS_AS(s.alpha(-1), ShapeError);
    CHECK_THROWS_AS(s.alpha(11), ShapeError);
    CHECK_THROWS_AS(s.beta(0), ShapeError);
    CHECK_THROWS_AS(s.beta(11), ShapeError);

    NoiseSchedule broken = s;
    broken.alphas[5] = broken.alphas[4];
    CHECK_THROWS_AS(broken.validate(), ConfigError);
}

TEST_CASE("single-step schedule") {
    NoiseSchedule s = make_schedule(1, 0.05, 0.2);
    CHECK(s.betas.size() == 1);
    CHECK(s.betas[0] == doctest::Approx(0.05));
    CHECK(s.alpha(1) == doctest::Approx(0.95));
}
