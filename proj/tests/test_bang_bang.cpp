#include <doctest.h>

#include <cmath>

#include "flexneedle/bang_bang.hpp"
#include "flexneedle/needle_sim.hpp"

using namespace flexneedle;
using V3 = Eigen::Vector3d;
using V2 = Eigen::Vector2d;

TEST_CASE("one and two unicycle steps")
{
    KinematicParams<double> p;
    p.kappa = 0.01;
    p.substep = 1.0;
    const V3 one = rollout_kinematic<double>(V3::Zero(), 1, p, 1.0);
    CHECK(one.x() == doctest::Approx(1.0));
    CHECK(one.y() == doctest::Approx(0.0));
    CHECK(one.z() == doctest::Approx(0.01));
    const V3 two = rollout_kinematic<double>(V3::Zero(), 1, p, 2.0);
    CHECK(two.x() == doctest::Approx(1.0 + std::cos(0.01)).epsilon(1e-12));
    CHECK(two.x() == doctest::Approx(1.99995).epsilon(1e-6));
    CHECK(two.y() == doctest::Approx(std::sin(0.01)).epsilon(1e-12));
}

TEST_CASE("partial final step covers the remainder")
{
    KinematicParams<double> p;
    p.kappa = 0.0 + 1e-9;
    p.substep = 0.5;
    const V3 g = rollout_kinematic<double>(V3::Zero(), 1, p, 1.3);
    CHECK(g.x() == doctest::Approx(1.3).epsilon(1e-9));
    CHECK(rollout_kinematic<double>(V3(1, 2, 0.3), -1, p, 0.0) == V3(1, 2, 0.3));
}

TEST_CASE("opposite bevels mirror about the initial heading line")
{
    KinematicParams<double> p;
    for (double adv : {0.7, 5.0, 33.3}) {
        const V3 a = rollout_kinematic<double>(V3::Zero(), 1, p, adv);
        const V3 b = rollout_kinematic<double>(V3::Zero(), -1, p, adv);
        CHECK(a.x() == b.x());
        CHECK(a.y() == -b.y());
        CHECK(a.z() == -b.z());
    }
}

TEST_CASE("decide_flip truth table")
{
    KinematicParams<double> p;
    const V3 tip(0, 0, 0);
    CHECK(decide_flip<double>(tip, kBevelUp, V2(30, 3), p, 30.0) == -1);
    CHECK(decide_flip<double>(tip, kBevelUp, V2(30, -3), p, 30.0) == 1);
    CHECK(decide_flip<double>(tip, kBevelUp, V2(30, 0), p, 30.0) == -1);
    CHECK(decide_flip<double>(tip, kBevelDown, V2(30, 0), p, 30.0) == -1);
    CHECK(decide_flip<double>(tip, kBevelUp, V2(30, -3), p, 0.0) == -1);
}

TEST_CASE("hysteresis suppresses small improvements")
{
    KinematicParams<double> p;
    p.kappa = 0.005;
    const V3 tip(0, 0, 0);
    // improvement from a 2 mm lookahead is about kappa * 2^2 = 0.02 mm
    p.hysteresis = 0.0;
    CHECK(decide_flip<double>(tip, kBevelUp, V2(2, -1), p, 2.0) == 1);
    p.hysteresis = 0.05;
    CHECK(decide_flip<double>(tip, kBevelUp, V2(2, -1), p, 2.0) == -1);
}

TEST_CASE("mirror equivariance")
{
    KinematicParams<double> p;
    for (double ty : {-4.0, -0.3, 0.2, 6.0})
        for (double th : {-0.05, 0.0, 0.02})
            for (int bvl : {kBevelUp, kBevelDown}) {
                const int a = decide_flip<double>(V3(0, 0, th), bvl, V2(25, ty), p, 25.0);
                const int b = decide_flip<double>(V3(0, 0, -th), -bvl, V2(25, -ty), p, 25.0);
                CHECK(a == b);
            }
}

TEST_CASE("vanishing curvature keeps the bevel")
{
    KinematicParams<double> p;
    p.kappa = 1e-9;
    CHECK(decide_flip<double>(V3(0, 0, 0.01), kBevelUp, V2(40, -5), p, 40.0) == -1);
}

TEST_CASE("invalid parameters")
{
    KinematicParams<double> p;
    p.kappa = 0.0;
    CHECK_THROWS_AS(p.validate(), ConfigError);
    p = {};
    p.substep = -1.0;
    CHECK_THROWS_AS(p.validate(), ConfigError);
    p = {};
    CHECK_THROWS_AS(rollout_kinematic<double>(V3::Zero(), 1, p, -1.0), ConfigError);
}
