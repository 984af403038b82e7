#include <doctest.h>

#include <cmath>
#include <numbers>

#include "flexneedle/errors.hpp"
#include "flexneedle/scenario.hpp"
#include "flexneedle/tracker.hpp"
#include "test_util.hpp"

using namespace flexneedle;
using V3 = Eigen::Vector3d;

TEST_CASE("se2 deviation")
{
    const SE2Weight w;
    CHECK(se2_deviation(V3(1, 2, 0.3), V3(1, 2, 0.3), w) == 0.0);
    CHECK(se2_deviation(V3(0, 0, 2 * std::numbers::pi), V3(0, 0, 0), w) == doctest::Approx(0.0).scale(1e-20));
    CHECK(se2_deviation(V3(0, 2, 0), V3(0, 0, 0), w) == doctest::Approx(4.0));
    const SE2Weight wt{0.5, 2.0, 3.0};
    CHECK(se2_deviation(V3(2, 1, 0.1), V3(0, 0, 0), wt) == doctest::Approx(0.5 * 4 + 2.0 + 3.0 * 0.01));
}

TEST_CASE("tracking cost")
{
    const SE2Weight w;
    const std::vector<V3> nom{V3(0, 0, 0), V3(1, 0, 0), V3(2, 0, 0)};
    CHECK(tracking_cost(nom, nom, w, 0.1) == 0.0);
    auto dev = nom;
    dev[1].y() = 1.0;
    CHECK(tracking_cost(dev, nom, w, 0.1) == doctest::Approx(0.1));

    const std::vector<V3> a_r{dev[0], dev[1]}, a_n{nom[0], nom[1]}, b_r{dev[2]}, b_n{nom[2]};
    dev[2].x() = 2.5;
    const std::vector<V3> b_r2{dev[2]};
    CHECK(tracking_cost(dev, nom, w, 0.1) ==
          doctest::Approx(tracking_cost(a_r, a_n, w, 0.1) + tracking_cost(b_r2, b_n, w, 0.1)));
}

TEST_CASE("orientation weight is boosted near the skin")
{
    const auto c = phantom_config();
    const TrackerOptions o;
    CHECK(effective_weight(c, V3(c.skin_x - 3.0, 0, 0), o).w_theta == doctest::Approx(o.weight.w_theta * 10));
    CHECK(effective_weight(c, V3(c.skin_x + 3.0, 0, 0), o).w_theta == doctest::Approx(o.weight.w_theta * 10));
    CHECK(effective_weight(c, V3(c.skin_x + 8.0, 0, 0), o).w_theta == doctest::Approx(o.weight.w_theta));
    CHECK(effective_weight(c, V3(c.skin_x + 8.0, 0, 0), o).w_y == o.weight.w_y);
}

TEST_CASE("zero re-initialization spread returns the nominal input")
{
    const auto c = phantom_config();
    const std::vector<ControlInput> u(20, ControlInput{1.2, 0.1, kNoFlip});
    const auto nt = fn_test::fixed_nominal(c, Eigen::Vector2d(c.skin_x + 10, 0), u);
    TrackerOptions o;
    o.sigma_db = 0.0;
    o.sigma_dg = 0.0;
    for (int s0 : {0, 7, 19}) {
        const auto ts = track_step(c, nt.states[s0], nt, s0, o);
        CHECK(ts.input.db_x == nt.controls[s0].db_x);
        CHECK(ts.input.dg_y == nt.controls[s0].dg_y);
        CHECK(ts.input.flip == kNoFlip);
    }
}

TEST_CASE("lateral offset in air is corrected toward the nominal")
{
    const auto c = phantom_config();
    const std::vector<ControlInput> u(12, ControlInput{1.0, 0.0, kNoFlip});
    const auto nt = fn_test::fixed_nominal(c, Eigen::Vector2d(c.skin_x + 10, 0), u);
    const auto est = perturbed_initial_state(c, PlantPerturbation{1.0, 0.0, 1.0});
    TrackerOptions o;
    o.ce.seed = 9;

    // oracle: sweep dg_y for the first step, nominal inputs for the rest of the window
    double best_dg = 0.0, best = 1e300;
    for (int k = -100; k <= 100; ++k) {
        const double dg = k * 0.01;
        std::vector<ControlInput> win(o.window, ControlInput{1.0, 0.0, kNoFlip});
        win[0].dg_y = dg;
        const double cost = window_cost(c, est, nt, 0, win, o);
        if (cost < best) best = cost, best_dg = dg;
    }
    REQUIRE(best_dg < 0.0);

    const auto ts = track_step(c, est, nt, 0, o);
    CHECK(ts.input.dg_y < 0.0);
    CHECK(ts.input.flip == kNoFlip);
    const std::vector<ControlInput> keep(o.window, ControlInput{1.0, 0.0, kNoFlip});
    CHECK(ts.cost < window_cost(c, est, nt, 0, keep, o));
}

TEST_CASE("tracker never retracts")
{
    const auto c = phantom_config();
    const std::vector<ControlInput> u(40, ControlInput{0.05, 0.0, kNoFlip});
    const auto nt = fn_test::fixed_nominal(c, Eigen::Vector2d(c.skin_x + 10, 0), u);
    TrackerOptions o;
    o.sigma_db = 1.0;
    SimState s = perturbed_initial_state(c, PlantPerturbation{0.5, 0.0, 1.0});
    for (int s0 = 0; s0 < 10; ++s0) {
        o.ce.seed = 100 + s0;
        const auto ts = track_step(c, s, nt, s0, o);
        CHECK(ts.input.db_x >= 0.0);
        s = step(c, s, ts.input);
    }
}

TEST_CASE("window shrinks at the end of the nominal")
{
    const auto c = phantom_config();
    const std::vector<ControlInput> u(6, ControlInput{1.0, 0.0, kNoFlip});
    const auto nt = fn_test::fixed_nominal(c, Eigen::Vector2d(c.skin_x + 10, 0), u);
    const TrackerOptions o;
    CHECK(track_step(c, nt.states[0], nt, 0, o).window == 5);
    CHECK(track_step(c, nt.states[4], nt, 4, o).window == 2);
    CHECK(track_step(c, nt.states[5], nt, 5, o).window == 1);
    CHECK_THROWS(track_step(c, nt.states[5], nt, 6, o));
}

TEST_CASE("feedback at the model tip changes nothing")
{
    const auto c = phantom_config();
    const auto s = fn_test::advance(c, new_simulation(c), 40.0);
    const auto f = apply_feedback(c, s, tip_pose(s).head<2>());
    CHECK((f.needle.nodes - s.needle.nodes).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("feedback pins the tip to the measurement and re-equilibrates")
{
    const auto c = phantom_config();
    const auto s = fn_test::advance(c, new_simulation(c), 40.0);
    const Eigen::Vector2d m = tip_pose(s).head<2>() + Eigen::Vector2d(0.0, 0.5);
    const auto f = apply_feedback(c, s, m);
    CHECK((tip_pose(f).head<2>() - m).norm() < 1e-9);
    EquilibriumOptions pinned;
    pinned.tip_position = m;
    CHECK(residual_norm(c, f, pinned) < effective_tolerance(c, f.needle.nodes));
    const int n = f.needle.size();
    CHECK(std::abs(f.needle.nodes(n / 2, 1) - s.needle.nodes(n / 2, 1)) < 0.5);

    // the correction persists when the model is advanced again
    const auto a = step(c, f, {0.5, 0.0, kNoFlip});
    const auto b = step(c, s, {0.5, 0.0, kNoFlip});
    CHECK(tip_pose(a).y() - tip_pose(b).y() > 0.2);
}

TEST_CASE("feedback far outside the workspace is rejected")
{
    const auto c = phantom_config();
    const auto s = fn_test::advance(c, new_simulation(c), 40.0);
    CHECK_THROWS_AS(apply_feedback(c, s, Eigen::Vector2d(500.0, 300.0)), FeedbackError);
    CHECK_THROWS_AS(apply_feedback(c, s, Eigen::Vector2d(NAN, 0.0)), FeedbackError);
}
