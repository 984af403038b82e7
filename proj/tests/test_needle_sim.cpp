#include <doctest.h>

#include <cmath>
#include <vector>

#include "flexneedle/errors.hpp"
#include "flexneedle/needle_sim.hpp"
#include "test_util.hpp"

using namespace flexneedle;
using fn_test::advance;
using fn_test::cantilever_config;

TEST_CASE("new_simulation builds a straight needle ahead of the skin")
{
    const auto c = phantom_config();
    const auto s = new_simulation(c);
    REQUIRE(s.needle.size() == 41);
    CHECK(s.needle.nodes(40, 0) - s.needle.nodes(0, 0) == doctest::Approx(120.0));
    CHECK(s.needle.nodes.col(1).cwiseAbs().maxCoeff() == 0.0);
    CHECK(s.needle.nodes.col(2).cwiseAbs().maxCoeff() == 0.0);
    CHECK(s.contacts.empty());
    CHECK(s.needle.bvl == kBevelUp);
    const auto tip = tip_pose(s);
    CHECK(tip.x() == doctest::Approx(c.skin_x - 28.5));
    CHECK(tip.y() == 0.0);
    CHECK(tip.z() == 0.0);
    CHECK(c.skin_x - c.guide_x == doctest::Approx(41.0));
}

TEST_CASE("configuration invariants are enforced")
{
    auto c = phantom_config();
    c.layers[1].x_min = c.layers[0].x_max - 1.0;
    CHECK_THROWS_AS(new_simulation(c), ConfigError);

    c = phantom_config();
    c.element_length = -1.0;
    CHECK_THROWS_AS(new_simulation(c), ConfigError);

    c = phantom_config();
    c.guide_x = 5.0;
    CHECK_THROWS_AS(new_simulation(c), ConfigError);
}

TEST_CASE("a null input is a fixed point")
{
    const auto c = phantom_config();
    const auto s0 = advance(c, new_simulation(c), 35.0);
    const auto s1 = step(c, s0, {0.0, 0.0, kNoFlip});
    CHECK((s1.needle.nodes - s0.needle.nodes).cwiseAbs().maxCoeff() < 1e-9);
    CHECK(s1.contacts.size() == s0.contacts.size());
    CHECK(s1.needle.bvl == s0.needle.bvl);
}

TEST_CASE("flip in air toggles the bevel without moving the needle; twice restores it")
{
    const auto c = phantom_config();
    const auto s0 = new_simulation(c);
    const auto s1 = step(c, s0, {0.0, 0.0, kFlip});
    CHECK(s1.needle.bvl == kBevelDown);
    CHECK((s1.needle.nodes - s0.needle.nodes).cwiseAbs().maxCoeff() == 0.0);
    const auto s2 = step(c, s1, {0.0, 0.0, kFlip});
    CHECK(s2.needle.bvl == s0.needle.bvl);
    CHECK((s2.needle.nodes - s0.needle.nodes).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("inputs outside the actuator limits are rejected")
{
    const auto c = phantom_config();
    const auto s = new_simulation(c);
    CHECK_THROWS_AS(step(c, s, {-0.1, 0.0, kNoFlip}), ConfigError);
    CHECK_THROWS_AS(step(c, s, {2.5, 0.0, kNoFlip}), ConfigError);
    CHECK_THROWS_AS(step(c, s, {1.0, 1.5, kNoFlip}), ConfigError);
    CHECK_THROWS_AS(step(c, s, {1.0, 0.0, 0}), ConfigError);
}

TEST_CASE("rigid advance in air translates the tip only")
{
    const auto c = phantom_config();
    const auto s0 = new_simulation(c);
    const auto s1 = step(c, s0, {1.7, 0.0, kNoFlip});
    CHECK(tip_pose(s1).x() == doctest::Approx(tip_pose(s0).x() + 1.7));
    CHECK(std::abs(tip_pose(s1).y()) < 1e-12);
    CHECK(std::abs(tip_pose(s1).z()) < 1e-12);
    CHECK(tip_pose(s1) == s1.needle.nodes.row(40).transpose());
}

TEST_CASE("cantilever tip load matches P L^3 / 3EI")
{
    const auto c = cantilever_config();
    const double L = c.needle_length();
    const double EI = c.section().bending_rigidity;
    for (double P : {1e-4, 1e-3, 4e-3}) {
        EquilibriumOptions opt;
        opt.tip_load = {0.0, P};
        const auto s = solve_equilibrium(c, new_simulation(c), opt);
        const double expected = P * L * L * L / (3 * EI);
        REQUIRE(expected < 0.05 * L);
        CHECK(tip_pose(s).y() == doctest::Approx(expected).epsilon(0.01));
        CHECK(residual_norm(c, s, opt) <= effective_tolerance(c, s.needle.nodes));
    }
}

TEST_CASE("guided displacement agrees with a ten-times refined mesh")
{
    const auto coarse = phantom_config();
    auto fine = coarse;
    fine.n_nodes = 401;
    fine.element_length = 0.3;
    const auto a = step(coarse, new_simulation(coarse), {0.0, 1.0, kNoFlip});
    const auto b = step(fine, new_simulation(fine), {0.0, 1.0, kNoFlip});
    CHECK(tip_pose(a).y() > 1.0);
    CHECK(tip_pose(a).y() == doctest::Approx(tip_pose(b).y()).epsilon(0.01));

    auto doubled = coarse;
    doubled.n_nodes = 81;
    doubled.element_length = 1.5;
    const auto d = step(doubled, new_simulation(doubled), {0.0, 1.0, kNoFlip});
    CHECK(std::abs(tip_pose(d).y() - tip_pose(a).y()) < 0.02 * std::abs(tip_pose(a).y()));
}

TEST_CASE("no loads give the straight configuration with zero residual")
{
    const auto c = phantom_config();
    const auto s = solve_equilibrium(c, new_simulation(c));
    CHECK(residual_norm(c, s) == doctest::Approx(0.0).scale(1e-12));
    CHECK(s.needle.nodes.col(1).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("stations appear behind the tip at the contact spacing")
{
    const auto c = phantom_config();
    auto s = new_simulation(c);
    s = advance(c, s, 20.0);
    CHECK(s.contacts.empty());
    s = advance(c, s, 18.7);  // tip just over 10 mm past the skin (bending shortens it slightly)
    REQUIRE(tip_pose(s).x() > c.skin_x + 10.0);
    REQUIRE(tip_pose(s).x() < c.skin_x + 11.0);
    REQUIRE(s.contacts.size() == 10);
    for (int k = 0; k < 10; ++k) CHECK(s.contacts[k].station_x == doctest::Approx(c.skin_x + k + 1));
}

TEST_CASE("stations take the layer that contains them")
{
    const auto c = phantom_config();
    const auto s = advance(c, new_simulation(c), 28.5 + 30.5);
    REQUIRE(s.contacts.size() == 30);
    for (const auto& cp : s.contacts) {
        const int expected = cp.station_x < 25.0 ? 0 : 1;
        CHECK(cp.layer_id == expected);
    }
}

TEST_CASE("bevel force depends on tissue, bevel offset and advance")
{
    auto c = phantom_config();
    auto s = new_simulation(c);
    CHECK(bevel_tip_force(c, s, {1.0, 0.0, kNoFlip}) == 0.0);  // in air

    s = advance(c, s, 38.5);
    const double f = bevel_tip_force(c, s, {1.0, 0.0, kNoFlip});
    CHECK(f == doctest::Approx(c.bevel_gain * 1820.0 * 1e-6 * c.bevel_offset));
    CHECK(bevel_tip_force(c, s, {1.0, 0.0, kFlip}) == -f);
    CHECK(bevel_tip_force(c, s, {0.0, 0.0, kNoFlip}) == 0.0);

    c.bevel_offset = 0.0;
    CHECK(bevel_tip_force(c, s, {1.0, 0.0, kNoFlip}) == 0.0);
}

TEST_CASE("symmetric tip inserts straight")
{
    auto c = phantom_config();
    c.bevel_offset = 0.0;
    const auto s = advance(c, new_simulation(c), 60.0, 2.0);
    CHECK(std::abs(tip_pose(s).y()) < 1e-9);
    CHECK(strain_energy(c, s) == doctest::Approx(0.0).scale(1e-9));
}

TEST_CASE("bevel curves the needle toward the bevel side")
{
    const auto c = phantom_config();
    auto s = advance(c, new_simulation(c), 68.5, 2.0);
    CHECK(tip_pose(s).y() > 1.0);
    auto t = new_simulation(c);
    t = step(c, t, {0.0, 0.0, kFlip});
    t = advance(c, t, 68.5, 2.0);
    CHECK(tip_pose(t).y() == doctest::Approx(-tip_pose(s).y()).epsilon(1e-9));
}

TEST_CASE("contact force sign, symmetry and layer parameters")
{
    const auto c = phantom_config();
    ContactPoint cp;
    cp.layer_id = 1;
    CHECK(contact_force(cp, 0.0, c.layers, c.t_char) == 0.0);
    for (double d : {0.2, 1.0, 3.0}) {
        const double f = contact_force(cp, d, c.layers, c.t_char);
        CHECK(f < 0.0);
        CHECK(contact_force(cp, -d, c.layers, c.t_char) == -f);
    }
    CHECK_THROWS_AS(contact_force(cp, 10.0, c.layers, c.t_char), DomainError);
}

TEST_CASE("contact force is minus the derivative of the stored energy")
{
    // one station at a chosen deflection; oracle is a central difference of strain_energy
    auto c = phantom_config();
    SimState s = new_simulation(c);
    s.needle.nodes.col(0).array() += 40.0;  // tip at 11.5 mm
    ContactPoint cp;
    cp.station_x = 5.0;
    cp.layer_id = 0;
    s.contacts = {cp};
    const double y_needle = 0.0;
    for (double d : {1.0, 2.5, 4.0}) {
        const double h = 1e-5;
        auto with_anchor = [&](double anchor) {
            SimState t = s;
            t.contacts[0].anchor_y = anchor;
            return strain_energy(c, t);
        };
        // deflection = needle - anchor
        const double dW = (with_anchor(y_needle - (d + h)) - with_anchor(y_needle - (d - h))) / (2 * h);
        const double expected = -c.t_char * c.t_char * 1e-6 * dW;
        CHECK(contact_force(cp, d, c.layers, c.t_char) == doctest::Approx(expected).epsilon(1e-6));
    }
}

TEST_CASE("strain energy of one station at lambda 0.9")
{
    auto c = phantom_config();
    SimState s = new_simulation(c);
    s.needle.nodes.col(0).array() += 40.0;
    ContactPoint cp;
    cp.station_x = 5.0;
    cp.anchor_y = -1.0;  // deflection 1 mm -> lambda 0.9
    s.contacts = {cp};
    CHECK(strain_energy(c, s) == doctest::Approx(27.0).epsilon(0.01));
    s.contacts.clear();
    CHECK(strain_energy(c, s) == 0.0);
}

TEST_CASE("solved insertion states: residual, passivity, determinism")
{
    const auto c = phantom_config();
    SimState s = new_simulation(c);
    const std::vector<ControlInput> inputs = {{2.0, 0.5, kNoFlip}, {2.0, -0.3, kNoFlip}, {1.5, 0.0, kFlip},
                                              {2.0, 0.2, kNoFlip}, {1.0, -0.8, kNoFlip}};
    for (int k = 0; k < 40; ++k) {
        const auto& u = inputs[k % inputs.size()];
        const SimState a = step(c, s, u);
        const SimState b = step(c, s, u);
        CHECK((a.needle.nodes.array() == b.needle.nodes.array()).all());
        CHECK(residual_norm(c, solve_equilibrium(c, a)) <= effective_tolerance(c, a.needle.nodes));
        const auto defl = contact_deflections(a);
        for (std::size_t i = 0; i < defl.size(); ++i) {
            if (std::isnan(defl[i])) continue;
            CHECK(contact_force(a.contacts[i], defl[i], c.layers, c.t_char) * defl[i] <= 0.0);
        }
        CHECK(strain_energy(c, a) >= 0.0);
        s = a;
    }
    CHECK(tip_in_tissue(c, s));
}

TEST_CASE("tissue scaling multiplies every layer")
{
    const auto c = phantom_config();
    const auto d = scale_tissue_stiffness(c, 1.1);
    for (std::size_t i = 0; i < c.layers.size(); ++i) CHECK(d.layers[i].mu == doctest::Approx(1.1 * c.layers[i].mu));
}
