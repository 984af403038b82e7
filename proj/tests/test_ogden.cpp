#include <doctest.h>

#include <cmath>

#include "flexneedle/errors.hpp"
#include "flexneedle/ogden.hpp"

using namespace flexneedle;

TEST_CASE("energy density vanishes at unit stretch")
{
    for (double mu : {1820.0, 3630.0, 1e5})
        for (double alpha : {-3.0, 2.0, 8.74}) CHECK(ogden_energy_density(1.0, mu, alpha) == doctest::Approx(0.0));
}

TEST_CASE("energy density at lambda 0.9 matches a direct scalar evaluation")
{
    const double mu = 1820.0, alpha = 8.74, l = 0.9;
    const double expected = (2 * mu / (alpha * alpha)) * (2 * std::pow(l, -alpha / 2) + std::pow(l, alpha) - 3);
    CHECK(ogden_energy_density(l, mu, alpha) == doctest::Approx(expected).epsilon(1e-14));
    CHECK(expected == doctest::Approx(27.0).epsilon(0.01));
}

TEST_CASE("slope and curvature agree with central differences of the density")
{
    const double mu = 3630.0, alpha = 8.74;
    for (double l : {0.6, 0.8, 0.95, 0.999}) {
        const double h = 1e-5;
        const double fd1 = (ogden_energy_density(l + h, mu, alpha) - ogden_energy_density(l - h, mu, alpha)) / (2 * h);
        const double fd2 = (ogden_energy_slope(l + h, mu, alpha) - ogden_energy_slope(l - h, mu, alpha)) / (2 * h);
        CHECK(ogden_energy_slope(l, mu, alpha) == doctest::Approx(fd1).epsilon(1e-7));
        CHECK(ogden_energy_curvature(l, mu, alpha) == doctest::Approx(fd2).epsilon(1e-7));
    }
    CHECK(ogden_energy_curvature(1.0, mu, alpha) == doctest::Approx(3 * mu));
}

TEST_CASE("stretch mapping rejects deflections at or beyond t_char")
{
    CHECK(stretch_from_deflection(2.5, 10.0) == doctest::Approx(0.75));
    CHECK(stretch_from_deflection(-2.5, 10.0) == doctest::Approx(0.75));
    CHECK_THROWS_AS(stretch_from_deflection(10.0, 10.0), DomainError);
    CHECK_THROWS_AS(stretch_from_deflection(-12.0, 10.0), DomainError);
}

TEST_CASE("contact law force is odd, restoring and the derivative of the line energy")
{
    const OgdenContactLaw<double> law{1820.0, 8.74, 1.0, 10.0};
    CHECK(law.force(0.0) == 0.0);
    for (double d : {0.01, 0.5, 1.0, 3.0, 4.9}) {
        CHECK(law.force(-d) == -law.force(d));
        CHECK(law.force(d) * d < 0.0);
        const double h = 1e-6 * std::max(1.0, d);
        const double fd = -(law.line_energy(d + h) - law.line_energy(d - h)) / (2 * h);
        CHECK(law.force(d) == doctest::Approx(fd).epsilon(1e-6));
        const double kd = -(law.force(d + h) - law.force(d - h)) / (2 * h);
        CHECK(law.stiffness(d) == doctest::Approx(kd).epsilon(1e-6));
    }
}

TEST_CASE("density is monotone in the deflection magnitude")
{
    const OgdenContactLaw<double> law{3630.0, 8.74, 0.7, 10.0};
    double prev = law.density(0.0);
    CHECK(prev == 0.0);
    for (double d = 0.1; d < 9.9; d += 0.1) {
        const double w = law.density(d);
        CHECK(w >= prev);
        CHECK(law.density(-d) == doctest::Approx(w));
        prev = w;
    }
}
