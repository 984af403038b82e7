#pragma once

// One-term Ogden energy density for unconfined uniaxial compression.
//
// With principal stretch l2 along the compression axis and incompressibility,
// l1 = l3 = l2^(-1/2) and
//
//     W(l2) = 2 mu / alpha^2 * (2 l2^(-alpha/2) + l2^alpha - 3).
//
// A contact deflection d maps to l2 = 1 - |d| / t_char. The lateral foundation
// energy stored per unit needle length is t_char^2 * w * W, so the restoring force
// per unit length is its negative derivative with respect to d.

#include <cmath>

#include "flexneedle/errors.hpp"

namespace flexneedle {

/// Pa -> N/mm^2.
inline constexpr double kPascalToNmm2 = 1e-6;

template <typename Scalar>
Scalar ogden_energy_density(Scalar lambda2, Scalar mu, Scalar alpha)
{
    using std::pow;
    return Scalar(2) * mu / (alpha * alpha) *
           (Scalar(2) * pow(lambda2, -alpha / Scalar(2)) + pow(lambda2, alpha) - Scalar(3));
}

/// dW/dl2; negative for l2 < 1.
template <typename Scalar>
Scalar ogden_energy_slope(Scalar lambda2, Scalar mu, Scalar alpha)
{
    using std::pow;
    return Scalar(2) * mu / alpha *
           (pow(lambda2, alpha - Scalar(1)) - pow(lambda2, -alpha / Scalar(2) - Scalar(1)));
}

/// d2W/dl2^2; equals 3 mu at l2 = 1.
template <typename Scalar>
Scalar ogden_energy_curvature(Scalar lambda2, Scalar mu, Scalar alpha)
{
    using std::pow;
    return Scalar(2) * mu / alpha *
           ((alpha - Scalar(1)) * pow(lambda2, alpha - Scalar(2)) +
            (alpha / Scalar(2) + Scalar(1)) * pow(lambda2, -alpha / Scalar(2) - Scalar(2)));
}

template <typename Scalar>
Scalar stretch_from_deflection(Scalar deflection, Scalar t_char)
{
    using std::abs;
    if (!(abs(deflection) < t_char))
        throw DomainError("contact deflection exceeds characteristic tissue thickness");
    return Scalar(1) - abs(deflection) / t_char;
}

/// Parameters of one contact's constitutive law, mu in Pa.
template <typename Scalar>
struct OgdenContactLaw {
    Scalar mu;
    Scalar alpha;
    Scalar weight;
    Scalar t_char;

    /// Weighted energy density w * W at the given deflection [J/m^3].
    Scalar density(Scalar deflection) const
    {
        return weight * ogden_energy_density(stretch_from_deflection(deflection, t_char), mu, alpha);
    }

    /// Stored energy per unit needle length [N·mm/mm].
    Scalar line_energy(Scalar deflection) const
    {
        return t_char * t_char * density(deflection) * Scalar(kPascalToNmm2);
    }

    /// Restoring force per unit needle length [N/mm]; odd in deflection, opposes it.
    Scalar force(Scalar deflection) const
    {
        const Scalar l2 = stretch_from_deflection(deflection, t_char);
        const Scalar sgn = deflection > Scalar(0) ? Scalar(1) : (deflection < Scalar(0) ? Scalar(-1) : Scalar(0));
        return sgn * t_char * weight * ogden_energy_slope(l2, mu, alpha) * Scalar(kPascalToNmm2);
    }

    /// -d(force)/d(deflection) [N/mm^2], positive.
    Scalar stiffness(Scalar deflection) const
    {
        const Scalar l2 = stretch_from_deflection(deflection, t_char);
        return weight * ogden_energy_curvature(l2, mu, alpha) * Scalar(kPascalToNmm2);
    }
};

}  // namespace flexneedle
