#pragma once

// Planar corotational Euler-Bernoulli element (straight in its rest state).
// Element DOFs are ordered (x_a, y_a, theta_a, x_b, y_b, theta_b) with absolute
// nodal rotations.

#include <cmath>
#include <numbers>

#include <Eigen/Dense>

namespace flexneedle {

template <typename Scalar>
Scalar wrap_angle(Scalar a)
{
    constexpr Scalar pi = std::numbers::pi_v<Scalar>;
    while (a > pi) a -= Scalar(2) * pi;
    while (a <= -pi) a += Scalar(2) * pi;
    return a;
}

template <typename Scalar>
struct BeamSection {
    Scalar axial_rigidity;    // EA [N]
    Scalar bending_rigidity;  // EI [N mm^2]
    Scalar rest_length;       // [mm]
};

template <typename Scalar>
struct CorotationalBeam {
    using Vector6 = Eigen::Matrix<Scalar, 6, 1>;
    using Matrix6 = Eigen::Matrix<Scalar, 6, 6>;

    Scalar energy = 0;
    Vector6 force = Vector6::Zero();
    Matrix6 stiffness = Matrix6::Zero();

    CorotationalBeam(const BeamSection<Scalar>& sec, const Vector6& q)
    {
        using std::atan2;
        using std::sqrt;
        const Scalar dx = q(3) - q(0), dy = q(4) - q(1);
        const Scalar l = sqrt(dx * dx + dy * dy);
        const Scalar c = dx / l, s = dy / l;
        const Scalar beta = atan2(dy, dx);
        const Scalar L0 = sec.rest_length;

        const Scalar u = l - L0;
        const Scalar t1 = wrap_angle(q(2) - beta);
        const Scalar t2 = wrap_angle(q(5) - beta);

        const Scalar ka = sec.axial_rigidity / L0;
        const Scalar kb = sec.bending_rigidity / L0;
        const Scalar N = ka * u;
        const Scalar M1 = kb * (Scalar(4) * t1 + Scalar(2) * t2);
        const Scalar M2 = kb * (Scalar(2) * t1 + Scalar(4) * t2);
        energy = Scalar(0.5) * ka * u * u + kb * (Scalar(2) * t1 * t1 + Scalar(2) * t1 * t2 + Scalar(2) * t2 * t2);

        Vector6 r, z;
        r << -c, -s, 0, c, s, 0;
        z << s, -c, 0, -s, c, 0;

        Eigen::Matrix<Scalar, 3, 6> Bm;
        Bm.row(0) = r.transpose();
        Bm.row(1) = -z.transpose() / l;
        Bm(1, 2) += Scalar(1);
        Bm.row(2) = -z.transpose() / l;
        Bm(2, 5) += Scalar(1);

        Eigen::Matrix<Scalar, 3, 3> Kl;
        Kl << ka, 0, 0, 0, Scalar(4) * kb, Scalar(2) * kb, 0, Scalar(2) * kb, Scalar(4) * kb;

        force = Bm.transpose() * Eigen::Matrix<Scalar, 3, 1>(N, M1, M2);
        stiffness = Bm.transpose() * Kl * Bm + z * z.transpose() * (N / l) +
                    (r * z.transpose() + z * r.transpose()) * ((M1 + M2) / (l * l));
    }
};

}  // namespace flexneedle
