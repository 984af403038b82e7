#pragma once

// Quasi-static planar finite-element model of a bevel-tip needle pushed through a
// lateral guide into layered Ogden tissue.
//
// World frame: x is the insertion axis, y the lateral axis, both in mm. The skin
// plane sits at x = skin_x and the tissue occupies skin_x < x < tissue_end().
// Needle node 0 is the clamped base, node n-1 the tip.
//
// Tissue is represented by lateral spring stations at fixed world abscissae
// (spacing h_c). A station is created when the tip first passes it and is anchored
// at the needle's lateral position at that moment; the needle slides axially
// through the stations.

#include <optional>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "flexneedle/beam_element.hpp"
#include "flexneedle/ogden.hpp"

namespace flexneedle {

/// Bevel direction / flip request values.
inline constexpr int kBevelUp = 1;
inline constexpr int kBevelDown = -1;
inline constexpr int kFlip = 1;
inline constexpr int kNoFlip = -1;

struct ControlInput {
    double db_x = 0.0;  ///< base advance [mm], >= 0
    double dg_y = 0.0;  ///< guide lateral translation [mm]
    int flip = kNoFlip;  ///< +1 toggles the bevel, -1 keeps it
};

struct ActuatorLimits {
    double db_x_max = 2.0;
    double dg_y_max = 1.0;

    bool admits(const ControlInput& u) const;
    ControlInput clamp(ControlInput u) const;
};

struct TissueLayer {
    double x_min = 0.0;  ///< [mm]
    double x_max = 0.0;  ///< [mm]
    double mu = 0.0;     ///< Ogden shear modulus [Pa]
    double alpha = 1.0;  ///< Ogden exponent
    double weight = 1.0;
};

struct SolverSettings {
    double tolerance = 1e-8;       ///< residual infinity norm [N]
    int max_newton_iters = 50;
    double guide_stiffness = 1e4;  ///< guide penalty [N/mm]
    double feedback_max_correction = 5.0;  ///< largest accepted tip correction [mm]
};

struct SimConfig {
    int n_nodes = 41;
    double element_length = 3.0;    ///< [mm]
    double young_modulus = 200e9;   ///< [Pa]
    double second_moment = 0.0;     ///< [mm^4]
    double area = 0.0;              ///< [mm^2]
    double skin_x = 0.0;            ///< [mm]
    double guide_x = -41.0;         ///< [mm]
    double initial_tip_to_skin = 28.5;  ///< [mm]
    bool guide_enabled = true;
    double bevel_offset = 0.0;      ///< b [mm]
    double bevel_gain = 0.0;        ///< c_b [-]
    double contact_spacing = 1.0;   ///< h_c [mm]
    double t_char = 10.0;           ///< [mm]
    std::vector<TissueLayer> layers;
    SolverSettings solver;
    ActuatorLimits limits;

    /// Throws ConfigError naming the first violated invariant.
    void validate() const;

    double needle_length() const { return element_length * (n_nodes - 1); }
    double tissue_end() const;
    BeamSection<double> section() const;
    std::optional<int> layer_at(double x) const;
    bool inside_tissue(double x) const { return x > skin_x && x < tissue_end(); }
};

/// Solid circular section from the outer diameter [mm^4].
double circular_second_moment(double outer_diameter);
double circular_area(double outer_diameter);

/// Two-layer phantom: 21G steel needle, mu1 = 1.82 kPa over the first 25 mm,
/// mu2 = 3.63 kPa beyond, alpha = 8.74, G = 41 mm, tip 28.5 mm before the skin.
SimConfig phantom_config();

/// Builds a contiguous layer stack starting at skin_x.
struct LayerSpec {
    double thickness;
    double mu;
    double alpha;
    double weight = 1.0;
};
std::vector<TissueLayer> stack_layers(double skin_x, std::span<const LayerSpec> specs);

struct NeedleState {
    Eigen::Matrix<double, Eigen::Dynamic, 3> nodes;  ///< rows (x, y, theta)
    int bvl = kBevelUp;

    int size() const { return static_cast<int>(nodes.rows()); }
};

struct ContactPoint {
    double station_x = 0.0;
    double anchor_y = 0.0;
    int layer_id = 0;
    double weight = 1.0;
    int created_step = 0;
};

struct SimState {
    NeedleState needle;
    std::vector<ContactPoint> contacts;  ///< ordered by station_x
    double base_x = 0.0;
    double base_y = 0.0;
    double base_theta = 0.0;
    double guide_y = 0.0;
    // Direction of the bevel spring load (0 = unloaded). Set by the last step that advanced
    // the needle; a stationary needle keeps its load, so a null input changes nothing.
    int bevel_load = 0;
    int step_index = 0;
};

struct EquilibriumOptions {
    Eigen::Vector2d tip_load = Eigen::Vector2d::Zero();  ///< extra point load at the tip [N]
    std::optional<Eigen::Vector2d> tip_position;  ///< prescribe the tip (releases base axial DOF)
};

SimState new_simulation(const SimConfig& config);

/// Advances one control step: base moves by db_x, guide by dg_y, bevel toggles on
/// flip = +1, equilibrium is re-solved and stations are updated.
SimState step(const SimConfig& config, const SimState& state, const ControlInput& input);

/// Newton solve of the nodal force balance for the state's boundary conditions.
SimState solve_equilibrium(const SimConfig& config, const SimState& state, const EquilibriumOptions& options = {});

/// Convergence threshold actually used: the configured tolerance or the rounding
/// floor of the axial terms, whichever is larger [N].
double effective_tolerance(const SimConfig& config, const Eigen::Matrix<double, Eigen::Dynamic, 3>& nodes);

/// Infinity norm of the free-DOF residual of `state`.
double residual_norm(const SimConfig& config, const SimState& state, const EquilibriumOptions& options = {});

/// Creates stations the tip has passed and removes those ahead of it.
SimState update_contacts(const SimConfig& config, const SimState& state);

/// Restoring force per unit needle length [N/mm].
double contact_force(const ContactPoint& cp, double deflection, std::span<const TissueLayer> layers, double t_char);

/// Weighted Ogden density summed over stations [J/m^3].
double strain_energy(const SimConfig& config, const SimState& state);

/// Lateral bevel spring force the successor step would apply at the tip [N].
double bevel_tip_force(const SimConfig& config, const SimState& state, const ControlInput& input);

Eigen::Vector3d tip_pose(const SimState& state);
bool tip_in_tissue(const SimConfig& config, const SimState& state);

/// Cubic Hermite lateral position of the needle centerline at world abscissa x.
std::optional<double> lateral_position_at(const NeedleState& needle, double x);

/// Signed deflection (needle minus anchor) of every station; NaN when the needle
/// no longer covers the station.
std::vector<double> contact_deflections(const SimState& state);

/// Copy of `config` with every layer's mu multiplied by `scale`.
SimConfig scale_tissue_stiffness(SimConfig config, double scale);

}  // namespace flexneedle
