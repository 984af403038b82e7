#include "flexneedle/needle_sim.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "flexneedle/block_tridiagonal.hpp"
#include "flexneedle/errors.hpp"

namespace flexneedle {

bool ActuatorLimits::admits(const ControlInput& u) const
{
    return u.db_x >= 0.0 && u.db_x <= db_x_max && std::abs(u.dg_y) <= dg_y_max &&
           (u.flip == kFlip || u.flip == kNoFlip);
}

ControlInput ActuatorLimits::clamp(ControlInput u) const
{
    u.db_x = std::clamp(u.db_x, 0.0, db_x_max);
    u.dg_y = std::clamp(u.dg_y, -dg_y_max, dg_y_max);
    u.flip = u.flip > 0 ? kFlip : kNoFlip;
    return u;
}

double circular_second_moment(double d) { return std::numbers::pi * d * d * d * d / 64.0; }
double circular_area(double d) { return std::numbers::pi * d * d / 4.0; }

std::vector<TissueLayer> stack_layers(double skin_x, std::span<const LayerSpec> specs)
{
    std::vector<TissueLayer> out;
    double x = skin_x;
    for (const auto& s : specs) {
        out.push_back({x, x + s.thickness, s.mu, s.alpha, s.weight});
        x += s.thickness;
    }
    return out;
}

SimConfig phantom_config()
{
    SimConfig c;
    c.second_moment = circular_second_moment(0.819);
    c.area = circular_area(0.819);
    c.bevel_offset = 0.5;
    c.bevel_gain = 75.0;
    const LayerSpec specs[] = {{25.0, 1820.0, 8.74}, {55.0, 3630.0, 8.74}};
    c.layers = stack_layers(c.skin_x, specs);
    return c;
}

void SimConfig::validate() const
{
    auto fail = [](const std::string& m) { throw ConfigError("invalid configuration: " + m); };
    if (n_nodes < 2) fail("n_nodes must be >= 2");
    if (!(element_length > 0)) fail("element_length must be > 0");
    if (!(young_modulus > 0)) fail("young_modulus must be > 0");
    if (!(second_moment > 0)) fail("second_moment must be > 0");
    if (!(area > 0)) fail("area must be > 0");
    if (!(initial_tip_to_skin > 0)) fail("tip_to_skin must be > 0");
    if (!(contact_spacing > 0)) fail("contact_spacing must be > 0");
    if (!(t_char > 0)) fail("t_char must be > 0");
    if (bevel_offset < 0) fail("bevel_offset must be >= 0");
    if (guide_enabled && !(guide_x < skin_x)) fail("guide must lie outside the tissue (guide_x < skin_x)");
    if (layers.empty()) fail("at least one tissue layer is required");
    if (!(solver.tolerance > 0) || solver.max_newton_iters < 1) fail("solver settings");
    if (!(limits.db_x_max >= 0) || !(limits.dg_y_max >= 0)) fail("actuator limits");
    for (std::size_t i = 0; i < layers.size(); ++i) {
        const auto& l = layers[i];
        if (!(l.x_max > l.x_min)) fail("layer " + std::to_string(i) + " has non-positive thickness");
        if (!(l.mu > 0)) fail("layer " + std::to_string(i) + " mu must be > 0");
        if (l.alpha == 0) fail("layer " + std::to_string(i) + " alpha must be non-zero");
        if (l.weight < 0) fail("layer " + std::to_string(i) + " weight must be >= 0");
        if (i == 0 && l.x_min < skin_x) fail("first layer starts before the skin");
        if (i > 0 && l.x_min < layers[i - 1].x_max) fail("layers " + std::to_string(i - 1) + " and " + std::to_string(i) + " overlap");
    }
}

double SimConfig::tissue_end() const { return layers.empty() ? skin_x : layers.back().x_max; }

BeamSection<double> SimConfig::section() const
{
    const double e = young_modulus * kPascalToNmm2;
    return {e * area, e * second_moment, element_length};
}

std::optional<int> SimConfig::layer_at(double x) const
{
    for (std::size_t i = 0; i < layers.size(); ++i)
        if (x >= layers[i].x_min && x < layers[i].x_max) return static_cast<int>(i);
    return std::nullopt;
}

SimConfig scale_tissue_stiffness(SimConfig config, double scale)
{
    for (auto& l : config.layers) l.mu *= scale;
    return config;
}

namespace {

using Vector6 = Eigen::Matrix<double, 6, 1>;

struct PointSample {
    int element;  // index a of the element (a, a+1)
    double y;
    Vector6 grad;  // dy / d(x_a, y_a, th_a, x_b, y_b, th_b)
};

std::optional<PointSample> sample_point(const Eigen::Matrix<double, Eigen::Dynamic, 3>& nodes, double X)
{
    const int n = static_cast<int>(nodes.rows());
    if (n < 2 || X < nodes(0, 0) || X > nodes(n - 1, 0)) return std::nullopt;
    const double* xs = nodes.col(0).data();
    int a = static_cast<int>(std::upper_bound(xs, xs + n, X) - xs) - 1;
    a = std::clamp(a, 0, n - 2);

    const double xa = nodes(a, 0), ya = nodes(a, 1), ta = nodes(a, 2);
    const double xb = nodes(a + 1, 0), yb = nodes(a + 1, 1), tb = nodes(a + 1, 2);
    const double h = xb - xa;
    if (!(h > 0)) return std::nullopt;
    const double xi = (X - xa) / h;
    const double sa = std::tan(ta), sb = std::tan(tb);

    const double xi2 = xi * xi, xi3 = xi2 * xi;
    const double H1 = 1 - 3 * xi2 + 2 * xi3, H2 = xi - 2 * xi2 + xi3;
    const double H3 = 3 * xi2 - 2 * xi3, H4 = -xi2 + xi3;
    const double dH1 = -6 * xi + 6 * xi2, dH2 = 1 - 4 * xi + 3 * xi2;
    const double dH3 = 6 * xi - 6 * xi2, dH4 = -2 * xi + 3 * xi2;

    PointSample p;
    p.element = a;
    p.y = H1 * ya + h * H2 * sa + H3 * yb + h * H4 * sb;
    const double dy_dxi = dH1 * ya + h * dH2 * sa + dH3 * yb + h * dH4 * sb;
    const double dy_dh = H2 * sa + H4 * sb;
    p.grad(0) = dy_dxi * (xi - 1) / h - dy_dh;
    p.grad(1) = H1;
    p.grad(2) = h * H2 * (1 + sa * sa);
    p.grad(3) = -dy_dxi * xi / h + dy_dh;
    p.grad(4) = H3;
    p.grad(5) = h * H4 * (1 + sb * sb);
    return p;
}

struct LoadCase {
    bool guide_active = false;
    double guide_y = 0.0;
    Eigen::Vector2d tip_load = Eigen::Vector2d::Zero();
    std::vector<int> pinned;  // prescribed scalar DOFs
};

struct Assembly {
    Eigen::VectorXd residual;
    BlockTridiagonal<double, 3> tangent;
    double energy = 0.0;
    bool valid = true;
};

using NodeMatrix = Eigen::Matrix<double, Eigen::Dynamic, 3>;

Eigen::VectorXd flatten(const NodeMatrix& nodes)
{
    Eigen::VectorXd q(nodes.rows() * 3);
    for (Eigen::Index i = 0; i < nodes.rows(); ++i) q.segment<3>(3 * i) = nodes.row(i).transpose();
    return q;
}

NodeMatrix unflatten(const Eigen::VectorXd& q)
{
    NodeMatrix nodes(q.size() / 3, 3);
    for (Eigen::Index i = 0; i < nodes.rows(); ++i) nodes.row(i) = q.segment<3>(3 * i).transpose();
    return nodes;
}

Assembly assemble(const SimConfig& config, const SimState& state, const NodeMatrix& nodes, const LoadCase& loads,
                  bool with_tangent)
{
    const int n = static_cast<int>(nodes.rows());
    Assembly sys;
    sys.residual = Eigen::VectorXd::Zero(3 * n);
    if (with_tangent) sys.tangent.resize(n);

    const auto sec = config.section();
    for (int e = 0; e + 1 < n; ++e) {
        Vector6 qe;
        qe << nodes.row(e).transpose(), nodes.row(e + 1).transpose();
        const CorotationalBeam<double> beam(sec, qe);
        sys.energy += beam.energy;
        sys.residual.segment<6>(3 * e) += beam.force;
        if (with_tangent) sys.tangent.add_pair(e, beam.stiffness);
    }

    if (loads.guide_active) {
        if (auto p = sample_point(nodes, config.guide_x)) {
            const double k = config.solver.guide_stiffness;
            const double gap = p->y - loads.guide_y;
            sys.energy += 0.5 * k * gap * gap;
            sys.residual.segment<6>(3 * p->element) += k * gap * p->grad;
            if (with_tangent) sys.tangent.add_pair(p->element, k * p->grad * p->grad.transpose());
        }
    }

    const double hc = config.contact_spacing;
    for (const auto& cp : state.contacts) {
        auto p = sample_point(nodes, cp.station_x);
        if (!p) continue;
        const double d = p->y - cp.anchor_y;
        if (!(std::abs(d) < config.t_char)) {
            sys.valid = false;
            return sys;
        }
        const auto& layer = config.layers[cp.layer_id];
        const OgdenContactLaw<double> law{layer.mu, layer.alpha, cp.weight, config.t_char};
        sys.energy += hc * law.line_energy(d);
        const double slope = -hc * law.force(d);
        sys.residual.segment<6>(3 * p->element) += slope * p->grad;
        if (with_tangent) sys.tangent.add_pair(p->element, hc * law.stiffness(d) * p->grad * p->grad.transpose());
    }

    sys.residual.segment<2>(3 * (n - 1)) -= loads.tip_load;
    sys.energy -= loads.tip_load.dot(nodes.row(n - 1).head<2>().transpose());

    for (int dof : loads.pinned) {
        sys.residual(dof) = 0.0;
        if (with_tangent) sys.tangent.pin(dof);
    }
    if (!sys.residual.allFinite() || !std::isfinite(sys.energy)) sys.valid = false;
    return sys;
}

bool guide_engaged(const SimConfig& config, const NodeMatrix& nodes)
{
    const int n = static_cast<int>(nodes.rows());
    return config.guide_enabled && nodes(0, 0) < config.guide_x && nodes(n - 1, 0) >= config.guide_x;
}

double bevel_force_for(const SimConfig& config, double tip_x, double advance, int bvl)
{
    if (!(advance > 0.0) || config.bevel_offset == 0.0 || !config.inside_tissue(tip_x)) return 0.0;
    const auto layer = config.layer_at(tip_x);
    if (!layer) return 0.0;
    return bvl * config.bevel_gain * config.layers[*layer].mu * kPascalToNmm2 * config.bevel_offset;
}

// Boundary conditions and loads implied by a state.
LoadCase load_case(const SimConfig& config, const SimState& state, const EquilibriumOptions& options,
                   NodeMatrix& nodes)
{
    const int n = static_cast<int>(nodes.rows());
    LoadCase loads;
    loads.guide_active = guide_engaged(config, nodes);
    loads.guide_y = state.guide_y;
    loads.tip_load = options.tip_load;
    loads.tip_load.y() += bevel_force_for(config, nodes(n - 1, 0), state.bevel_load != 0 ? 1.0 : 0.0, state.bevel_load);

    nodes(0, 1) = state.base_y;
    nodes(0, 2) = state.base_theta;
    loads.pinned = {1, 2};
    if (options.tip_position) {
        nodes(n - 1, 0) = options.tip_position->x();
        nodes(n - 1, 1) = options.tip_position->y();
        loads.pinned.push_back(3 * (n - 1));
        loads.pinned.push_back(3 * (n - 1) + 1);
    } else {
        nodes(0, 0) = state.base_x;
        loads.pinned.push_back(0);
    }
    return loads;
}

}  // namespace

double effective_tolerance(const SimConfig& config, const Eigen::Matrix<double, Eigen::Dynamic, 3>& nodes)
{
    // Axial forces carry the rounding error of absolute coordinates times EA/L.
    const auto sec = config.section();
    const double scale = nodes.col(0).cwiseAbs().maxCoeff() + config.element_length;
    const double floor = 16.0 * std::numeric_limits<double>::epsilon() * sec.axial_rigidity / sec.rest_length * scale;
    return std::max(config.solver.tolerance, floor);
}

SimState new_simulation(const SimConfig& config)
{
    config.validate();
    SimState s;
    const int n = config.n_nodes;
    const double tip_x = config.skin_x - config.initial_tip_to_skin;
    s.base_x = tip_x - config.needle_length();
    s.needle.nodes = NodeMatrix::Zero(n, 3);
    for (int i = 0; i < n; ++i) s.needle.nodes(i, 0) = s.base_x + i * config.element_length;
    s.needle.nodes(n - 1, 0) = tip_x;
    s.needle.bvl = kBevelUp;
    return s;
}

SimState solve_equilibrium(const SimConfig& config, const SimState& state, const EquilibriumOptions& options)
{
    SimState out = state;
    NodeMatrix nodes = state.needle.nodes;
    const LoadCase loads = load_case(config, state, options, nodes);
    const double tol = effective_tolerance(config, nodes);

    Eigen::VectorXd q = flatten(nodes);
    Assembly sys = assemble(config, state, nodes, loads, true);
    if (!sys.valid) throw SolverError("invalid starting configuration", std::numeric_limits<double>::infinity());
    double rnorm = sys.residual.lpNorm<Eigen::Infinity>();

    for (int it = 0; it < config.solver.max_newton_iters && rnorm > tol; ++it) {
        Eigen::VectorXd dq;
        if (!sys.tangent.solve(-sys.residual, dq)) throw SolverError("singular tangent", rnorm);

        double alpha = 1.0;
        bool accepted = false;
        for (int ls = 0; ls < 30; ++ls, alpha *= 0.5) {
            const Eigen::VectorXd trial = q + alpha * dq;
            const NodeMatrix tn = unflatten(trial);
            Assembly ts = assemble(config, state, tn, loads, true);
            if (!ts.valid) continue;
            const double tr = ts.residual.lpNorm<Eigen::Infinity>();
            if (tr < rnorm || ts.energy < sys.energy) {
                q = trial;
                sys = std::move(ts);
                rnorm = tr;
                accepted = true;
                break;
            }
        }
        if (!accepted) break;
    }
    if (!(rnorm <= tol)) throw SolverError("equilibrium iteration did not converge", rnorm);

    out.needle.nodes = unflatten(q);
    return out;
}

double residual_norm(const SimConfig& config, const SimState& state, const EquilibriumOptions& options)
{
    NodeMatrix nodes = state.needle.nodes;
    const LoadCase loads = load_case(config, state, options, nodes);
    const Assembly sys = assemble(config, state, nodes, loads, false);
    if (!sys.valid) return std::numeric_limits<double>::infinity();
    return sys.residual.lpNorm<Eigen::Infinity>();
}

std::optional<double> lateral_position_at(const NeedleState& needle, double x)
{
    if (auto p = sample_point(needle.nodes, x)) return p->y;
    return std::nullopt;
}

SimState update_contacts(const SimConfig& config, const SimState& state)
{
    SimState out = state;
    const double tip_x = state.needle.nodes(state.needle.size() - 1, 0);
    const double h = config.contact_spacing;
    const double reach = std::min(tip_x, config.tissue_end());
    long count = 0;
    if (reach > config.skin_x) {
        count = static_cast<long>(std::floor((reach - config.skin_x) / h + 1e-9));
        while (count > 0 && !(config.skin_x + count * h < config.tissue_end())) --count;
    }

    auto& cs = out.contacts;
    while (static_cast<long>(cs.size()) > count) cs.pop_back();
    for (long k = static_cast<long>(cs.size()) + 1; k <= count; ++k) {
        const double x = config.skin_x + k * h;
        const auto layer = config.layer_at(x);
        if (!layer) continue;
        const auto y = lateral_position_at(state.needle, x);
        ContactPoint cp;
        cp.station_x = x;
        cp.anchor_y = y.value_or(0.0);
        cp.layer_id = *layer;
        cp.weight = config.layers[*layer].weight;
        cp.created_step = state.step_index;
        cs.push_back(cp);
    }
    return out;
}

SimState step(const SimConfig& config, const SimState& state, const ControlInput& input)
{
    if (!config.limits.admits(input)) throw ConfigError("control input outside actuator limits");
    SimState next = state;
    if (input.flip == kFlip) next.needle.bvl = -next.needle.bvl;
    next.base_x += input.db_x;
    next.needle.nodes.col(0).array() += input.db_x;
    next.guide_y += input.dg_y;
    if (input.db_x > 0.0) next.bevel_load = next.needle.bvl;
    next.step_index = state.step_index + 1;
    next = solve_equilibrium(config, next);
    return update_contacts(config, next);
}

double contact_force(const ContactPoint& cp, double deflection, std::span<const TissueLayer> layers, double t_char)
{
    const auto& layer = layers[cp.layer_id];
    return OgdenContactLaw<double>{layer.mu, layer.alpha, cp.weight, t_char}.force(deflection);
}

std::vector<double> contact_deflections(const SimState& state)
{
    std::vector<double> out;
    out.reserve(state.contacts.size());
    for (const auto& cp : state.contacts) {
        const auto y = lateral_position_at(state.needle, cp.station_x);
        out.push_back(y ? *y - cp.anchor_y : std::numeric_limits<double>::quiet_NaN());
    }
    return out;
}

double strain_energy(const SimConfig& config, const SimState& state)
{
    const auto defl = contact_deflections(state);
    double w = 0.0;
    for (std::size_t i = 0; i < defl.size(); ++i) {
        if (std::isnan(defl[i])) continue;
        const auto& cp = state.contacts[i];
        const auto& layer = config.layers[cp.layer_id];
        w += OgdenContactLaw<double>{layer.mu, layer.alpha, cp.weight, config.t_char}.density(defl[i]);
    }
    return w;
}

double bevel_tip_force(const SimConfig& config, const SimState& state, const ControlInput& input)
{
    const int bvl = input.flip == kFlip ? -state.needle.bvl : state.needle.bvl;
    const double tip_x = state.needle.nodes(state.needle.size() - 1, 0) + input.db_x;
    return bevel_force_for(config, tip_x, input.db_x, bvl);
}

Eigen::Vector3d tip_pose(const SimState& state)
{
    return state.needle.nodes.row(state.needle.size() - 1).transpose();
}

bool tip_in_tissue(const SimConfig& config, const SimState& state)
{
    return config.inside_tissue(state.needle.nodes(state.needle.size() - 1, 0));
}

}  // namespace flexneedle
