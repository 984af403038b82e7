#include "flexneedle/scenario.hpp"

#include <cmath>
#include <fstream>
#include <numbers>
#include <set>
#include <sstream>

#include <yaml-cpp/yaml.h>

#include "flexneedle/errors.hpp"

namespace flexneedle {

std::vector<Eigen::Vector2d> target_grid(double skin_x, const std::vector<double>& depths,
                                         const std::vector<double>& offsets)
{
    std::vector<Eigen::Vector2d> out;
    for (double d : depths)
        for (double o : offsets) out.emplace_back(skin_x + d, o);
    return out;
}

Scenario default_scenario()
{
    Scenario s;
    s.sim = phantom_config();
    s.targets = target_grid(s.sim.skin_x, {25, 30, 35, 40, 45}, {-5, 0, 5});
    s.repetitions = 10;
    s.plant = {0.5, 0.0, 1.1};
    return s;
}

void Scenario::validate() const
{
    sim.validate();
    if (targets.empty()) throw ConfigError("targets: at least one target is required");
    for (std::size_t i = 0; i < targets.size(); ++i)
        if (!sim.inside_tissue(targets[i].x()))
            throw ConfigError("targets: target " + std::to_string(i) + " lies outside the tissue");
    if (repetitions < 1) throw ConfigError("repetitions must be >= 1");
    if (!(plant.mu_scale > 0)) throw ConfigError("plant.mu_scale must be > 0");
    sensor.validate();
    weights.validate();
    plan.validate();
    track.validate();
    kinematic.validate();
}

SimState perturbed_initial_state(const SimConfig& config, const PlantPerturbation& p)
{
    SimState s = new_simulation(config);
    if (p.lateral_offset == 0.0 && p.angular_offset == 0.0) return s;
    const double c = std::cos(p.angular_offset), sn = std::sin(p.angular_offset);
    auto& nodes = s.needle.nodes;
    for (Eigen::Index i = 0; i < nodes.rows(); ++i) {
        const double dx = nodes(i, 0) - s.base_x;
        const double dy = nodes(i, 1);
        nodes(i, 0) = s.base_x + c * dx - sn * dy;
        nodes(i, 1) = p.lateral_offset + sn * dx + c * dy;
        nodes(i, 2) = p.angular_offset;
    }
    s.base_y = p.lateral_offset;
    s.base_theta = p.angular_offset;
    s.guide_y = p.lateral_offset + std::tan(p.angular_offset) * (config.guide_x - s.base_x);
    return solve_equilibrium(config, s);
}

namespace {

// Keyed access with diagnostics that name the full key path.
class Section {
public:
    Section(YAML::Node node, std::string path) : node_(std::move(node)), path_(std::move(path)) {}

    YAML::Node get(const std::string& key) const { return static_cast<const YAML::Node&>(node_)[key]; }
    bool has(const std::string& key) const { return get(key).IsDefined() && !get(key).IsNull(); }
    const std::string& path() const { return path_; }

    template <typename T>
    void read(const std::string& key, T& out)
    {
        seen_.insert(key);
        if (!has(key)) return;
        try {
            out = get(key).as<T>();
        } catch (const YAML::Exception&) {
            throw ConfigError("scenario key '" + name(key) + "' has the wrong type");
        }
    }

    template <typename T>
    T require(const std::string& key)
    {
        seen_.insert(key);
        if (!has(key)) throw ConfigError("scenario key '" + name(key) + "' is required");
        T out{};
        read(key, out);
        return out;
    }

    Section child(const std::string& key)
    {
        seen_.insert(key);
        YAML::Node n = get(key);
        if (n.IsDefined() && !n.IsNull() && !n.IsMap()) throw ConfigError("scenario section '" + name(key) + "' must be a map");
        return Section(n.IsDefined() && !n.IsNull() ? n : YAML::Node(YAML::NodeType::Map), name(key));
    }

    Section required_child(const std::string& key)
    {
        if (!has(key)) throw ConfigError("scenario section '" + name(key) + "' is missing");
        return child(key);
    }

    YAML::Node raw(const std::string& key)
    {
        seen_.insert(key);
        return get(key);
    }

    std::string name(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

    /// Rejects keys that were never looked up.
    void finish() const
    {
        for (const auto& kv : node_) {
            const auto key = kv.first.as<std::string>();
            if (!seen_.count(key)) throw ConfigError("unknown scenario key '" + name(key) + "'");
        }
    }

private:
    YAML::Node node_;
    std::string path_;
    std::set<std::string> seen_;
};

void positive(double v, const std::string& key)
{
    if (!(v > 0)) throw ConfigError("scenario key '" + key + "' must be > 0");
}

void read_ce(Section& sec, CEParams& ce)
{
    sec.read("samples", ce.sample_count);
    sec.read("elite_fraction", ce.elite_fraction);
    sec.read("iterations", ce.max_iterations);
    sec.read("tolerance", ce.tolerance);
    sec.read("regularization", ce.regularization);
    sec.read("smoothing", ce.smoothing);
    try {
        ce.validate();
    } catch (const ConfigError& e) {
        throw ConfigError(sec.path() + ": " + e.what());
    }
}

Scenario from_yaml(const YAML::Node& root)
{
    if (!root.IsMap()) throw ConfigError("scenario root must be a map");
    Scenario s = default_scenario();
    Section top(root, "");
    SimConfig& c = s.sim;

    {
        auto sec = top.required_child("needle");
        sec.read("n_nodes", c.n_nodes);
        sec.read("element_length_mm", c.element_length);
        if (!(c.element_length > 0)) throw ConfigError("scenario key 'needle.element_length_mm' must be > 0");
        if (sec.has("young_modulus_gpa")) c.young_modulus = sec.require<double>("young_modulus_gpa") * 1e9;
        if (sec.has("outer_diameter_mm")) {
            const auto od = sec.require<double>("outer_diameter_mm");
            positive(od, "needle.outer_diameter_mm");
            c.second_moment = circular_second_moment(od);
            c.area = circular_area(od);
        }
        sec.read("bevel_offset_mm", c.bevel_offset);
        sec.read("bevel_gain", c.bevel_gain);
        sec.finish();
    }
    {
        auto sec = top.required_child("tissue");
        sec.read("skin_x_mm", c.skin_x);
        YAML::Node layers = sec.raw("layers");
        if (!layers.IsDefined() || !layers.IsSequence() || layers.size() == 0)
            throw ConfigError("scenario key 'tissue.layers' must be a non-empty list");
        std::vector<LayerSpec> specs;
        for (std::size_t i = 0; i < layers.size(); ++i) {
            Section ls(layers[i], "tissue.layers[" + std::to_string(i) + "]");
            LayerSpec spec{ls.require<double>("depth_mm"), ls.require<double>("mu_kpa") * 1e3, ls.require<double>("alpha")};
            ls.read("weight", spec.weight);
            ls.finish();
            specs.push_back(spec);
        }
        c.layers = stack_layers(c.skin_x, specs);
        sec.finish();
    }
    {
        auto sec = top.child("geometry");
        double guide_to_skin = c.skin_x - c.guide_x;
        sec.read("guide_to_skin_mm", guide_to_skin);
        c.guide_x = c.skin_x - guide_to_skin;
        sec.read("tip_to_skin_mm", c.initial_tip_to_skin);
        sec.read("guide_enabled", c.guide_enabled);
        sec.finish();
    }
    {
        auto sec = top.child("solver");
        sec.read("tolerance", c.solver.tolerance);
        sec.read("max_newton_iters", c.solver.max_newton_iters);
        sec.read("contact_spacing_mm", c.contact_spacing);
        sec.read("t_char_mm", c.t_char);
        sec.read("guide_stiffness", c.solver.guide_stiffness);
        sec.read("feedback_max_correction_mm", c.solver.feedback_max_correction);
        sec.finish();
    }
    {
        auto sec = top.child("limits");
        sec.read("db_x_max_mm", c.limits.db_x_max);
        sec.read("dg_y_max_mm", c.limits.dg_y_max);
        sec.finish();
    }
    c.validate();

    {
        auto sec = top.child("targets");
        if (sec.has("points")) {
            s.targets.clear();
            YAML::Node pts = sec.raw("points");
            if (!pts.IsSequence()) throw ConfigError("scenario key 'targets.points' must be a list of [depth, offset]");
            for (const auto& p : pts) {
                if (!p.IsSequence() || p.size() != 2) throw ConfigError("scenario key 'targets.points' entries must be [depth, offset]");
                s.targets.emplace_back(c.skin_x + p[0].as<double>(), p[1].as<double>());
            }
        } else {
            std::vector<double> depths{25, 30, 35, 40, 45}, offsets{-5, 0, 5};
            sec.read("depths_mm", depths);
            sec.read("offsets_mm", offsets);
            s.targets = target_grid(c.skin_x, depths, offsets);
        }
        sec.read("repetitions", s.repetitions);
        sec.finish();
    }
    {
        auto sec = top.child("plant");
        sec.read("lateral_offset_mm", s.plant.lateral_offset);
        sec.read("angular_offset_rad", s.plant.angular_offset);
        sec.read("mu_scale", s.plant.mu_scale);
        sec.finish();
    }
    {
        auto sec = top.child("sensor");
        auto& m = s.sensor;
        sec.read("indicator", m.indicator);
        sec.read("ideal_bias_mean_mm", m.ideal_bias_mean);
        sec.read("ideal_bias_spread_mm", m.ideal_bias_spread);
        sec.read("noisy_slope_mm", m.noisy_slope);
        sec.read("noisy_intercept_mm", m.noisy_intercept);
        sec.read("jitter_mm", m.jitter);
        sec.read("indicator_threshold", m.indicator_threshold);
        sec.finish();
    }
    {
        auto sec = top.child("weights");
        auto& w = s.weights;
        sec.read("q_lateral", w.q_lateral);
        if (sec.has("r")) {
            const auto r = sec.require<std::vector<double>>("r");
            if (r.size() != 3) throw ConfigError("scenario key 'weights.r' must have 3 entries");
            w.r = Eigen::Vector3d(r[0], r[1], r[2]);
        }
        sec.read("gamma1", w.gamma1);
        sec.read("gamma2", w.gamma2);
        sec.read("dt", w.dt);
        auto tr = sec.child("tracking");
        tr.read("w_x", w.tracking.w_x);
        tr.read("w_y", w.tracking.w_y);
        tr.read("w_theta", w.tracking.w_theta);
        tr.finish();
        sec.finish();
    }
    {
        auto sec = top.child("plan");
        auto& p = s.plan;
        sec.read("horizon", p.horizon);
        std::string mode = "manipulation";
        sec.read("mode", mode);
        if (mode == "manipulation")
            p.mode = PlanMode::Manipulation;
        else if (mode == "steering")
            p.mode = PlanMode::Steering;
        else
            throw ConfigError("scenario key 'plan.mode' must be manipulation or steering");
        sec.read("sigma_db", p.sigma_db);
        sec.read("sigma_dg", p.sigma_dg);
        sec.read("sigma_eps", p.sigma_eps);
        sec.read("eps_mean", p.eps_mean);
        sec.read("dg_mean_mm", p.dg_mean);
        sec.read("steering_stiffness_factor", p.steering_stiffness_factor);
        auto ce = sec.child("ce");
        read_ce(ce, p.ce);
        ce.finish();
        sec.finish();
    }
    {
        auto sec = top.child("track");
        auto& t = s.track;
        sec.read("window", t.window);
        sec.read("sigma_db", t.sigma_db);
        sec.read("sigma_dg", t.sigma_dg);
        sec.read("entry_theta_boost", t.entry_theta_boost);
        sec.read("entry_zone_mm", t.entry_zone);
        auto ce = sec.child("ce");
        read_ce(ce, t.ce);
        ce.finish();
        std::string policy = "bang_bang";
        sec.read("flip_policy", policy);
        if (policy == "bang_bang")
            s.flip_policy = FlipPolicy::BangBang;
        else if (policy == "nominal")
            s.flip_policy = FlipPolicy::Nominal;
        else
            throw ConfigError("scenario key 'track.flip_policy' must be bang_bang or nominal");
        sec.finish();
    }
    {
        auto sec = top.child("kinematic");
        sec.read("kappa_per_mm", s.kinematic.kappa);
        sec.read("substep_mm", s.kinematic.substep);
        sec.read("hysteresis_mm", s.kinematic.hysteresis);
        sec.finish();
    }
    top.finish();

    s.track.weight = s.weights.tracking;
    s.track.dt = s.weights.dt;
    s.validate();
    return s;
}

}  // namespace

Scenario parse_scenario_text(const std::string& yaml)
{
    YAML::Node root;
    try {
        root = YAML::Load(yaml);
    } catch (const YAML::Exception& e) {
        throw ConfigError(std::string("scenario is not valid YAML: ") + e.what());
    }
    return from_yaml(root);
}

namespace {

void emit_ce(YAML::Emitter& e, const CEParams& ce)
{
    e << YAML::Key << "ce" << YAML::Value << YAML::BeginMap;
    e << YAML::Key << "samples" << YAML::Value << ce.sample_count;
    e << YAML::Key << "elite_fraction" << YAML::Value << ce.elite_fraction;
    e << YAML::Key << "iterations" << YAML::Value << ce.max_iterations;
    e << YAML::Key << "tolerance" << YAML::Value << ce.tolerance;
    e << YAML::Key << "regularization" << YAML::Value << ce.regularization;
    e << YAML::Key << "smoothing" << YAML::Value << ce.smoothing;
    e << YAML::EndMap;
}

template <typename T>
void kv(YAML::Emitter& e, const char* key, const T& value)
{
    e << YAML::Key << key << YAML::Value << value;
}

}  // namespace

std::string scenario_to_yaml(const Scenario& s)
{
    const SimConfig& c = s.sim;
    YAML::Emitter e;
    e.SetDoublePrecision(17);
    e << YAML::BeginMap;

    e << YAML::Key << "needle" << YAML::Value << YAML::BeginMap;
    kv(e, "n_nodes", c.n_nodes);
    kv(e, "element_length_mm", c.element_length);
    kv(e, "young_modulus_gpa", c.young_modulus * 1e-9);
    kv(e, "outer_diameter_mm", std::pow(64.0 * c.second_moment / std::numbers::pi, 0.25));
    kv(e, "bevel_offset_mm", c.bevel_offset);
    kv(e, "bevel_gain", c.bevel_gain);
    e << YAML::EndMap;

    e << YAML::Key << "tissue" << YAML::Value << YAML::BeginMap;
    kv(e, "skin_x_mm", c.skin_x);
    e << YAML::Key << "layers" << YAML::Value << YAML::BeginSeq;
    for (const auto& l : c.layers) {
        e << YAML::Flow << YAML::BeginMap;
        kv(e, "depth_mm", l.x_max - l.x_min);
        kv(e, "mu_kpa", l.mu * 1e-3);
        kv(e, "alpha", l.alpha);
        kv(e, "weight", l.weight);
        e << YAML::EndMap;
    }
    e << YAML::EndSeq << YAML::EndMap;

    e << YAML::Key << "geometry" << YAML::Value << YAML::BeginMap;
    kv(e, "guide_to_skin_mm", c.skin_x - c.guide_x);
    kv(e, "tip_to_skin_mm", c.initial_tip_to_skin);
    kv(e, "guide_enabled", c.guide_enabled);
    e << YAML::EndMap;

    e << YAML::Key << "solver" << YAML::Value << YAML::BeginMap;
    kv(e, "tolerance", c.solver.tolerance);
    kv(e, "max_newton_iters", c.solver.max_newton_iters);
    kv(e, "contact_spacing_mm", c.contact_spacing);
    kv(e, "t_char_mm", c.t_char);
    kv(e, "guide_stiffness", c.solver.guide_stiffness);
    kv(e, "feedback_max_correction_mm", c.solver.feedback_max_correction);
    e << YAML::EndMap;

    e << YAML::Key << "limits" << YAML::Value << YAML::BeginMap;
    kv(e, "db_x_max_mm", c.limits.db_x_max);
    kv(e, "dg_y_max_mm", c.limits.dg_y_max);
    e << YAML::EndMap;

    e << YAML::Key << "targets" << YAML::Value << YAML::BeginMap;
    e << YAML::Key << "points" << YAML::Value << YAML::BeginSeq;
    for (const auto& t : s.targets) e << YAML::Flow << YAML::BeginSeq << t.x() - c.skin_x << t.y() << YAML::EndSeq;
    e << YAML::EndSeq;
    kv(e, "repetitions", s.repetitions);
    e << YAML::EndMap;

    e << YAML::Key << "plant" << YAML::Value << YAML::BeginMap;
    kv(e, "lateral_offset_mm", s.plant.lateral_offset);
    kv(e, "angular_offset_rad", s.plant.angular_offset);
    kv(e, "mu_scale", s.plant.mu_scale);
    e << YAML::EndMap;

    const auto& m = s.sensor;
    e << YAML::Key << "sensor" << YAML::Value << YAML::BeginMap;
    kv(e, "indicator", m.indicator);
    kv(e, "ideal_bias_mean_mm", m.ideal_bias_mean);
    kv(e, "ideal_bias_spread_mm", m.ideal_bias_spread);
    kv(e, "noisy_slope_mm", m.noisy_slope);
    kv(e, "noisy_intercept_mm", m.noisy_intercept);
    kv(e, "jitter_mm", m.jitter);
    kv(e, "indicator_threshold", m.indicator_threshold);
    e << YAML::EndMap;

    const auto& w = s.weights;
    e << YAML::Key << "weights" << YAML::Value << YAML::BeginMap;
    kv(e, "q_lateral", w.q_lateral);
    e << YAML::Key << "r" << YAML::Value << YAML::Flow << YAML::BeginSeq << w.r(0) << w.r(1) << w.r(2) << YAML::EndSeq;
    kv(e, "gamma1", w.gamma1);
    kv(e, "gamma2", w.gamma2);
    kv(e, "dt", w.dt);
    e << YAML::Key << "tracking" << YAML::Value << YAML::Flow << YAML::BeginMap;
    kv(e, "w_x", w.tracking.w_x);
    kv(e, "w_y", w.tracking.w_y);
    kv(e, "w_theta", w.tracking.w_theta);
    e << YAML::EndMap << YAML::EndMap;

    const auto& p = s.plan;
    e << YAML::Key << "plan" << YAML::Value << YAML::BeginMap;
    kv(e, "horizon", p.horizon);
    kv(e, "mode", p.mode == PlanMode::Steering ? "steering" : "manipulation");
    kv(e, "sigma_db", p.sigma_db);
    kv(e, "sigma_dg", p.sigma_dg);
    kv(e, "sigma_eps", p.sigma_eps);
    kv(e, "eps_mean", p.eps_mean);
    kv(e, "dg_mean_mm", p.dg_mean);
    kv(e, "steering_stiffness_factor", p.steering_stiffness_factor);
    emit_ce(e, p.ce);
    e << YAML::EndMap;

    const auto& t = s.track;
    e << YAML::Key << "track" << YAML::Value << YAML::BeginMap;
    kv(e, "window", t.window);
    kv(e, "sigma_db", t.sigma_db);
    kv(e, "sigma_dg", t.sigma_dg);
    kv(e, "entry_theta_boost", t.entry_theta_boost);
    kv(e, "entry_zone_mm", t.entry_zone);
    kv(e, "flip_policy", s.flip_policy == FlipPolicy::Nominal ? "nominal" : "bang_bang");
    emit_ce(e, t.ce);
    e << YAML::EndMap;

    e << YAML::Key << "kinematic" << YAML::Value << YAML::BeginMap;
    kv(e, "kappa_per_mm", s.kinematic.kappa);
    kv(e, "substep_mm", s.kinematic.substep);
    kv(e, "hysteresis_mm", s.kinematic.hysteresis);
    e << YAML::EndMap;

    e << YAML::EndMap;
    return std::string(e.c_str()) + "\n";
}

Scenario parse_scenario(const std::string& path)
{
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open scenario file '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_scenario_text(ss.str());
}

}  // namespace flexneedle
