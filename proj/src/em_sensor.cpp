#include "flexneedle/em_sensor.hpp"

#include <algorithm>
#include <cmath>

#include "flexneedle/errors.hpp"

namespace flexneedle {

SensorModel SensorModel::noiseless()
{
    SensorModel m;
    m.ideal_bias_mean = 0.0;
    m.ideal_bias_spread = 0.0;
    m.noisy_slope = 0.0;
    m.noisy_intercept = 0.0;
    m.jitter = 0.0;
    return m;
}

void SensorModel::validate() const
{
    if (indicator < 0.0 || indicator > em_reference::kIndicatorMax) throw ConfigError("sensor indicator must lie in [0, 9.9]");
    if (ideal_bias_mean < 0 || ideal_bias_spread < 0 || noisy_slope < 0 || noisy_intercept < 0 || jitter < 0 ||
        indicator_threshold < 0)
        throw ConfigError("sensor model magnitudes must be >= 0");
}

EmSensor::EmSensor(SensorModel model, int dims) : model_(model), dims_(dims), rng_(model.seed)
{
    model_.validate();
    if (dims != 2 && dims != 3) throw ConfigError("sensor dimensionality must be 2 or 3");
    redraw_bias();
}

double EmSensor::draw_bias_magnitude(double indicator)
{
    if (indicator <= model_.indicator_threshold) {
        if (model_.ideal_bias_spread == 0.0) return model_.ideal_bias_mean;
        std::normal_distribution<double> n(model_.ideal_bias_mean, model_.ideal_bias_spread);
        return std::max(0.0, n(rng_));
    }
    return model_.noisy_slope * indicator + model_.noisy_intercept;
}

void EmSensor::redraw_bias() { redraw_bias(model_.indicator); }

void EmSensor::redraw_bias(double indicator)
{
    std::normal_distribution<double> n(0.0, 1.0);
    Eigen::VectorXd dir(dims_);
    do {
        for (int i = 0; i < dims_; ++i) dir(i) = n(rng_);
    } while (dir.norm() < 1e-12);
    dir.normalize();
    bias_ = draw_bias_magnitude(indicator) * dir;
}

Eigen::VectorXd EmSensor::read(const Eigen::VectorXd& truth)
{
    if (truth.size() != dims_) throw ConfigError("sensor reading dimension mismatch");
    Eigen::VectorXd out = truth + bias_;
    if (model_.jitter > 0.0) {
        std::normal_distribution<double> n(0.0, model_.jitter / std::sqrt(static_cast<double>(dims_)));
        for (int i = 0; i < dims_; ++i) out(i) += n(rng_);
    }
    return out;
}

Eigen::VectorXd simulate_reading(EmSensor& sensor, const Eigen::VectorXd& true_pos) { return sensor.read(true_pos); }

void GridDataset::validate() const
{
    const int n = points();
    if (n < 1) throw ConfigError("grid dataset needs at least one point");
    if (static_cast<int>(samples.size()) != n || static_cast<int>(indicators.size()) != n)
        throw ConfigError("grid dataset arrays disagree on the point count");
    const int m = samples_per_point();
    if (m < 1) throw ConfigError("grid dataset needs at least one sample per point");
    for (int i = 0; i < n; ++i) {
        if (samples[i].rows() != m || indicators[i].size() != m)
            throw ConfigError("grid point " + std::to_string(i) + " has a different sample count");
        if (samples[i].cols() != dims()) throw ConfigError("grid sample dimensionality mismatch");
    }
}

Eigen::VectorXd mean_position(const Eigen::MatrixXd& samples)
{
    if (samples.rows() < 1) throw ConfigError("mean position of an empty sample set");
    return samples.colwise().mean().transpose();
}

double measurement_error(const Eigen::VectorXd& mean_pos, const Eigen::VectorXd& true_pos)
{
    return (mean_pos - true_pos).norm();
}

double dataset_rmse(std::span<const double> errors)
{
    if (errors.empty()) throw ConfigError("rmse of an empty error set");
    double s = 0.0;
    for (double e : errors) s += e * e;
    return std::sqrt(s / static_cast<double>(errors.size()));
}

double dataset_jitter(const GridDataset& dataset)
{
    dataset.validate();
    double s = 0.0;
    long count = 0;
    for (int i = 0; i < dataset.points(); ++i) {
        const Eigen::RowVectorXd mean = mean_position(dataset.samples[i]).transpose();
        s += (dataset.samples[i].rowwise() - mean).rowwise().squaredNorm().sum();
        count += dataset.samples[i].rows();
    }
    return std::sqrt(s / static_cast<double>(count));
}

IndicatorFit fit_error_indicator(std::span<const std::pair<double, double>> data, double breakpoint)
{
    std::vector<double> ideal;
    std::vector<std::pair<double, double>> noisy;
    for (const auto& p : data) {
        if (p.first <= breakpoint)
            ideal.push_back(p.second);
        else
            noisy.push_back(p);
    }
    if (ideal.size() < 2 || noisy.size() < 2)
        throw ConfigError("indicator fit needs at least two points on each side of the breakpoint");

    IndicatorFit fit;
    fit.ideal_points = static_cast<int>(ideal.size());
    fit.noisy_points = static_cast<int>(noisy.size());
    double mean = 0.0;
    for (double e : ideal) mean += e;
    mean /= static_cast<double>(ideal.size());
    double var = 0.0;
    for (double e : ideal) var += (e - mean) * (e - mean);
    fit.ideal_mean = mean;
    fit.ideal_sd = std::sqrt(var / static_cast<double>(ideal.size() - 1));

    Eigen::MatrixXd A(noisy.size(), 2);
    Eigen::VectorXd b(noisy.size());
    for (std::size_t i = 0; i < noisy.size(); ++i) {
        A(i, 0) = noisy[i].first;
        A(i, 1) = 1.0;
        b(i) = noisy[i].second;
    }
    const Eigen::Vector2d coef = A.colPivHouseholderQr().solve(b);
    fit.slope = coef(0);
    fit.intercept = coef(1);
    return fit;
}

double indicator_threshold(std::span<const double> samples, double percentile)
{
    if (samples.empty()) throw ConfigError("indicator threshold of an empty sample set");
    if (!(percentile > 0.0 && percentile < 100.0)) throw ConfigError("percentile must lie in (0, 100)");
    std::vector<double> sorted(samples.begin(), samples.end());
    std::sort(sorted.begin(), sorted.end());
    const auto n = static_cast<double>(sorted.size());
    auto rank = static_cast<std::size_t>(std::ceil(percentile / 100.0 * n - 1e-9));
    rank = std::clamp<std::size_t>(rank, 1, sorted.size());
    return sorted[rank - 1];
}

ErrorReport analyze_dataset(const GridDataset& dataset, double breakpoint, double percentile)
{
    dataset.validate();
    ErrorReport report;
    std::vector<std::pair<double, double>> pairs;
    std::vector<double> all_indicators;
    for (int i = 0; i < dataset.points(); ++i) {
        const double err = measurement_error(mean_position(dataset.samples[i]), dataset.truth.row(i).transpose());
        const double ind = dataset.indicators[i].mean();
        report.point_errors.push_back(err);
        report.point_indicators.push_back(ind);
        pairs.emplace_back(ind, err);
        all_indicators.insert(all_indicators.end(), dataset.indicators[i].data(),
                              dataset.indicators[i].data() + dataset.indicators[i].size());
    }
    report.rmse = dataset_rmse(report.point_errors);
    report.jitter = dataset_jitter(dataset);
    report.threshold = indicator_threshold(all_indicators, percentile);
    try {
        report.fit = fit_error_indicator(pairs, breakpoint);
    } catch (const ConfigError&) {
        report.fit.reset();
    }
    return report;
}

GridDataset synthesize_grid(const SensorModel& model, const GridSpec& grid, const IndicatorEnvironment& env)
{
    if (grid.points_per_axis < 1 || grid.samples_per_point < 1) throw ConfigError("grid spec must be non-empty");
    EmSensor sensor(model, grid.dims);
    std::mt19937_64 env_rng(model.seed ^ 0x9e3779b97f4a7c15ULL);
    std::normal_distribution<double> ind_dist(env.mean, env.sd);

    const int per = grid.points_per_axis;
    int n = 1;
    for (int d = 0; d < grid.dims; ++d) n *= per;
    const double spacing = per > 1 ? grid.extent / (per - 1) : 0.0;

    GridDataset ds;
    ds.truth.resize(n, grid.dims);
    for (int i = 0; i < n; ++i) {
        int rem = i;
        for (int d = 0; d < grid.dims; ++d) {
            ds.truth(i, d) = (rem % per) * spacing;
            rem /= per;
        }
        const double ind = std::clamp(ind_dist(env_rng), 0.0, em_reference::kIndicatorMax);
        sensor.redraw_bias(ind);
        Eigen::MatrixXd s(grid.samples_per_point, grid.dims);
        for (int j = 0; j < grid.samples_per_point; ++j) s.row(j) = sensor.read(ds.truth.row(i).transpose()).transpose();
        ds.samples.push_back(std::move(s));
        ds.indicators.push_back(Eigen::VectorXd::Constant(grid.samples_per_point, ind));
    }
    return ds;
}

}  // namespace flexneedle
