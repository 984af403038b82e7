#pragma once

// Simulated electromagnetic tip tracker and the grid accuracy statistics used to
// characterize it.
//
// Forward model: reading = truth + bias + jitter. The bias is a constant vector per
// run (or per grid point when synthesizing a characterization grid). Its magnitude
// follows the ideal-environment fit while the distortion indicator is at or below
// the threshold and the linear indicator fit above it; its direction is uniform.
// Jitter is i.i.d. zero-mean Gaussian with per-axis sd = jitter / sqrt(dims).

#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace flexneedle {

/// Reference characterization of the 5DOF tip sensor.
namespace em_reference {
inline constexpr double kIdealErrorMean = 0.575;   ///< mm
inline constexpr double kIdealErrorSd = 0.211;     ///< mm
inline constexpr double kNoisySlope = 9.591;       ///< mm per unit indicator
inline constexpr double kNoisyIntercept = 0.051;   ///< mm
inline constexpr double kIndicatorThreshold = 0.0547;
inline constexpr double kIdealRmse = 0.65;         ///< mm, tip sensor, ideal environment
inline constexpr double kIdealJitter = 0.07;       ///< mm
inline constexpr double kNoisyRmse = 1.53;
inline constexpr double kNoisyJitter = 0.04;
inline constexpr double kLinearStageRmseTip = 0.17;  ///< separate linear-stage setup
inline constexpr double kLinearStageRmseRef = 0.25;
inline constexpr double kIdealIndicatorMean = 0.0239;
inline constexpr double kIdealIndicatorSd = 0.0138;
inline constexpr double kNoisyIndicatorMean = 0.1944;
inline constexpr double kNoisyIndicatorSd = 0.1049;
inline constexpr double kNoisyIndicatorMin = 0.0684;
inline constexpr double kIndicatorMax = 9.9;
}  // namespace em_reference

struct SensorModel {
    double indicator = em_reference::kIdealIndicatorMean;
    double ideal_bias_mean = em_reference::kIdealErrorMean;
    double ideal_bias_spread = em_reference::kIdealErrorSd;
    double noisy_slope = em_reference::kNoisySlope;
    double noisy_intercept = em_reference::kNoisyIntercept;
    double jitter = em_reference::kIdealJitter;
    double indicator_threshold = em_reference::kIndicatorThreshold;
    std::uint64_t seed = 1;

    /// All-zero noise: readings equal the truth.
    static SensorModel noiseless();

    void validate() const;
    bool ideal_branch() const { return indicator <= indicator_threshold; }
};

class EmSensor {
public:
    EmSensor(SensorModel model, int dims);

    /// truth + bias + jitter.
    Eigen::VectorXd read(const Eigen::VectorXd& truth);

    /// Draws a fresh constant bias (new run or new grid point).
    void redraw_bias();
    void redraw_bias(double indicator);

    const Eigen::VectorXd& bias() const { return bias_; }
    const SensorModel& model() const { return model_; }
    int dims() const { return dims_; }

private:
    double draw_bias_magnitude(double indicator);

    SensorModel model_;
    int dims_;
    std::mt19937_64 rng_;
    Eigen::VectorXd bias_;
};

/// One reading from `sensor` at `true_pos`.
Eigen::VectorXd simulate_reading(EmSensor& sensor, const Eigen::VectorXd& true_pos);

struct GridDataset {
    Eigen::MatrixXd truth;                 ///< N x d true positions
    std::vector<Eigen::MatrixXd> samples;  ///< per point, M x d readings
    std::vector<Eigen::VectorXd> indicators;  ///< per point, M indicator readings

    int points() const { return static_cast<int>(truth.rows()); }
    int samples_per_point() const { return samples.empty() ? 0 : static_cast<int>(samples.front().rows()); }
    int dims() const { return static_cast<int>(truth.cols()); }
    void validate() const;
};

Eigen::VectorXd mean_position(const Eigen::MatrixXd& samples);
double measurement_error(const Eigen::VectorXd& mean_pos, const Eigen::VectorXd& true_pos);
double dataset_rmse(std::span<const double> errors);
double dataset_jitter(const GridDataset& dataset);

struct IndicatorFit {
    double ideal_mean = 0.0;
    double ideal_sd = 0.0;
    double slope = 0.0;
    double intercept = 0.0;
    int ideal_points = 0;
    int noisy_points = 0;
};

/// Constant fit for indicator <= breakpoint, least-squares line above it.
IndicatorFit fit_error_indicator(std::span<const std::pair<double, double>> indicator_error, double breakpoint);

/// Nearest-rank percentile, percentile in (0, 100).
double indicator_threshold(std::span<const double> samples, double percentile);

struct ErrorReport {
    std::vector<double> point_errors;
    std::vector<double> point_indicators;  ///< mean indicator per point
    double rmse = 0.0;
    double jitter = 0.0;
    std::optional<IndicatorFit> fit;
    double threshold = 0.0;
};

ErrorReport analyze_dataset(const GridDataset& dataset, double breakpoint, double percentile = 95.0);

struct GridSpec {
    int points_per_axis = 5;
    double extent = 100.0;  ///< cube edge [mm]
    int samples_per_point = 500;
    int dims = 3;
};

/// Indicator values per grid point ~ N(mean, sd) clipped to [0, 9.9].
struct IndicatorEnvironment {
    double mean = em_reference::kIdealIndicatorMean;
    double sd = em_reference::kIdealIndicatorSd;

    static IndicatorEnvironment ideal() { return {}; }
    static IndicatorEnvironment noisy()
    {
        return {em_reference::kNoisyIndicatorMean, em_reference::kNoisyIndicatorSd};
    }
};

/// Synthesizes a characterization grid; each point gets its own bias drawn at its
/// indicator value.
GridDataset synthesize_grid(const SensorModel& model, const GridSpec& grid, const IndicatorEnvironment& env);

}  // namespace flexneedle
