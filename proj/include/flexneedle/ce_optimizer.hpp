#pragma once

// Cross-entropy search over Gaussian-distributed parameter vectors.
//
// Iteration j draws N samples from N(mu_{j-1}, Sigma_{j-1}), keeps the samples whose
// cost is at or below the previous threshold gamma_{j-1} (gamma_0 = +inf), sets the
// new threshold to the ceil(rho N)-th smallest cost, and refits mean and scatter
// on the elites. The refit covariance is blended with the previous one by a
// constant factor and floored on the diagonal.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <exception>
#include <functional>
#include <limits>
#include <numeric>
#include <random>
#include <thread>
#include <vector>

#include <Eigen/Dense>

#include "flexneedle/errors.hpp"

namespace flexneedle {

template <typename Scalar = double>
struct CEDistribution {
    using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
    using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

    Vector mean;
    Matrix covariance;

    Eigen::Index dimension() const { return mean.size(); }

    static CEDistribution isotropic(const Vector& mean, Scalar variance)
    {
        return {mean, Matrix::Identity(mean.size(), mean.size()) * variance};
    }
};

struct CEParams {
    int sample_count = 100;
    double elite_fraction = 0.1;
    int max_iterations = 50;
    double tolerance = 1e-4;         ///< stop when the mean moves less than this
    double regularization = 1e-6;    ///< diagonal covariance floor
    double smoothing = 0.8;          ///< weight of the refit covariance
    std::uint64_t seed = 1;
    int threads = 1;
    std::vector<int> frozen;         ///< dimensions held at the initial mean

    int elite_count() const { return static_cast<int>(std::ceil(elite_fraction * sample_count - 1e-12)); }

    void validate() const
    {
        if (sample_count < 2) throw ConfigError("CE sample_count must be >= 2");
        if (!(elite_fraction > 0.0 && elite_fraction < 1.0)) throw ConfigError("CE elite_fraction must lie in (0, 1)");
        if (elite_count() < 2) throw ConfigError("CE needs ceil(rho N) >= 2");
        if (max_iterations < 1) throw ConfigError("CE max_iterations must be >= 1");
        if (!(smoothing > 0.0 && smoothing <= 1.0)) throw ConfigError("CE smoothing must lie in (0, 1]");
        if (regularization < 0.0) throw ConfigError("CE regularization must be >= 0");
    }
};

template <typename Scalar = double>
struct CEIteration {
    Scalar gamma;
    Scalar best_cost;  ///< best cost seen so far
    Eigen::Matrix<Scalar, Eigen::Dynamic, 1> mean;
    int elite_count;
};

template <typename Scalar = double>
struct CEResult {
    Eigen::Matrix<Scalar, Eigen::Dynamic, 1> best_sample;
    Scalar best_cost = std::numeric_limits<Scalar>::infinity();
    CEDistribution<Scalar> distribution;
    std::vector<CEIteration<Scalar>> history;
};

/// The ceil(rho N)-th smallest cost.
template <typename Scalar>
Scalar quantile_threshold(std::vector<Scalar> costs, double rho)
{
    if (costs.empty()) throw ConfigError("quantile of an empty cost set");
    const auto n = static_cast<double>(costs.size());
    auto k = static_cast<std::size_t>(std::ceil(rho * n - 1e-12));
    k = std::clamp<std::size_t>(k, 1, costs.size());
    std::nth_element(costs.begin(), costs.begin() + (k - 1), costs.end());
    return costs[k - 1];
}

/// Indices of samples with cost <= gamma_prev; when none qualify, the
/// `fallback_count` lowest-cost samples (ties broken by index).
template <typename Scalar>
std::vector<int> elite_set(const std::vector<Scalar>& costs, Scalar gamma_prev, int fallback_count)
{
    std::vector<int> idx;
    for (int i = 0; i < static_cast<int>(costs.size()); ++i)
        if (costs[i] <= gamma_prev) idx.push_back(i);
    if (!idx.empty()) return idx;

    idx.resize(costs.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) { return costs[a] < costs[b]; });
    idx.resize(std::min<std::size_t>(fallback_count, idx.size()));
    return idx;
}

/// Elite mean and biased (1/|E|) scatter; columns of `elites` are samples.
template <typename Derived>
CEDistribution<typename Derived::Scalar> update_params(const Eigen::MatrixBase<Derived>& elites)
{
    using Scalar = typename Derived::Scalar;
    if (elites.cols() < 1) throw ConfigError("update_params needs at least one elite");
    CEDistribution<Scalar> d;
    d.mean = elites.rowwise().mean();
    const auto centered = (elites.colwise() - d.mean).eval();
    d.covariance = centered * centered.transpose() / Scalar(elites.cols());
    return d;
}

/// Symmetric square root factor A with A A^T = Sigma (negative eigenvalues clipped).
template <typename Scalar>
Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> covariance_factor(
    const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& sigma)
{
    const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> sym = (sigma + sigma.transpose()) / Scalar(2);
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>> es(sym);
    const auto root = es.eigenvalues().cwiseMax(Scalar(0)).cwiseSqrt();
    return es.eigenvectors() * root.asDiagonal();
}

/// Evaluates f(i) for i in [0, count) on up to `threads` workers; exceptions are
/// rethrown on the caller.
template <typename F>
void parallel_for(int count, int threads, F&& f)
{
    threads = std::max(1, std::min(threads, count));
    if (threads == 1) {
        for (int i = 0; i < count; ++i) f(i);
        return;
    }
    std::vector<std::exception_ptr> errors(threads);
    std::vector<std::thread> pool;
    for (int t = 0; t < threads; ++t) {
        pool.emplace_back([&, t] {
            try {
                for (int i = t; i < count; i += threads) f(i);
            } catch (...) {
                errors[t] = std::current_exception();
            }
        });
    }
    for (auto& th : pool) th.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

template <typename Scalar = double>
class CrossEntropyOptimizer {
public:
    using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
    using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
    using Objective = std::function<Scalar(const Vector&)>;

    explicit CrossEntropyOptimizer(CEParams params) : params_(std::move(params)) { params_.validate(); }

    const CEParams& params() const { return params_; }

    CEResult<Scalar> optimize(const Objective& objective, const CEDistribution<Scalar>& init) const
    {
        const Eigen::Index dim = init.dimension();
        if (dim == 0) throw ConfigError("CE distribution has zero dimension");
        if (init.covariance.rows() != dim || init.covariance.cols() != dim)
            throw ConfigError("CE covariance shape does not match the mean");

        std::vector<bool> frozen(dim, false);
        for (int f : params_.frozen) {
            if (f < 0 || f >= dim) throw ConfigError("CE frozen dimension out of range");
            frozen[f] = true;
        }

        const int N = params_.sample_count;
        const int k = params_.elite_count();
        std::mt19937_64 rng(params_.seed);
        std::normal_distribution<Scalar> normal(Scalar(0), Scalar(1));

        CEResult<Scalar> result;
        result.distribution = init;
        mask(result.distribution.covariance, frozen);
        Scalar gamma_prev = std::numeric_limits<Scalar>::infinity();

        Matrix samples(dim, N);
        std::vector<Scalar> costs(N);
        for (int it = 0; it < params_.max_iterations; ++it) {
            const auto& dist = result.distribution;
            const Matrix factor = covariance_factor<Scalar>(dist.covariance);
            for (int i = 0; i < N; ++i) {
                Vector xi(dim);
                for (Eigen::Index d = 0; d < dim; ++d) xi(d) = normal(rng);
                samples.col(i) = dist.mean + factor * xi;
                for (Eigen::Index d = 0; d < dim; ++d)
                    if (frozen[d]) samples(d, i) = dist.mean(d);
            }

            parallel_for(N, params_.threads, [&](int i) { costs[i] = objective(samples.col(i)); });

            for (int i = 0; i < N; ++i) {
                if (costs[i] < result.best_cost) {
                    result.best_cost = costs[i];
                    result.best_sample = samples.col(i);
                }
            }

            const auto elites = elite_set(costs, gamma_prev, k);
            Matrix chosen(dim, static_cast<Eigen::Index>(elites.size()));
            for (std::size_t e = 0; e < elites.size(); ++e) chosen.col(e) = samples.col(elites[e]);
            gamma_prev = quantile_threshold(costs, params_.elite_fraction);

            CEDistribution<Scalar> next = update_params(chosen);
            const Scalar s = Scalar(params_.smoothing);
            next.covariance = s * next.covariance + (Scalar(1) - s) * dist.covariance;
            for (Eigen::Index d = 0; d < dim; ++d) next.covariance(d, d) += Scalar(params_.regularization);
            for (Eigen::Index d = 0; d < dim; ++d)
                if (frozen[d]) next.mean(d) = init.mean(d);
            mask(next.covariance, frozen);

            const Scalar shift = (next.mean - dist.mean).norm();
            result.distribution = std::move(next);
            result.history.push_back({gamma_prev, result.best_cost, result.distribution.mean,
                                      static_cast<int>(elites.size())});
            if (shift < Scalar(params_.tolerance)) break;
        }
        return result;
    }

private:
    static void mask(Matrix& cov, const std::vector<bool>& frozen)
    {
        for (Eigen::Index d = 0; d < cov.rows(); ++d) {
            if (!frozen[d]) continue;
            cov.row(d).setZero();
            cov.col(d).setZero();
        }
    }

    CEParams params_;
};

/// Free-function form of CrossEntropyOptimizer::optimize.
template <typename Scalar = double>
CEResult<Scalar> optimize(const typename CrossEntropyOptimizer<Scalar>::Objective& objective,
                          const CEDistribution<Scalar>& init, const CEParams& params)
{
    return CrossEntropyOptimizer<Scalar>(params).optimize(objective, init);
}

}  // namespace flexneedle
