#pragma once

#include <cstdint>
#include <span>
#include <functional>
#include <vector>

#include <Eigen/Dense>

#include "metaopt/search_space.hpp"
#include "metaopt/trial.hpp"

namespace metaopt::bo {

/// Number of encoded coordinates: one per numeric parameter plus one per
/// categorical choice (one-hot).
[[nodiscard]] std::size_t encoded_dimension(const space::SearchSpace& space);

/// Maps a valid configuration into [0,1]^d. Throws InvalidConfig.
[[nodiscard]] std::vector<double> encode(const space::SearchSpace& space,
                                         const space::HyperparamConfig& config);

/// Inverse of encode: clamps, rounds integers, argmax over one-hot blocks.
[[nodiscard]] space::HyperparamConfig decode(const space::SearchSpace& space,
                                             std::span<const double> point);

struct KernelParams {
    std::vector<double> length_scales;
    double signal_variance = 1.0;
    double noise_variance = 1e-3;

    bool operator==(const KernelParams&) const = default;
};

struct Prediction {
    double mean = 0.0;      // standardized units
    double variance = 0.0;  // standardized units
};

/// Fitted Gaussian-process surrogate (anisotropic Matern-5/2 kernel) over
/// encoded configurations with standardized loss targets.
class SurrogateState {
public:
    SurrogateState(Eigen::MatrixXd inputs, Eigen::VectorXd targets, double target_mean,
                   double target_scale, KernelParams kernel);

    [[nodiscard]] Prediction predict(std::span<const double> point) const;
    [[nodiscard]] double standardize(double loss) const { return (loss - target_mean_) / target_scale_; }
    [[nodiscard]] double destandardize(double z) const { return z * target_scale_ + target_mean_; }

    [[nodiscard]] const KernelParams& kernel() const noexcept { return kernel_; }
    [[nodiscard]] const Eigen::MatrixXd& inputs() const noexcept { return inputs_; }
    [[nodiscard]] const Eigen::VectorXd& targets() const noexcept { return targets_; }
    [[nodiscard]] double jitter() const noexcept { return jitter_; }
    [[nodiscard]] double log_marginal_likelihood() const noexcept { return log_likelihood_; }

private:
    Eigen::MatrixXd inputs_;
    Eigen::VectorXd targets_;
    double target_mean_;
    double target_scale_;
    KernelParams kernel_;
    double jitter_ = 0.0;
    Eigen::LLT<Eigen::MatrixXd> cholesky_;
    Eigen::VectorXd alpha_;
    double log_likelihood_ = 0.0;
};

/// Matern-5/2 covariance between two encoded points.
[[nodiscard]] double matern52(std::span<const double> a, std::span<const double> b,
                              const KernelParams& kernel);

/// Log marginal likelihood of standardized targets under the given kernel,
/// or -infinity when the kernel matrix cannot be factorized.
[[nodiscard]] double log_marginal_likelihood(const Eigen::MatrixXd& inputs,
                                             const Eigen::VectorXd& targets,
                                             const KernelParams& kernel);

/// Fits the surrogate on every successful trial. Kernel hyperparameters
/// maximize the marginal likelihood over a multi-start bounded search.
/// Throws TooFewTrials (< 2 successes) or IllConditioned.
[[nodiscard]] SurrogateState fit_surrogate(const TrialHistory& history,
                                           const space::SearchSpace& space, std::uint64_t seed);

/// Minimization-convention expected improvement in standardized units.
[[nodiscard]] double expected_improvement(double mean, double sigma, double best);
[[nodiscard]] double expected_improvement(const SurrogateState& state, std::span<const double> point,
                                          double best_loss);

inline constexpr std::size_t kCandidatePool = 2048;
inline constexpr std::size_t kRefinementStarts = 8;

/// EI maximization over a seeded quasi-random pool plus local refinement.
[[nodiscard]] space::HyperparamConfig suggest_next(const SurrogateState& state,
                                                   const space::SearchSpace& space,
                                                   double best_loss, std::uint64_t seed);

struct BoOptions {
    std::size_t n_init = 5;
    std::size_t n_total = 15;
    std::uint64_t seed = 0;
    std::size_t first_trial_index = 1;            // trial ids are "trial_<index>"
    std::function<void(const Trial&)> on_trial;  // called after each evaluation
};

struct BoResult {
    TrialHistory history;
    Incumbent incumbent;
};

/// Seeded uniform initial design followed by EI-driven evaluations. Objective
/// failures become failed trials; throws NoSuccessfulTrials if every initial
/// trial failed.
[[nodiscard]] BoResult run_bo(const Objective& objective, const space::SearchSpace& space,
                              const BoOptions& options);

}  // namespace metaopt::bo
