#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

namespace maskforge {

/// Covariance floor added to every fitted covariance, on the [0,1] color scale.
inline constexpr double kDefaultCovarianceFloor = 1e-3;

/// K-component full-covariance Gaussian mixture over Dim-dimensional samples.
/// Immutable once constructed; evaluation caches the Cholesky factors.
template <int Dim>
class GaussianMixture {
 public:
  using Vector = Eigen::Matrix<double, Dim, 1>;
  using Matrix = Eigen::Matrix<double, Dim, Dim>;

  struct Component {
    double weight = 0.0;
    Vector mean = Vector::Zero();
    Matrix covariance = Matrix::Identity();
  };

  /// Throws std::invalid_argument unless weights are non-negative and sum to 1
  /// (within 1e-9) and every covariance is symmetric positive definite.
  explicit GaussianMixture(std::vector<Component> components);

  int size() const { return static_cast<int>(components_.size()); }
  const std::vector<Component>& components() const { return components_; }
  const Component& component(int k) const { return components_[k]; }

  /// log sum_k w_k N(x; mu_k, Sigma_k).
  double log_density(const Vector& x) const;

  /// log w_k + log N(x; mu_k, Sigma_k); -infinity when w_k == 0.
  double weighted_log_density(int k, const Vector& x) const;

  /// Unweighted log N(x; mu_k, Sigma_k).
  double component_log_density(int k, const Vector& x) const;

  /// argmax_k w_k N(x; mu_k, Sigma_k), lowest index on ties.
  int assign_component(const Vector& x) const;

  /// trace(Sigma_k^{-1}); used by the floor-regularized EM objective.
  double precision_trace(int k) const { return precision_trace_[k]; }

  nlohmann::json to_json() const;

  friend bool operator==(const GaussianMixture& a, const GaussianMixture& b) {
    if (a.components_.size() != b.components_.size()) return false;
    for (std::size_t k = 0; k < a.components_.size(); ++k) {
      const auto& x = a.components_[k];
      const auto& y = b.components_[k];
      if (x.weight != y.weight || x.mean != y.mean || x.covariance != y.covariance) {
        return false;
      }
    }
    return true;
  }

 private:
  std::vector<Component> components_;
  std::vector<Matrix> inverse_cholesky_;
  std::vector<double> log_normalizer_;
  std::vector<double> log_weight_;
  std::vector<double> precision_trace_;
};

using ColorGmm = GaussianMixture<3>;

struct GmmFitOptions {
  int components = 5;
  std::uint64_t seed = 0;
  int max_iterations = 100;
  /// Stop once the relative objective improvement drops below this; 0 runs
  /// exactly max_iterations EM steps.
  double tolerance = 1e-6;
  double covariance_floor = kDefaultCovarianceFloor;
};

template <int Dim>
struct GmmFit {
  GaussianMixture<Dim> model;
  /// Objective before the first EM step and after each step. The objective is
  /// the floor-regularized log-likelihood sum_i log sum_k w_k N(x_i) e^{-eps
  /// tr(Sigma_k^-1)/2}, for which "covariance + eps*I" is the exact M-step, so
  /// EM never decreases it.
  std::vector<double> objective;
  int iterations = 0;
  int reinitialized_components = 0;
};

/// k-means++ seeding, 5 Lloyd iterations, then EM. Deterministic in
/// (samples, options). Throws std::invalid_argument if components < 1 or
/// fewer samples than components.
template <int Dim>
GmmFit<Dim> fit_gmm(std::span<const typename GaussianMixture<Dim>::Vector> samples,
                    const GmmFitOptions& options);

/// EM warm-started from `initial`; `options.components` and `seed` are unused.
template <int Dim>
GmmFit<Dim> refine_gmm(std::span<const typename GaussianMixture<Dim>::Vector> samples,
                       const GaussianMixture<Dim>& initial,
                       const GmmFitOptions& options);

/// Hard-assignment M-step: per-component sample mean/covariance (+ floor) and
/// count-proportional weights. Components with no samples are reseeded at the
/// sample the remaining model explains worst.
template <int Dim>
GaussianMixture<Dim> fit_from_assignments(
    std::span<const typename GaussianMixture<Dim>::Vector> samples,
    std::span<const int> assignment, int components, double covariance_floor);

/// sum_i log_density(x_i).
template <int Dim>
double total_log_likelihood(const GaussianMixture<Dim>& model,
                            std::span<const typename GaussianMixture<Dim>::Vector> samples);

template <int Dim>
double regularized_log_likelihood(
    const GaussianMixture<Dim>& model,
    std::span<const typename GaussianMixture<Dim>::Vector> samples,
    double covariance_floor);

}  // namespace maskforge
