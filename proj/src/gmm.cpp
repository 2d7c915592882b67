#include "maskforge/gmm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <stdexcept>
#include <string>

namespace maskforge {
namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr int kKMeansIterations = 5;
// Responsibility mass below this counts as an empty component.
constexpr double kEmptyMass = 1e-10;

double log_sum_exp(std::span<const double> values) {
  double peak = kNegInf;
  for (double v : values) peak = std::max(peak, v);
  if (peak == kNegInf) return kNegInf;
  double sum = 0.0;
  for (double v : values) sum += std::exp(v - peak);
  return peak + std::log(sum);
}

// Uniform double in [0, 1) from the top 53 bits; independent of the standard
// library's distribution implementations.
double uniform01(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

std::size_t uniform_index(std::mt19937_64& rng, std::size_t n) {
  return std::min(n - 1, static_cast<std::size_t>(uniform01(rng) * static_cast<double>(n)));
}

template <int Dim>
using Vec = typename GaussianMixture<Dim>::Vector;
template <int Dim>
using Mat = typename GaussianMixture<Dim>::Matrix;

template <int Dim>
Mat<Dim> sample_covariance(std::span<const Vec<Dim>> samples) {
  Vec<Dim> mean = Vec<Dim>::Zero();
  for (const auto& x : samples) mean += x;
  mean /= static_cast<double>(samples.size());
  Mat<Dim> cov = Mat<Dim>::Zero();
  for (const auto& x : samples) {
    const Vec<Dim> d = x - mean;
    cov += d * d.transpose();
  }
  return cov / static_cast<double>(samples.size());
}

template <int Dim>
void validate_inputs(std::span<const Vec<Dim>> samples, int components) {
  if (components < 1) {
    throw std::invalid_argument("GMM needs at least one component");
  }
  if (samples.size() < static_cast<std::size_t>(components)) {
    throw std::invalid_argument("GMM with " + std::to_string(components) +
                                " components needs at least as many samples, got " +
                                std::to_string(samples.size()));
  }
}

// E-step under the regularized objective. Fills `resp` (n x K, row-major) and
// `per_sample` (the per-sample log normalizer) and returns their sum.
template <int Dim>
double expectation(const GaussianMixture<Dim>& model, std::span<const Vec<Dim>> samples,
                   double floor, std::vector<double>& resp,
                   std::vector<double>& per_sample) {
  const int k_count = model.size();
  resp.assign(samples.size() * k_count, 0.0);
  per_sample.assign(samples.size(), 0.0);
  std::vector<double> penalty(k_count);
  for (int k = 0; k < k_count; ++k) penalty[k] = 0.5 * floor * model.precision_trace(k);

  double total = 0.0;
  std::vector<double> scores(k_count);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    for (int k = 0; k < k_count; ++k) {
      scores[k] = model.weighted_log_density(k, samples[i]) - penalty[k];
    }
    const double norm = log_sum_exp(scores);
    per_sample[i] = norm;
    total += norm;
    for (int k = 0; k < k_count; ++k) {
      resp[i * k_count + k] = scores[k] == kNegInf ? 0.0 : std::exp(scores[k] - norm);
    }
  }
  return total;
}

// Weighted M-step; components whose mass is empty are reseeded at the
// worst-explained samples (lowest per-sample log normalizer).
template <int Dim>
GaussianMixture<Dim> maximization(std::span<const Vec<Dim>> samples,
                                  const std::vector<double>& resp,
                                  const std::vector<double>& per_sample, int k_count,
                                  double floor, int& reinitialized) {
  using Component = typename GaussianMixture<Dim>::Component;
  const std::size_t n = samples.size();
  const Mat<Dim> floor_matrix = floor * Mat<Dim>::Identity();

  std::vector<Component> components(k_count);
  std::vector<int> empty;
  for (int k = 0; k < k_count; ++k) {
    double mass = 0.0;
    Vec<Dim> mean = Vec<Dim>::Zero();
    for (std::size_t i = 0; i < n; ++i) {
      const double r = resp[i * k_count + k];
      mass += r;
      mean += r * samples[i];
    }
    if (mass < kEmptyMass) {
      empty.push_back(k);
      continue;
    }
    mean /= mass;
    Mat<Dim> cov = Mat<Dim>::Zero();
    for (std::size_t i = 0; i < n; ++i) {
      const double r = resp[i * k_count + k];
      if (r == 0.0) continue;
      const Vec<Dim> d = samples[i] - mean;
      cov += r * (d * d.transpose());
    }
    cov /= mass;
    cov = (0.5 * (cov + cov.transpose())).eval() + floor_matrix;
    components[k] = Component{mass / static_cast<double>(n), mean, cov};
  }

  if (!empty.empty()) {
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return per_sample[a] < per_sample[b];
    });
    const Mat<Dim> spread = sample_covariance<Dim>(samples) + floor_matrix;
    for (std::size_t j = 0; j < empty.size(); ++j) {
      const std::size_t pick = order[std::min(j, n - 1)];
      components[empty[j]] =
          Component{1.0 / static_cast<double>(n), samples[pick], spread};
      ++reinitialized;
    }
    double sum = 0.0;
    for (const auto& c : components) sum += c.weight;
    for (auto& c : components) c.weight /= sum;
  }
  return GaussianMixture<Dim>(std::move(components));
}

template <int Dim>
GmmFit<Dim> run_em(std::span<const Vec<Dim>> samples, GaussianMixture<Dim> model,
                   const GmmFitOptions& options) {
  const int k_count = model.size();
  std::vector<double> resp;
  std::vector<double> per_sample;

  GmmFit<Dim> fit{model, {}, 0, 0};
  double previous =
      expectation<Dim>(model, samples, options.covariance_floor, resp, per_sample);
  fit.objective.push_back(previous);

  for (int iter = 0; iter < options.max_iterations; ++iter) {
    model = maximization<Dim>(samples, resp, per_sample, k_count,
                              options.covariance_floor, fit.reinitialized_components);
    const double current =
        expectation<Dim>(model, samples, options.covariance_floor, resp, per_sample);
    fit.objective.push_back(current);
    ++fit.iterations;
    const double improvement = current - previous;
    previous = current;
    if (options.tolerance > 0.0 &&
        improvement < options.tolerance * std::max(std::abs(current), 1e-300)) {
      break;
    }
  }
  fit.model = std::move(model);
  return fit;
}

// k-means++ seeding followed by a few Lloyd iterations; returns assignments.
template <int Dim>
std::vector<int> seed_assignments(std::span<const Vec<Dim>> samples, int k_count,
                                  std::uint64_t seed) {
  const std::size_t n = samples.size();
  std::mt19937_64 rng(seed);
  std::vector<Vec<Dim>> centers;
  centers.reserve(k_count);
  centers.push_back(samples[uniform_index(rng, n)]);

  std::vector<double> nearest(n, std::numeric_limits<double>::infinity());
  while (static_cast<int>(centers.size()) < k_count) {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      nearest[i] = std::min(nearest[i], (samples[i] - centers.back()).squaredNorm());
      total += nearest[i];
    }
    std::size_t pick = 0;
    if (total <= 0.0) {
      pick = uniform_index(rng, n);
    } else {
      const double target = uniform01(rng) * total;
      double running = 0.0;
      pick = n - 1;
      for (std::size_t i = 0; i < n; ++i) {
        running += nearest[i];
        if (running > target && nearest[i] > 0.0) {
          pick = i;
          break;
        }
      }
    }
    centers.push_back(samples[pick]);
  }

  std::vector<int> assignment(n, 0);
  for (int iter = 0; iter <= kKMeansIterations; ++iter) {
    for (std::size_t i = 0; i < n; ++i) {
      double best = std::numeric_limits<double>::infinity();
      for (int k = 0; k < k_count; ++k) {
        const double d = (samples[i] - centers[k]).squaredNorm();
        if (d < best) {
          best = d;
          assignment[i] = k;
        }
      }
    }
    if (iter == kKMeansIterations) break;
    std::vector<Vec<Dim>> sums(k_count, Vec<Dim>::Zero());
    std::vector<std::size_t> counts(k_count, 0);
    for (std::size_t i = 0; i < n; ++i) {
      sums[assignment[i]] += samples[i];
      ++counts[assignment[i]];
    }
    for (int k = 0; k < k_count; ++k) {
      if (counts[k] > 0) centers[k] = sums[k] / static_cast<double>(counts[k]);
    }
  }
  return assignment;
}

}  // namespace

template <int Dim>
GaussianMixture<Dim>::GaussianMixture(std::vector<Component> components)
    : components_(std::move(components)) {
  if (components_.empty()) {
    throw std::invalid_argument("mixture needs at least one component");
  }
  double sum = 0.0;
  for (const auto& c : components_) {
    if (!(c.weight >= 0.0) || !std::isfinite(c.weight)) {
      throw std::invalid_argument("mixture weights must be finite and non-negative");
    }
    sum += c.weight;
  }
  if (std::abs(sum - 1.0) > 1e-9) {
    throw std::invalid_argument("mixture weights sum to " + std::to_string(sum));
  }

  const double log_two_pi = std::log(2.0 * std::numbers::pi);
  for (const auto& c : components_) {
    if (!c.mean.allFinite() || !c.covariance.allFinite() ||
        !c.covariance.isApprox(c.covariance.transpose(), 1e-12)) {
      throw std::invalid_argument("covariance must be finite and symmetric");
    }
    Eigen::LLT<Matrix> llt(c.covariance);
    if (llt.info() != Eigen::Success) {
      throw std::invalid_argument("covariance is not positive definite");
    }
    const Matrix lower = llt.matrixL();
    const Matrix inverse = lower.template triangularView<Eigen::Lower>().solve(
        Matrix::Identity());
    double log_det = 0.0;
    for (int d = 0; d < Dim; ++d) log_det += 2.0 * std::log(lower(d, d));
    inverse_cholesky_.push_back(inverse);
    log_normalizer_.push_back(-0.5 * (Dim * log_two_pi + log_det));
    log_weight_.push_back(c.weight > 0.0 ? std::log(c.weight) : kNegInf);
    precision_trace_.push_back(inverse.squaredNorm());
  }
}

template <int Dim>
double GaussianMixture<Dim>::component_log_density(int k, const Vector& x) const {
  const Vector whitened = inverse_cholesky_[k] * (x - components_[k].mean);
  return log_normalizer_[k] - 0.5 * whitened.squaredNorm();
}

template <int Dim>
double GaussianMixture<Dim>::weighted_log_density(int k, const Vector& x) const {
  if (log_weight_[k] == kNegInf) return kNegInf;
  return log_weight_[k] + component_log_density(k, x);
}

template <int Dim>
double GaussianMixture<Dim>::log_density(const Vector& x) const {
  double scores[16];
  std::vector<double> heap;
  double* out = scores;
  if (components_.size() > 16) {
    heap.resize(components_.size());
    out = heap.data();
  }
  for (int k = 0; k < size(); ++k) out[k] = weighted_log_density(k, x);
  return log_sum_exp(std::span<const double>(out, components_.size()));
}

template <int Dim>
int GaussianMixture<Dim>::assign_component(const Vector& x) const {
  int best = 0;
  double best_score = kNegInf;
  for (int k = 0; k < size(); ++k) {
    const double s = weighted_log_density(k, x);
    if (s > best_score) {
      best_score = s;
      best = k;
    }
  }
  return best;
}

template <int Dim>
nlohmann::json GaussianMixture<Dim>::to_json() const {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& c : components_) {
    nlohmann::json mean = nlohmann::json::array();
    nlohmann::json cov = nlohmann::json::array();
    for (int i = 0; i < Dim; ++i) {
      mean.push_back(c.mean(i));
      nlohmann::json row = nlohmann::json::array();
      for (int j = 0; j < Dim; ++j) row.push_back(c.covariance(i, j));
      cov.push_back(std::move(row));
    }
    out.push_back({{"weight", c.weight}, {"mean", mean}, {"covariance", cov}});
  }
  return {{"dimension", Dim}, {"components", out}};
}

template <int Dim>
GaussianMixture<Dim> fit_from_assignments(
    std::span<const typename GaussianMixture<Dim>::Vector> samples,
    std::span<const int> assignment, int components, double covariance_floor) {
  validate_inputs<Dim>(samples, components);
  if (assignment.size() != samples.size()) {
    throw std::invalid_argument("one assignment per sample required");
  }
  // Hard responsibilities; per-sample scores only order reseeding candidates.
  std::vector<double> resp(samples.size() * components, 0.0);
  std::vector<double> score(samples.size(), 0.0);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (assignment[i] < 0 || assignment[i] >= components) {
      throw std::invalid_argument("assignment out of range");
    }
    resp[i * components + assignment[i]] = 1.0;
  }
  bool any_empty = false;
  for (int k = 0; k < components && !any_empty; ++k) {
    any_empty = std::find(assignment.begin(), assignment.end(), k) == assignment.end();
  }
  if (any_empty) {
    // Score samples by squared distance to their own component mean.
    std::vector<Vec<Dim>> sums(components, Vec<Dim>::Zero());
    std::vector<double> counts(components, 0.0);
    for (std::size_t i = 0; i < samples.size(); ++i) {
      sums[assignment[i]] += samples[i];
      counts[assignment[i]] += 1.0;
    }
    for (std::size_t i = 0; i < samples.size(); ++i) {
      const int k = assignment[i];
      score[i] = -(samples[i] - sums[k] / counts[k]).squaredNorm();
    }
  }
  int reinitialized = 0;
  return maximization<Dim>(samples, resp, score, components, covariance_floor,
                           reinitialized);
}

template <int Dim>
GmmFit<Dim> fit_gmm(std::span<const typename GaussianMixture<Dim>::Vector> samples,
                    const GmmFitOptions& options) {
  validate_inputs<Dim>(samples, options.components);
  const std::vector<int> assignment =
      seed_assignments<Dim>(samples, options.components, options.seed);
  GaussianMixture<Dim> initial = fit_from_assignments<Dim>(
      samples, assignment, options.components, options.covariance_floor);
  return run_em<Dim>(samples, std::move(initial), options);
}

template <int Dim>
GmmFit<Dim> refine_gmm(std::span<const typename GaussianMixture<Dim>::Vector> samples,
                       const GaussianMixture<Dim>& initial,
                       const GmmFitOptions& options) {
  validate_inputs<Dim>(samples, initial.size());
  return run_em<Dim>(samples, initial, options);
}

template <int Dim>
double total_log_likelihood(const GaussianMixture<Dim>& model,
                            std::span<const typename GaussianMixture<Dim>::Vector> samples) {
  double total = 0.0;
  for (const auto& x : samples) total += model.log_density(x);
  return total;
}

template <int Dim>
double regularized_log_likelihood(
    const GaussianMixture<Dim>& model,
    std::span<const typename GaussianMixture<Dim>::Vector> samples,
    double covariance_floor) {
  std::vector<double> resp;
  std::vector<double> per_sample;
  return expectation<Dim>(model, samples, covariance_floor, resp, per_sample);
}

#define MASKFORGE_INSTANTIATE_GMM(D)                                                 \
  template class GaussianMixture<D>;                                                 \
  template GmmFit<D> fit_gmm<D>(std::span<const GaussianMixture<D>::Vector>,         \
                                const GmmFitOptions&);                               \
  template GmmFit<D> refine_gmm<D>(std::span<const GaussianMixture<D>::Vector>,      \
                                   const GaussianMixture<D>&, const GmmFitOptions&); \
  template GaussianMixture<D> fit_from_assignments<D>(                               \
      std::span<const GaussianMixture<D>::Vector>, std::span<const int>, int, double); \
  template double total_log_likelihood<D>(const GaussianMixture<D>&,                 \
                                          std::span<const GaussianMixture<D>::Vector>); \
  template double regularized_log_likelihood<D>(                                     \
      const GaussianMixture<D>&, std::span<const GaussianMixture<D>::Vector>, double);

MASKFORGE_INSTANTIATE_GMM(3)
MASKFORGE_INSTANTIATE_GMM(5)

#undef MASKFORGE_INSTANTIATE_GMM

}  // namespace maskforge
