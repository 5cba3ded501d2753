#pragma once

#include <Eigen/Dense>
#include <span>
#include <vector>

namespace stmh {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Mixture of n Gaussians sharing one covariance Sigma:
///
///   f(x) = -log sum_j w_j exp(-(x - mu_j)' Sigma^{-1} (x - mu_j) / 2).
///
/// Sigma is factored once (Sigma = C C'); quadratic forms are evaluated in
/// whitened coordinates C^{-1} x. Immutable after construction.
class GaussianMixtureTarget {
 public:
  GaussianMixtureTarget(std::vector<Vector> means, Matrix covariance, std::vector<double> weights);

  /// Two equally weighted components at -/+ (D / (2 sqrt 2)) * (1, 1) with
  /// identity covariance.
  static GaussianMixtureTarget symmetric_pair(double separation);

  int dim() const { return dim_; }
  int components() const { return static_cast<int>(weights_.size()); }

  const std::vector<Vector>& means() const { return means_; }
  const Matrix& covariance() const { return covariance_; }
  const std::vector<double>& weights() const { return weights_; }

  double gamma_min() const { return gamma_min_; }
  double gamma_max() const { return gamma_max_; }
  double kappa() const { return gamma_max_ / gamma_min_; }
  double w_min() const { return w_min_; }
  /// max{ max_k |mu_k|, sqrt(gamma_min) }.
  double spread() const { return spread_; }

  double potential(std::span<const double> x) const;
  double potential(const Vector& x) const { return potential(std::span<const double>(x.data(), x.size())); }

  /// log sum_j w_j exp(-(beta/2) (x - mu_j)' Sigma^{-1} (x - mu_j)), the
  /// unnormalized mixture with every component covariance inflated to Sigma/beta.
  double tilde_log_density_unnorm(double beta, std::span<const double> x) const;
  double tilde_log_density_unnorm(double beta, const Vector& x) const {
    return tilde_log_density_unnorm(beta, std::span<const double>(x.data(), x.size()));
  }

  /// Squared Mahalanobis distance of x to component j.
  double mahalanobis_sq(int j, std::span<const double> x) const;

  /// Minimum of f over the component means; a cheap upper bound on min f used
  /// for log-domain shifts.
  double potential_floor() const { return potential_floor_; }

 private:
  // Fills q with squared Mahalanobis distances to every component.
  void quadratic_forms(std::span<const double> x, std::span<double> q) const;

  int dim_;
  std::vector<Vector> means_;
  Matrix covariance_;
  std::vector<double> weights_;
  std::vector<double> log_weights_;
  Matrix chol_;              // lower factor of covariance_
  Matrix whitened_means_;    // column j is chol_^{-1} mu_j
  double gamma_min_ = 0.0;
  double gamma_max_ = 0.0;
  double w_min_ = 0.0;
  double spread_ = 0.0;
  double potential_floor_ = 0.0;
};

/// exp(-beta f) for beta in (0, 1].
class TemperedDensity {
 public:
  TemperedDensity(const GaussianMixtureTarget& target, double beta);

  double beta() const { return beta_; }
  const GaussianMixtureTarget& target() const { return *target_; }

  double log_density_unnorm(std::span<const double> x) const { return -beta_ * target_->potential(x); }
  double log_density_unnorm(const Vector& x) const { return -beta_ * target_->potential(x); }

 private:
  const GaussianMixtureTarget* target_;
  double beta_;
};

double log_sum_exp(std::span<const double> values);

}  // namespace stmh
