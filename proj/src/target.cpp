#include "stmh/target.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "stmh/error.hpp"

namespace stmh {

namespace {

constexpr int kStackDim = 16;

// Small-buffer scratch so the hot sampling path never allocates for d <= 16.
class Scratch {
 public:
  explicit Scratch(std::size_t n) : heap_(n > kStackDim ? n : 0) {}
  double* data() { return heap_.empty() ? stack_.data() : heap_.data(); }

 private:
  std::array<double, kStackDim> stack_{};
  std::vector<double> heap_;
};

}  // namespace

double log_sum_exp(std::span<const double> values) {
  if (values.empty()) return -std::numeric_limits<double>::infinity();
  const double m = *std::max_element(values.begin(), values.end());
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (double v : values) s += std::exp(v - m);
  return m + std::log(s);
}

GaussianMixtureTarget::GaussianMixtureTarget(std::vector<Vector> means, Matrix covariance,
                                             std::vector<double> weights)
    : means_(std::move(means)), covariance_(std::move(covariance)), weights_(std::move(weights)) {
  if (means_.empty()) throw ArgumentError("mixture needs at least one component");
  if (means_.size() != weights_.size())
    throw ArgumentError("got " + std::to_string(means_.size()) + " means but " +
                        std::to_string(weights_.size()) + " weights");
  dim_ = static_cast<int>(means_.front().size());
  if (dim_ < 1) throw ArgumentError("dimension must be positive");
  for (const auto& mu : means_)
    if (mu.size() != dim_) throw ArgumentError("component means have inconsistent dimensions");
  if (covariance_.rows() != dim_ || covariance_.cols() != dim_)
    throw ArgumentError("covariance must be " + std::to_string(dim_) + "x" + std::to_string(dim_));

  double total = 0.0;
  for (double w : weights_) {
    if (!(w > 0.0)) throw ArgumentError("mixture weights must be positive");
    total += w;
  }
  if (std::abs(total - 1.0) > 1e-12) throw ArgumentError("mixture weights must sum to 1");

  const double scale = covariance_.cwiseAbs().maxCoeff();
  if ((covariance_ - covariance_.transpose()).cwiseAbs().maxCoeff() > 1e-12 * std::max(scale, 1.0))
    throw ArgumentError("covariance is not symmetric");
  Eigen::LLT<Matrix> llt(covariance_);
  if (llt.info() != Eigen::Success) throw ArgumentError("covariance is not positive definite");
  chol_ = llt.matrixL();

  Eigen::SelfAdjointEigenSolver<Matrix> eig(covariance_, Eigen::EigenvaluesOnly);
  gamma_min_ = eig.eigenvalues().minCoeff();
  gamma_max_ = eig.eigenvalues().maxCoeff();
  if (!(gamma_min_ > 0.0)) throw ArgumentError("covariance is not positive definite");

  whitened_means_.resize(dim_, components());
  double max_norm = 0.0;
  for (int j = 0; j < components(); ++j) {
    whitened_means_.col(j) = chol_.triangularView<Eigen::Lower>().solve(means_[j]);
    max_norm = std::max(max_norm, means_[j].norm());
  }
  spread_ = std::max(max_norm, std::sqrt(gamma_min_));
  w_min_ = *std::min_element(weights_.begin(), weights_.end());
  log_weights_.resize(weights_.size());
  std::transform(weights_.begin(), weights_.end(), log_weights_.begin(),
                 [](double w) { return std::log(w); });

  potential_floor_ = std::numeric_limits<double>::infinity();
  for (const auto& mu : means_) potential_floor_ = std::min(potential_floor_, potential(mu));
}

GaussianMixtureTarget GaussianMixtureTarget::symmetric_pair(double separation) {
  const double a = separation / (2.0 * std::sqrt(2.0));
  Vector lo = Vector::Constant(2, -a);
  Vector hi = Vector::Constant(2, a);
  return GaussianMixtureTarget({lo, hi}, Matrix::Identity(2, 2), {0.5, 0.5});
}

void GaussianMixtureTarget::quadratic_forms(std::span<const double> x, std::span<double> q) const {
  if (static_cast<int>(x.size()) != dim_)
    throw ArgumentError("point has dimension " + std::to_string(x.size()) + ", target has " +
                        std::to_string(dim_));
  Scratch buf(static_cast<std::size_t>(dim_));
  double* z = buf.data();
  // Forward substitution: chol_ * z = x.
  for (int r = 0; r < dim_; ++r) {
    double acc = x[r];
    for (int c = 0; c < r; ++c) acc -= chol_(r, c) * z[c];
    z[r] = acc / chol_(r, r);
  }
  for (int j = 0; j < components(); ++j) {
    const double* m = whitened_means_.col(j).data();
    double s = 0.0;
    for (int r = 0; r < dim_; ++r) {
      const double diff = z[r] - m[r];
      s += diff * diff;
    }
    q[j] = s;
  }
}

double GaussianMixtureTarget::mahalanobis_sq(int j, std::span<const double> x) const {
  Scratch buf(weights_.size());
  std::span<double> q(buf.data(), weights_.size());
  quadratic_forms(x, q);
  return q[j];
}

double GaussianMixtureTarget::tilde_log_density_unnorm(double beta, std::span<const double> x) const {
  const std::size_t n = weights_.size();
  Scratch buf(n);
  std::span<double> q(buf.data(), n);
  quadratic_forms(x, q);
  for (std::size_t j = 0; j < n; ++j) q[j] = log_weights_[j] - 0.5 * beta * q[j];
  return log_sum_exp(q);
}

double GaussianMixtureTarget::potential(std::span<const double> x) const {
  return -tilde_log_density_unnorm(1.0, x);
}

TemperedDensity::TemperedDensity(const GaussianMixtureTarget& target, double beta)
    : target_(&target), beta_(beta) {
  if (!(beta > 0.0) || beta > 1.0) throw ArgumentError("inverse temperature must lie in (0, 1]");
}

}  // namespace stmh
