#include "stmh/quadrature.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <queue>
#include <string>
#include <vector>

#include "stmh/error.hpp"

namespace stmh {

namespace {

// Kronrod 15-point nodes (positive half) and weights, with the embedded
// 7-point Gauss weights on the odd-indexed nodes.
constexpr double kNodes[8] = {
    0.991455371120812639206854697526329, 0.949107912342758524526189684047851,
    0.864864423359769072789712788640926, 0.741531185599394439863864773280788,
    0.586087235467691130294144845693013, 0.405845151377397166906606412076961,
    0.207784955007898467600689403773245, 0.000000000000000000000000000000000};
constexpr double kKronrod[8] = {
    0.022935322010529224963732008058970, 0.063092092629978553290700663189204,
    0.104790010322250183839876322541518, 0.140653259715525918745189590510238,
    0.169004726639267902826583426598550, 0.190350578064785409913256402421014,
    0.204432940075298892414161999234649, 0.209482141084727828012999174891714};
constexpr double kGauss[4] = {
    0.129484966168869693270611432679082, 0.279705391489276667901467771423780,
    0.381830050505118944950369775488975, 0.417959183673469387755102040816327};

struct Panel {
  double a, b, value, error;
  bool operator<(const Panel& o) const { return error < o.error; }
};

Panel gauss_kronrod(const std::function<double(double)>& f, double a, double b) {
  const double c = 0.5 * (a + b);
  const double h = 0.5 * (b - a);
  const double fc = f(c);
  double kronrod = fc * kKronrod[7];
  double gauss = fc * kGauss[3];
  for (int k = 0; k < 7; ++k) {
    const double dx = h * kNodes[k];
    const double pair = f(c - dx) + f(c + dx);
    kronrod += kKronrod[k] * pair;
    if (k % 2 == 1) gauss += kGauss[k / 2] * pair;
  }
  kronrod *= h;
  gauss *= h;
  return {a, b, kronrod, std::abs(kronrod - gauss)};
}

}  // namespace

double integrate(const std::function<double(double)>& f, double a, double b,
                 const QuadratureOptions& opts) {
  if (!(b > a)) return 0.0;
  std::priority_queue<Panel> heap;
  double total = 0.0;
  double error = 0.0;
  const int initial = std::max(1, opts.initial_panels);
  const double width = (b - a) / initial;
  for (int k = 0; k < initial; ++k) {
    const double lo = a + k * width;
    const double hi = (k + 1 == initial) ? b : lo + width;
    Panel p = gauss_kronrod(f, lo, hi);
    total += p.value;
    error += p.error;
    heap.push(p);
  }
  int panels = initial;
  while (error > std::max(opts.abs_tol, opts.rel_tol * std::abs(total))) {
    if (panels >= opts.max_panels)
      throw NumericError("adaptive quadrature did not converge on [" + std::to_string(a) + ", " +
                         std::to_string(b) + "]");
    Panel worst = heap.top();
    heap.pop();
    const double mid = 0.5 * (worst.a + worst.b);
    Panel left = gauss_kronrod(f, worst.a, mid);
    Panel right = gauss_kronrod(f, mid, worst.b);
    total += left.value + right.value - worst.value;
    error += left.error + right.error - worst.error;
    heap.push(left);
    heap.push(right);
    ++panels;
  }
  // Re-sum to shed the drift of the running updates.
  double sum = 0.0;
  while (!heap.empty()) {
    sum += heap.top().value;
    heap.pop();
  }
  return sum;
}

double integrate_2d(const std::function<double(double, double)>& f, double ax, double bx,
                    double ay, double by, const QuadratureOptions& opts) {
  QuadratureOptions inner = opts;
  inner.rel_tol = opts.rel_tol * 1e-2;
  // Inner integrals far in the tails are ~0; the outer absolute budget spread
  // over the x-range keeps them from chasing relative accuracy on nothing.
  inner.abs_tol = opts.abs_tol * 1e-2 / (bx - ax);
  return integrate(
      [&](double x) {
        return integrate([&](double y) { return f(x, y); }, ay, by, inner);
      },
      ax, bx, opts);
}

double quadrature_half_width(const GaussianMixtureTarget& target, double beta) {
  double max_norm = 0.0;
  for (const auto& mu : target.means()) max_norm = std::max(max_norm, mu.norm());
  return max_norm + 8.0 * std::sqrt(target.gamma_max() / beta);
}

namespace {

template <class LogDensity>
double log_integral(const GaussianMixtureTarget& target, double beta, double shift, double rel_tol,
                    LogDensity&& log_density) {
  const int d = target.dim();
  if (d > 2) throw ArgumentError("quadrature partition functions support d <= 2 only");
  const double half = quadrature_half_width(target, beta);
  // Panels no wider than one component standard deviation so no narrow mode
  // can slip between the initial nodes.
  const double sd = std::sqrt(target.gamma_min() / beta);
  QuadratureOptions opts;
  opts.rel_tol = rel_tol;
  opts.initial_panels = std::clamp(static_cast<int>(std::ceil(2.0 * half / sd)), 8, 512);
  double value;
  if (d == 1) {
    value = integrate(
        [&](double x) {
          const double p[1] = {x};
          return std::exp(log_density(std::span<const double>(p, 1)) + shift);
        },
        -half, half, opts);
  } else {
    opts.abs_tol = rel_tol * 1e-3 * sd * sd;
    value = integrate_2d(
        [&](double x, double y) {
          const double p[2] = {x, y};
          return std::exp(log_density(std::span<const double>(p, 2)) + shift);
        },
        -half, half, -half, half, opts);
  }
  if (!(value > 0.0) || !std::isfinite(value)) throw NumericError("partition quadrature failed");
  return std::log(value) - shift;
}

}  // namespace

double log_partition(const GaussianMixtureTarget& target, double beta, double rel_tol) {
  const double shift = beta * target.potential_floor();
  return log_integral(target, beta, shift, rel_tol,
                      [&](std::span<const double> x) { return -beta * target.potential(x); });
}

double log_partition_tilde(const GaussianMixtureTarget& target, double beta, double rel_tol) {
  double shift = -std::numeric_limits<double>::infinity();
  for (const auto& mu : target.means())
    shift = std::max(shift, target.tilde_log_density_unnorm(beta, mu));
  return log_integral(target, beta, -shift, rel_tol, [&](std::span<const double> x) {
    return target.tilde_log_density_unnorm(beta, x);
  });
}

}  // namespace stmh
