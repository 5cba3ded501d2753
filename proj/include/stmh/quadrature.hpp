#pragma once

#include <functional>

#include "stmh/target.hpp"

namespace stmh {

struct QuadratureOptions {
  double rel_tol = 1e-9;
  double abs_tol = 0.0;
  int initial_panels = 8;
  int max_panels = 20000;
};

/// Globally adaptive 15-point Gauss-Kronrod integration on [a, b].
/// Throws NumericError when the error target is not met within max_panels.
double integrate(const std::function<double(double)>& f, double a, double b,
                 const QuadratureOptions& opts = {});

/// Iterated adaptive rule on the box [ax, bx] x [ay, by]; the inner integrals
/// run at a tighter tolerance than the outer one.
double integrate_2d(const std::function<double(double, double)>& f, double ax, double bx,
                    double ay, double by, const QuadratureOptions& opts = {});

/// Half-width of the per-axis integration box used for partition functions at
/// inverse temperature beta: max_k |mu_k| + 8 sqrt(gamma_max / beta).
double quadrature_half_width(const GaussianMixtureTarget& target, double beta);

/// log of int exp(-beta f(x)) dx for d in {1, 2}.
double log_partition(const GaussianMixtureTarget& target, double beta, double rel_tol = 1e-9);

/// log of int exp(tilde_log_density_unnorm(beta, x)) dx for d in {1, 2}.
double log_partition_tilde(const GaussianMixtureTarget& target, double beta, double rel_tol = 1e-9);

}  // namespace stmh
