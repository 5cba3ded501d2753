#include <Eigen/Eigenvalues>

#include <cmath>
#include <ostream>

#include "stmh/error.hpp"
#include "stmh/spectral.hpp"

namespace stmh {

Vector stationary_vector_eigen(const Matrix& P) {
  const auto k = P.rows();
  if (P.cols() != k || k < 1) throw ArgumentError("transition matrix must be square");
  Eigen::EigenSolver<Matrix> es(P.transpose(), true);
  if (es.info() != Eigen::Success) throw NumericError("eigendecomposition of P' failed");
  Eigen::Index best = 0;
  for (Eigen::Index a = 1; a < k; ++a)
    if (std::abs(es.eigenvalues()[a] - 1.0) < std::abs(es.eigenvalues()[best] - 1.0)) best = a;
  Vector v = es.eigenvectors().col(best).real();
  // The eigenvector's sign is arbitrary; normalizing by the sum fixes it.
  const double total = v.sum();
  if (!(std::abs(total) > 0.0)) throw NumericError("stationary eigenvector has zero sum");
  v /= total;
  return v;
}

InstanceChecks check_instance(const RandomInstance& instance, const InstanceCheckOptions& options) {
  InstanceChecks out;
  out.seed = instance.seed;
  const DiscreteSTChain st = discretize_st(instance.target, instance.betas, instance.options);
  out.L = st.levels;
  out.n = st.components;
  out.m = st.points_per_axis;

  out.stationarity_error = (stationary_vector_eigen(st.base.P) - st.base.pi).cwiseAbs().maxCoeff();

  const ProjectedChain proj = build_projected(st);
  const auto size = proj.Mbar.rows();
  for (Eigen::Index u = 0; u < size; ++u)
    for (Eigen::Index v = 0; v < size; ++v)
      out.balance_residual = std::max(
          out.balance_residual, std::abs(proj.Pbar[u] * proj.Mbar(u, v) - proj.Pbar[v] * proj.Mbar(v, u)));

  Rng rng = Rng::stream(instance.seed, 0xd1c7);
  out.dirichlet_error = verify_dirichlet_decomposition(st, options.trials, rng).max_rel_error;

  TheoremOptions topts;
  topts.c3_scale = options.c3_scale;
  topts.gamma_min = instance.target.gamma_min();
  out.theorem = verify_decomposition_theorem(st, topts);
  DiscreteSTOptions eager = instance.options;
  eager.laziness = 0.0;
  out.theorem_nonlazy = verify_decomposition_theorem(discretize_st(instance.target, instance.betas, eager), topts);

  out.paths = verify_canonical_path_bound(proj.as_chain(), projected_paths(st.levels, st.components),
                                          options.trials, rng);

  if (options.mixing) {
    DiscreteSTOptions full = instance.options;
    full.radius = 0.0;
    const DiscreteSTChain fst = discretize_st(instance.target, instance.betas, full);
    TheoremOptions fopts;
    fopts.c3_scale = options.c3_scale;
    const TheoremReport frep = verify_decomposition_theorem(fst, fopts);
    Eigen::Index mode = 0;
    fst.base.pi.maxCoeff(&mode);
    Vector start = Vector::Zero(fst.base.pi.size());
    start[mode] = 1.0;
    out.mixing = verify_mixing_bound(fst, start, frep.C_M, options.epsilon);
    out.mixing_checked = true;
  }

  DiscreteSTOptions tempered = instance.options;
  tempered.kind = DensityKind::tempered;
  const DiscreteSTChain tst = discretize_st(instance.target, instance.betas, tempered);
  out.gap_tilde = restricted_spectral_gap(st.base, st.state_mask());
  out.gap_tempered = restricted_spectral_gap(tst.base, tst.state_mask());
  out.gap_ratio_bound = std::pow(instance.target.w_min(), -5.0);
  return out;
}

void write_instance_checks(std::ostream& out, const std::vector<InstanceChecks>& rows) {
  out << "seed,L,n,m,stationarity_error,balance_residual,dirichlet_error,gap,C_M,theorem_holds,"
         "nonlazy_gap,nonlazy_C_M,nonlazy_theorem_holds,"
         "path_rho,path_max_ratio,path_holds,mixing_steps,mixing_tv,mixing_hypothesis,mixing_holds,"
         "gap_tilde,gap_tempered,gap_ratio_bound,passed\n";
  out.precision(17);
  auto flag = [](bool b) { return b ? "true" : "false"; };
  for (const auto& r : rows) {
    out << r.seed << ',' << r.L << ',' << r.n << ',' << r.m << ',' << r.stationarity_error << ','
        << r.balance_residual << ',' << r.dirichlet_error << ',' << r.theorem.gap << ',' << r.theorem.C_M << ','
        << flag(r.theorem.holds) << ',' << r.theorem_nonlazy.gap << ',' << r.theorem_nonlazy.C_M << ','
        << flag(r.theorem_nonlazy.holds) << ',' << r.paths.rho << ',' << r.paths.max_ratio << ',' << flag(r.paths.holds)
        << ',' << r.mixing.steps << ',' << r.mixing.tv << ',' << flag(r.mixing.hypothesis) << ','
        << flag(r.mixing_ok()) << ',' << r.gap_tilde << ',' << r.gap_tempered << ',' << r.gap_ratio_bound << ','
        << flag(r.passed()) << '\n';
  }
}

}  // namespace stmh
