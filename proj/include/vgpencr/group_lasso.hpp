#pragma once

#include <cassert>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "vgpencr/errors.hpp"
#include "vgpencr/grouping.hpp"
#include "vgpencr/types.hpp"

namespace vgpencr {

// Whitened penalized least-squares problem
//   minimize ||Ystar - Xstar b||^2 + lambda * sum_g weights[g] * ||b_g||.
// gamma[g] majorizes the per-block Hessian 2 * Xstar_g^T Xstar_g.
template <typename Scalar>
struct WorkingProblem {
  Matrix<Scalar> Xstar;
  Vector<Scalar> Ystar;
  GroupSpec spec;
  Vector<Scalar> weights;
  Vector<Scalar> gamma;
};

template <typename Scalar>
struct LassoSolution {
  Vector<Scalar> beta_star;
  Scalar lambda = 0;
  Index iterations = 0;
  Scalar max_kkt_violation = 0;
  Scalar objective = 0;
  bool converged = true;
};

template <typename Scalar>
struct LassoPath {
  std::vector<Scalar> lambdas;  // strictly decreasing
  std::vector<LassoSolution<Scalar>> solutions;
};

/// Proximal operator of t*||.||: 0 inside the ball of radius t, else shrink radially.
template <typename Derived>
Vector<typename Derived::Scalar> group_soft_threshold(const Eigen::MatrixBase<Derived>& v,
                                                      typename Derived::Scalar t) {
  using Scalar = typename Derived::Scalar;
  if (t < 0) throw InvalidArgument("group_soft_threshold: negative threshold");
  const Scalar norm = v.norm();
  if (norm <= t) return Vector<Scalar>::Zero(v.size());
  return (1 - t / norm) * v;
}

namespace detail {

// Largest eigenvalue of the symmetric PSD block A by power iteration.
template <typename Scalar>
Scalar power_iteration_max_eig(const Matrix<Scalar>& A, int max_iter = 50,
                               Scalar tol = Scalar(1e-9)) {
  const Index m = A.rows();
  if (m == 1) return A(0, 0);
  Vector<Scalar> v(m);
  for (Index j = 0; j < m; ++j) v[j] = 1 + Scalar(0.01) * Scalar(j);
  v /= v.norm();
  Scalar eig = 0;
  for (int it = 0; it < max_iter; ++it) {
    Vector<Scalar> av = A * v;
    const Scalar norm = av.norm();
    if (norm == 0) return 0;
    const Scalar next = v.dot(av);
    v = av / norm;
    if (it > 0 && std::abs(next - eig) <= tol * std::abs(next)) {
      eig = next;
      break;
    }
    eig = next;
  }
  return eig;
}

}  // namespace detail

template <typename Scalar>
WorkingProblem<Scalar> make_working_problem(Matrix<Scalar> Xstar, Vector<Scalar> Ystar,
                                            GroupSpec spec, Vector<Scalar> weights) {
  if (Xstar.cols() != spec.p || Ystar.size() != Xstar.rows()) {
    throw SizeMismatch("working problem dimensions do not match the group spec");
  }
  WorkingProblem<Scalar> prob{std::move(Xstar), std::move(Ystar), std::move(spec),
                              std::move(weights), {}};
  prob.gamma.resize(prob.spec.G);
  for (Index g = 0; g < prob.spec.G; ++g) {
    const auto block = prob.Xstar.middleCols(prob.spec.offsets[g], prob.spec.sizes[g]);
    Matrix<Scalar> A = 2 * block.transpose() * block;
    const Scalar eig = detail::power_iteration_max_eig(A);
    // 1.001 keeps the majorization strict under floating point; a zero block
    // has no curvature and any positive constant majorizes it
    prob.gamma[g] = eig > 0 ? Scalar(1.001) * eig : Scalar(1);
  }
  return prob;
}

template <typename Scalar>
WorkingProblem<Scalar> make_working_problem(Matrix<Scalar> Xstar, Vector<Scalar> Ystar,
                                            GroupSpec spec) {
  Vector<Scalar> w(spec.G);
  for (Index g = 0; g < spec.G; ++g) w[g] = std::sqrt(Scalar(spec.sizes[g]));
  return make_working_problem(std::move(Xstar), std::move(Ystar), std::move(spec), std::move(w));
}

/// Smallest lambda at which the all-zero solution satisfies the stationarity condition.
template <typename Scalar>
Scalar lambda_max(const WorkingProblem<Scalar>& prob) {
  Scalar lmax = 0;
  for (Index g = 0; g < prob.spec.G; ++g) {
    const Scalar c =
        2 * (prob.Xstar.middleCols(prob.spec.offsets[g], prob.spec.sizes[g]).transpose() *
             prob.Ystar)
                .norm() /
        prob.weights[g];
    lmax = std::max(lmax, c);
  }
  return lmax;
}

namespace detail {

template <typename Scalar>
Scalar kkt_violation(const WorkingProblem<Scalar>& prob, const Vector<Scalar>& beta,
                     const Vector<Scalar>& resid, Scalar lambda) {
  Scalar worst = 0;
  for (Index g = 0; g < prob.spec.G; ++g) {
    const auto block = prob.Xstar.middleCols(prob.spec.offsets[g], prob.spec.sizes[g]);
    const Vector<Scalar> grad = 2 * (block.transpose() * resid);
    const auto bg = beta.segment(prob.spec.offsets[g], prob.spec.sizes[g]);
    const Scalar lw = lambda * prob.weights[g];
    Scalar v;
    if (bg.isZero(Scalar(0))) {
      v = std::max(Scalar(0), grad.norm() - lw);
    } else {
      v = (grad - lw * bg / bg.norm()).norm();
    }
    worst = std::max(worst, v);
  }
  return worst;
}

template <typename Scalar>
Scalar penalty(const WorkingProblem<Scalar>& prob, const Vector<Scalar>& beta, Scalar lambda) {
  Scalar acc = 0;
  for (Index g = 0; g < prob.spec.G; ++g) {
    acc += prob.weights[g] * beta.segment(prob.spec.offsets[g], prob.spec.sizes[g]).norm();
  }
  return lambda * acc;
}

}  // namespace detail

// Block majorization-descent: per group, a gradient step scaled by 2/gamma_g
// followed by the group soft-threshold. Sweeps alternate between all groups
// and the current active set; the solution is accepted only once the
// stationarity violation passes the certificate 100*tol*(1+lambda).
template <typename Scalar>
LassoSolution<Scalar> solve(const WorkingProblem<Scalar>& prob, Scalar lambda,
                            std::optional<Vector<Scalar>> warm = {}, Scalar tol = Scalar(1e-7),
                            Index max_iter = 10000) {
  if (lambda < 0) throw NegativeLambda("solve: lambda must be nonnegative");
  const GroupSpec& spec = prob.spec;
  if (warm && warm->size() != spec.p) throw LengthMismatch("warm start has wrong length");

  LassoSolution<Scalar> sol;
  sol.lambda = lambda;

  // at or above lambda_max the zero vector is stationary; return it exactly
  // rather than letting the prox sit on the threshold boundary in floats
  if (lambda > 0 && lambda >= lambda_max(prob) * (1 - Scalar(1e-12))) {
    sol.beta_star = Vector<Scalar>::Zero(spec.p);
    sol.iterations = 0;
    sol.max_kkt_violation = detail::kkt_violation(prob, sol.beta_star, prob.Ystar, lambda);
    sol.objective = prob.Ystar.squaredNorm();
    return sol;
  }

  Vector<Scalar>& beta = sol.beta_star;
  beta = warm ? *warm : Vector<Scalar>::Zero(spec.p);
  Vector<Scalar> resid = prob.Ystar - prob.Xstar * beta;

  std::vector<Index> active;
  active.reserve(static_cast<std::size_t>(spec.G));

  const auto sweep = [&](const std::vector<Index>* subset) {
    Scalar maxd = 0;
#ifndef NDEBUG
    Scalar obj_before = resid.squaredNorm() + detail::penalty(prob, beta, lambda);
#endif
    const Index count = subset ? static_cast<Index>(subset->size()) : spec.G;
    for (Index k = 0; k < count; ++k) {
      const Index g = subset ? (*subset)[static_cast<std::size_t>(k)] : k;
      const Index off = spec.offsets[g];
      const Index sz = spec.sizes[g];
      const auto block = prob.Xstar.middleCols(off, sz);
      Vector<Scalar> z = beta.segment(off, sz) + (2 / prob.gamma[g]) * (block.transpose() * resid);
      Vector<Scalar> bnew = group_soft_threshold(z, lambda * prob.weights[g] / prob.gamma[g]);
      const Vector<Scalar> delta = bnew - beta.segment(off, sz);
      if (!delta.isZero(Scalar(0))) {
        resid.noalias() -= block * delta;
        beta.segment(off, sz) = bnew;
      }
      maxd = std::max(maxd, delta.norm() / (1 + bnew.norm()));
    }
#ifndef NDEBUG
    const Scalar obj_after = resid.squaredNorm() + detail::penalty(prob, beta, lambda);
    assert(obj_after <= obj_before + Scalar(1e-9) * (1 + std::abs(obj_before)));
#endif
    return maxd;
  };

  const Scalar certificate = 100 * tol * (1 + lambda);
  bool accepted = false;
  while (sol.iterations < max_iter) {
    ++sol.iterations;
    const Scalar maxd = sweep(nullptr);
    if (sol.iterations % 50 == 0) resid = prob.Ystar - prob.Xstar * beta;  // drift control
    if (maxd < tol) {
      sol.max_kkt_violation = detail::kkt_violation(prob, beta, resid, lambda);
      if (sol.max_kkt_violation <= certificate) {
        accepted = true;
        break;
      }
      continue;  // converged in step size but not in stationarity: keep sweeping
    }
    active.clear();
    for (Index g = 0; g < spec.G; ++g) {
      if (!beta.segment(spec.offsets[g], spec.sizes[g]).isZero(Scalar(0))) active.push_back(g);
    }
    while (sol.iterations < max_iter) {
      ++sol.iterations;
      if (sweep(&active) < tol) break;
    }
  }
  if (!accepted) {
    resid = prob.Ystar - prob.Xstar * beta;
    sol.max_kkt_violation = detail::kkt_violation(prob, beta, resid, lambda);
    sol.converged = sol.max_kkt_violation <= certificate;
  }
  sol.objective = (prob.Ystar - prob.Xstar * beta).squaredNorm() +
                  detail::penalty(prob, beta, lambda);
  return sol;
}

// Log-spaced path from lambda_max down to lambda_max*lambda_min_ratio, each
// point warm-started from the previous solution. A failed point is flagged
// on its solution, never fatal.
template <typename Scalar>
LassoPath<Scalar> solve_path(const WorkingProblem<Scalar>& prob, Index n_lambda = 100,
                             Scalar lambda_min_ratio = Scalar(1e-3), Scalar tol = Scalar(1e-7),
                             Index max_iter = 10000) {
  if (n_lambda < 2) throw InvalidArgument("solve_path: need at least 2 lambda values");
  if (!(lambda_min_ratio > 0 && lambda_min_ratio < 1)) {
    throw InvalidArgument("solve_path: lambda_min_ratio must be in (0,1)");
  }
  LassoPath<Scalar> path;
  const Scalar lmax = lambda_max(prob);
  if (lmax == 0) {
    // degenerate target: the unpenalized solution is the whole path
    path.lambdas = {0};
    path.solutions.push_back(solve(prob, Scalar(0), {}, tol, max_iter));
    return path;
  }
  path.lambdas.resize(static_cast<std::size_t>(n_lambda));
  const Scalar log_max = std::log(lmax);
  const Scalar log_min = std::log(lmax * lambda_min_ratio);
  for (Index k = 0; k < n_lambda; ++k) {
    const Scalar f = Scalar(k) / Scalar(n_lambda - 1);
    path.lambdas[static_cast<std::size_t>(k)] = std::exp(log_max + f * (log_min - log_max));
  }
  path.lambdas.front() = lmax;  // exact anchor

  path.solutions.reserve(static_cast<std::size_t>(n_lambda));
  std::optional<Vector<Scalar>> warm;
  for (Scalar lam : path.lambdas) {
    LassoSolution<Scalar> sol = solve(prob, lam, warm, tol, max_iter);
    warm = sol.beta_star;
    path.solutions.push_back(std::move(sol));
  }
  return path;
}

}  // namespace vgpencr
