#pragma once

#include <algorithm>
#include <cmath>
#include <iostream>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "vgpencr/cavi.hpp"
#include "vgpencr/errors.hpp"
#include "vgpencr/group_lasso.hpp"
#include "vgpencr/grouping.hpp"
#include "vgpencr/predict.hpp"
#include "vgpencr/rng.hpp"
#include "vgpencr/types.hpp"

namespace vgpencr {

enum class ScaleMode { SecondMoment, MeanNorm };
enum class SparsifyMode { Grouped, NonGrouped };
enum class CvRule { Min, OneSe };

constexpr double kScaleFloor = 1e-8;

// Group scales u_hat. The exact posterior expectation of ||beta_g|| has no
// closed form for a correlated Gaussian; the default uses the second moment
// sqrt(E||beta_g||^2) = sqrt(||mu_g||^2 + tr(Sigma_gg)), the alternative the
// mean norm ||mu_g||. Both floored to keep the scaling matrix invertible.
template <typename Scalar>
Vector<Scalar> compute_group_scales(const CaviFit<Scalar>& fit,
                                    ScaleMode mode = ScaleMode::SecondMoment) {
  const GroupSpec& spec = fit.data.design.spec;
  Vector<Scalar> u(spec.G);
  for (Index g = 0; g < spec.G; ++g) {
    const auto mu_g = fit.state.mu_beta.segment(spec.offsets[g], spec.sizes[g]);
    Scalar v;
    if (mode == ScaleMode::SecondMoment) {
      v = std::sqrt(mu_g.squaredNorm() +
                    fit.state.sigma_diag.segment(spec.offsets[g], spec.sizes[g]).sum());
    } else {
      v = mu_g.norm();
    }
    u[g] = std::max(v, Scalar(kScaleFloor));
  }
  return u;
}

namespace detail {

// X* = L^T D, Y* = L^T mu with L the stored Cholesky factor of Sigma^{-1},
// so ||Y* - X* b||^2 = (D b - mu)^T Sigma^{-1} (D b - mu) exactly.
template <typename Scalar>
WorkingProblem<Scalar> whiten(const CaviState<Scalar>& st, const GroupSpec& spec,
                              const Vector<Scalar>& coord_scales_sq) {
  Matrix<Scalar> Xstar = st.prec_factor.transpose();
  Xstar.array().rowwise() *= coord_scales_sq.transpose().array();
  Vector<Scalar> Ystar = st.prec_factor.transpose() * st.mu_beta;
  return make_working_problem(std::move(Xstar), std::move(Ystar), spec);
}

template <typename Scalar>
Vector<Scalar> expand_group_scales_sq(const Vector<Scalar>& u, const GroupSpec& spec) {
  Vector<Scalar> d(spec.p);
  for (Index g = 0; g < spec.G; ++g) {
    d.segment(spec.offsets[g], spec.sizes[g]).setConstant(u[g] * u[g]);
  }
  return d;
}

}  // namespace detail

template <typename Scalar>
WorkingProblem<Scalar> build_working_problem(const CaviFit<Scalar>& fit,
                                             const Vector<Scalar>& u_hat) {
  const GroupSpec& spec = fit.data.design.spec;
  if (u_hat.size() != spec.G) throw LengthMismatch("u_hat length != group count");
  return detail::whiten(fit.state, spec, detail::expand_group_scales_sq(u_hat, spec));
}

template <typename Scalar>
struct SparseEstimate {
  Vector<Scalar> beta_tilde;
  std::vector<Index> selected;  // 0-based indices of groups with a nonzero block
  Scalar lambda = 0;
  Vector<Scalar> u_hat;  // per-group scales (grouped) or per-coordinate scales (nongrouped)
  SparsifyMode mode = SparsifyMode::Grouped;
  LassoSolution<Scalar> solution;
};

namespace detail {

template <typename Scalar>
std::vector<Index> selected_groups(const Vector<Scalar>& beta_tilde, const GroupSpec& spec) {
  std::vector<Index> sel;
  for (Index g = 0; g < spec.G; ++g) {
    if (!beta_tilde.segment(spec.offsets[g], spec.sizes[g]).isZero(Scalar(0))) sel.push_back(g);
  }
  return sel;
}

}  // namespace detail

// Penalized-credible-region post-processing: solve the whitened weighted
// group lasso and map back with beta_tilde = D beta*, a blockwise positive
// scaling that preserves the group sparsity pattern bitwise.
template <typename Scalar>
SparseEstimate<Scalar> sparsify(const CaviFit<Scalar>& fit, Scalar lambda,
                                ScaleMode scale_mode = ScaleMode::SecondMoment,
                                std::optional<Vector<Scalar>> warm = {},
                                Scalar tol = Scalar(1e-7), Index max_iter = 10000) {
  const GroupSpec& spec = fit.data.design.spec;
  SparseEstimate<Scalar> est;
  est.mode = SparsifyMode::Grouped;
  est.lambda = lambda;
  est.u_hat = compute_group_scales(fit, scale_mode);
  const Vector<Scalar> dscale = detail::expand_group_scales_sq(est.u_hat, spec);
  const auto prob = detail::whiten(fit.state, spec, dscale);
  est.solution = solve(prob, lambda, std::move(warm), tol, max_iter);
  est.beta_tilde = dscale.cwiseProduct(est.solution.beta_star);
  est.selected = detail::selected_groups(est.beta_tilde, spec);
  return est;
}

// Non-grouped variant: every coordinate is its own group with scale |mu_j|.
// A group counts as selected when any of its coordinates survives.
template <typename Scalar>
SparseEstimate<Scalar> sparsify_nongrouped(const CaviFit<Scalar>& fit, Scalar lambda,
                                           std::optional<Vector<Scalar>> warm = {},
                                           Scalar tol = Scalar(1e-7), Index max_iter = 10000) {
  const GroupSpec& spec = fit.data.design.spec;
  SparseEstimate<Scalar> est;
  est.mode = SparsifyMode::NonGrouped;
  est.lambda = lambda;
  est.u_hat = fit.state.mu_beta.cwiseAbs().cwiseMax(Scalar(kScaleFloor));
  const GroupSpec singles = singleton_spec(spec.p);
  const Vector<Scalar> dscale = est.u_hat.cwiseProduct(est.u_hat);
  const auto prob = detail::whiten(fit.state, singles, dscale);
  est.solution = solve(prob, lambda, std::move(warm), tol, max_iter);
  est.beta_tilde = dscale.cwiseProduct(est.solution.beta_star);
  est.selected = detail::selected_groups(est.beta_tilde, spec);
  return est;
}

template <typename Scalar>
struct CvResult {
  std::vector<Scalar> lambdas;
  std::vector<Scalar> mean_cv_error;
  std::vector<Scalar> se_cv_error;
  Scalar chosen_lambda = 0;
  CvRule rule = CvRule::Min;
  Index folds_used = 0;
};

struct CvOptions {
  Index folds = 5;
  Index n_lambda = 100;
  CvRule rule = CvRule::Min;
  double lambda_min_ratio = 1e-6;
  std::uint64_t seed = 0;
  double tol = 1e-7;
  Index max_iter = 10000;
};

namespace detail {

template <typename Scalar>
std::vector<Scalar> shared_lambda_grid(Scalar lmax, Index n_lambda, Scalar ratio) {
  std::vector<Scalar> grid;
  if (lmax <= 0) {
    grid.assign(1, Scalar(0));
    return grid;
  }
  grid.resize(static_cast<std::size_t>(n_lambda));
  const Scalar log_max = std::log(lmax), log_min = std::log(lmax * ratio);
  for (Index k = 0; k < n_lambda; ++k) {
    grid[static_cast<std::size_t>(k)] =
        std::exp(log_max + Scalar(k) / Scalar(n_lambda - 1) * (log_min - log_max));
  }
  grid.front() = lmax;
  return grid;
}

// beta_tilde along a shared grid, warm-started downward.
template <typename Scalar>
std::vector<Vector<Scalar>> sparsify_along_grid(const CaviFit<Scalar>& fit,
                                                const std::vector<Scalar>& grid, SparsifyMode mode,
                                                Scalar tol, Index max_iter) {
  const GroupSpec& spec = fit.data.design.spec;
  Vector<Scalar> dscale;
  GroupSpec solve_spec;
  if (mode == SparsifyMode::Grouped) {
    dscale = expand_group_scales_sq(compute_group_scales(fit), spec);
    solve_spec = spec;
  } else {
    const Vector<Scalar> u = fit.state.mu_beta.cwiseAbs().cwiseMax(Scalar(kScaleFloor));
    dscale = u.cwiseProduct(u);
    solve_spec = singleton_spec(spec.p);
  }
  const auto prob = whiten(fit.state, solve_spec, dscale);
  std::vector<Vector<Scalar>> out;
  out.reserve(grid.size());
  std::optional<Vector<Scalar>> warm;
  for (Scalar lam : grid) {
    auto sol = solve(prob, lam, warm, tol, max_iter);
    warm = sol.beta_star;
    out.push_back(dscale.cwiseProduct(sol.beta_star));
  }
  return out;
}

}  // namespace detail

// K-fold cross-validation of the sparsification penalty. Folds are a seeded
// shuffle; each fold re-centers and refits CAVI on its training rows, solves
// the shared lambda grid (anchored at the full-data lambda_max), and scores
// held-out rows on the uncentered scale.
template <typename Scalar>
CvResult<Scalar> cross_validate_lambda(const CaviFit<Scalar>& full_fit, const Vector<Scalar>& y_raw,
                                       const GroupedDesign<Scalar>& design,
                                       const HyperParams<Scalar>& hyper, const CvOptions& opts,
                                       SparsifyMode mode = SparsifyMode::Grouped) {
  const Index n = design.n();
  if (opts.folds < 2) throw InvalidArgument("cross-validation needs at least 2 folds");
  if (n < 2 * opts.folds) throw FoldTooSmall("need at least 2 rows per fold");
  if (y_raw.size() != n) throw LengthMismatch("response length != design rows");

  CvResult<Scalar> cv;
  cv.rule = opts.rule;

  // shared grid from the full-data working problem
  {
    const GroupSpec& spec = design.spec;
    Vector<Scalar> dscale;
    GroupSpec grid_spec;
    if (mode == SparsifyMode::Grouped) {
      dscale = detail::expand_group_scales_sq(compute_group_scales(full_fit), spec);
      grid_spec = spec;
    } else {
      const Vector<Scalar> u = full_fit.state.mu_beta.cwiseAbs().cwiseMax(Scalar(kScaleFloor));
      dscale = u.cwiseProduct(u);
      grid_spec = singleton_spec(spec.p);
    }
    const auto prob = detail::whiten(full_fit.state, grid_spec, dscale);
    cv.lambdas = detail::shared_lambda_grid(lambda_max(prob), opts.n_lambda,
                                            Scalar(opts.lambda_min_ratio));
  }
  const std::size_t L = cv.lambdas.size();

  Rng rng(opts.seed);
  const std::vector<Index> perm = rng.permutation(n);

  std::vector<std::vector<Scalar>> fold_mse;
  Index failed = 0;
  for (Index f = 0; f < opts.folds; ++f) {
    std::vector<Index> test_rows, train_rows;
    for (Index i = 0; i < n; ++i) {
      (i % opts.folds == f ? test_rows : train_rows).push_back(perm[static_cast<std::size_t>(i)]);
    }
    try {
      GroupedDesign<Scalar> dtr{Matrix<Scalar>(static_cast<Index>(train_rows.size()), design.spec.p),
                                design.spec};
      Vector<Scalar> ytr(static_cast<Index>(train_rows.size()));
      for (std::size_t i = 0; i < train_rows.size(); ++i) {
        dtr.X.row(static_cast<Index>(i)) = design.X.row(train_rows[i]);
        ytr[static_cast<Index>(i)] = y_raw[train_rows[i]];
      }
      const auto centered = center(ytr, dtr);
      const auto fit = run_cavi(centered, hyper);
      const auto betas = detail::sparsify_along_grid(fit, cv.lambdas, mode, Scalar(opts.tol),
                                                     opts.max_iter);
      std::vector<Scalar> mse(L, Scalar(0));
      for (std::size_t j = 0; j < L; ++j) {
        const auto model = make_model(betas[j], centered.stats);
        Scalar acc = 0;
        for (const Index row : test_rows) {
          const Scalar pred = predict_point<Scalar>(model, design.X.row(row).transpose());
          const Scalar diff = y_raw[row] - pred;
          acc += diff * diff;
        }
        mse[j] = acc / Scalar(test_rows.size());
      }
      fold_mse.push_back(std::move(mse));
    } catch (const Error& e) {
      ++failed;
      std::cerr << "warning: fold " << f << " skipped: " << e.what() << "\n";
    }
  }
  if (failed > opts.folds / 2) {
    throw NumericalFailure("more than half of the cross-validation folds failed");
  }
  cv.folds_used = static_cast<Index>(fold_mse.size());

  cv.mean_cv_error.resize(L);
  cv.se_cv_error.resize(L);
  for (std::size_t j = 0; j < L; ++j) {
    Scalar mean = 0;
    for (const auto& m : fold_mse) mean += m[j];
    mean /= Scalar(fold_mse.size());
    Scalar var = 0;
    for (const auto& m : fold_mse) var += (m[j] - mean) * (m[j] - mean);
    var = fold_mse.size() > 1 ? var / Scalar(fold_mse.size() - 1) : Scalar(0);
    cv.mean_cv_error[j] = mean;
    cv.se_cv_error[j] = std::sqrt(var / Scalar(fold_mse.size()));
  }

  std::size_t jmin = 0;
  for (std::size_t j = 1; j < L; ++j) {
    if (cv.mean_cv_error[j] < cv.mean_cv_error[jmin]) jmin = j;
  }
  if (opts.rule == CvRule::Min) {
    cv.chosen_lambda = cv.lambdas[jmin];
  } else {
    const Scalar threshold = cv.mean_cv_error[jmin] + cv.se_cv_error[jmin];
    std::size_t pick = jmin;
    for (std::size_t j = 0; j <= jmin; ++j) {
      if (cv.mean_cv_error[j] <= threshold) {
        pick = j;  // largest lambda within one SE of the minimum
        break;
      }
    }
    cv.chosen_lambda = cv.lambdas[pick];
  }
  return cv;
}

template <typename Scalar>
CvResult<Scalar> cross_validate_lambda(const Vector<Scalar>& y_raw,
                                       const GroupedDesign<Scalar>& design,
                                       const HyperParams<Scalar>& hyper, const CvOptions& opts = {},
                                       SparsifyMode mode = SparsifyMode::Grouped) {
  const auto full_fit = run_cavi(center(y_raw, design), hyper);
  return cross_validate_lambda(full_fit, y_raw, design, hyper, opts, mode);
}

}  // namespace vgpencr
