// Test-side oracles. Everything here is written straight from the model
// formulas with dense linear algebra, deliberately sharing no code with the
// library implementation it checks.
#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <vector>

#include "vgpencr/grouping.hpp"
#include "vgpencr/rng.hpp"

namespace oracle {

using Eigen::MatrixXd;
using Eigen::VectorXd;
using vgpencr::Index;

// ---------- straight-line transcription of the mean-field updates ----------

struct FlatState {
  VectorXd mu;
  MatrixXd Sigma;
  VectorXd m_b;
  double m_inv_sigma2 = 1;
  double s_sigma2 = 1;
  VectorXd s_c, m_c, s_b;
};

struct FlatProblem {
  MatrixXd X;
  VectorXd y;
  std::vector<Index> sizes;
  double tau, r, s;
};

inline VectorXd flat_group_moments(const FlatProblem& pr, const VectorXd& mu, const MatrixXd& Sigma) {
  VectorXd e(static_cast<Index>(pr.sizes.size()));
  Index off = 0;
  for (std::size_t g = 0; g < pr.sizes.size(); ++g) {
    const Index sz = pr.sizes[g];
    e[static_cast<Index>(g)] = mu.segment(off, sz).squaredNorm() + Sigma.block(off, off, sz, sz).trace();
    off += sz;
  }
  return e;
}

inline MatrixXd flat_m_tau(const FlatProblem& pr, const VectorXd& m_b) {
  Index p = 0;
  for (Index sz : pr.sizes) p += sz;
  MatrixXd M = MatrixXd::Zero(p, p);
  Index off = 0;
  for (std::size_t g = 0; g < pr.sizes.size(); ++g) {
    for (Index j = 0; j < pr.sizes[g]; ++j) M(off + j, off + j) = m_b[static_cast<Index>(g)] / pr.tau;
    off += pr.sizes[g];
  }
  return M;
}

inline void flat_refresh(const FlatProblem& pr, FlatState& st) {
  const VectorXd eg = flat_group_moments(pr, st.mu, st.Sigma);
  st.s_c = st.m_b.array() + 1.0;
  st.m_c = st.s_c.cwiseInverse();
  st.s_b = st.m_c.array() + st.m_inv_sigma2 * eg.array() / (2.0 * pr.tau);
}

inline FlatState flat_init(const FlatProblem& pr) {
  const Index n = pr.X.rows(), p = pr.X.cols();
  const MatrixXd XtX = pr.X.transpose() * pr.X;
  const VectorXd Xty = pr.X.transpose() * pr.y;
  FlatState st;
  st.m_b = VectorXd::Ones(static_cast<Index>(pr.sizes.size()));
  const double eps = 1e-6 * XtX.trace() / double(p);
  st.mu = (XtX + eps * MatrixXd::Identity(p, p)).inverse() * Xty;
  const double rss = (pr.y - pr.X * st.mu).squaredNorm();
  if (n > p + 1 && rss > 1e-10 * std::max(1.0, pr.y.squaredNorm())) {
    st.m_inv_sigma2 = double(n - p) / rss;
  } else {
    st.m_inv_sigma2 = 1.0 / std::max(pr.y.squaredNorm() / double(n - 1), 1e-12);
  }
  st.Sigma = (1.0 / st.m_inv_sigma2) * (XtX + flat_m_tau(pr, st.m_b)).inverse();
  st.s_sigma2 = (pr.r + double(n + p) / 2.0) / st.m_inv_sigma2;
  flat_refresh(pr, st);
  return st;
}

inline FlatState flat_cycle(const FlatProblem& pr, const FlatState& old) {
  const Index n = pr.X.rows(), p = pr.X.cols();
  const MatrixXd XtX = pr.X.transpose() * pr.X;
  const VectorXd Xty = pr.X.transpose() * pr.y;
  const VectorXd eg_old = flat_group_moments(pr, old.mu, old.Sigma);

  FlatState st;
  st.m_b.resize(old.m_b.size());
  for (Index g = 0; g < old.m_b.size(); ++g) {
    st.m_b[g] = double(pr.sizes[static_cast<std::size_t>(g)] + 1) /
                (2.0 / (1.0 + old.m_b[g]) + eg_old[g] * old.m_inv_sigma2 / pr.tau);
  }
  st.mu = old.m_inv_sigma2 * old.Sigma * Xty;
  st.s_sigma2 = pr.s + 0.5 * ((old.m_b.array() / pr.tau * eg_old.array()).sum() +
                              (XtX * old.Sigma).trace() +
                              (pr.y - pr.X * old.mu).squaredNorm());
  st.m_inv_sigma2 = (pr.r + double(n + p) / 2.0) / st.s_sigma2;
  st.Sigma = (1.0 / st.m_inv_sigma2) * (XtX + flat_m_tau(pr, st.m_b)).inverse();
  flat_refresh(pr, st);
  return st;
}

inline double flat_elbo(const FlatProblem& pr, const FlatState& st) {
  const Index n = pr.X.rows(), p = pr.X.cols();
  const Index G = static_cast<Index>(pr.sizes.size());
  const MatrixXd XtX = pr.X.transpose() * pr.X;
  const VectorXd eg = flat_group_moments(pr, st.mu, st.Sigma);
  const double e_resid = (pr.y - pr.X * st.mu).squaredNorm() + (XtX * st.Sigma).trace();
  const double two_pi = 2.0 * M_PI;
  double v = -double(n) / 2.0 * std::log(two_pi) - double(p) / 2.0 * std::log(pr.tau);
  v -= st.m_inv_sigma2 * ((st.m_b.array() * eg.array()).sum() / (2.0 * pr.tau) + e_resid / 2.0 + pr.s);
  v -= 2.0 * double(G) * std::lgamma(0.5);
  for (Index g = 0; g < G; ++g) {
    const double half = double(pr.sizes[static_cast<std::size_t>(g)] + 1) / 2.0;
    const double s_b_g = half / st.m_b[g];  // rate of the Gamma factor whose mean is m_b
    v += std::lgamma(half) - std::log(st.s_c[g]) - half * (std::log(s_b_g) - 1.0) -
         (st.m_b[g] + 1.0) * st.m_c[g];
  }
  v += pr.r * std::log(pr.s) - std::lgamma(pr.r);
  v += double(p) / 2.0 * (std::log(two_pi) + 1.0);
  v += 0.5 * std::log(st.Sigma.determinant());
  const double r_s2 = pr.r + double(n + p) / 2.0;
  v += -r_s2 * std::log(st.s_sigma2) + std::lgamma(r_s2) + r_s2;
  return v;
}

// ---------- random centered regression instances ----------

struct RandomInstance {
  MatrixXd X;
  VectorXd y;
  std::vector<Index> sizes;
};

inline RandomInstance random_instance(std::uint64_t seed, Index n_lo = 20, Index n_hi = 200,
                                      Index g_lo = 2, Index g_hi = 20, Index pg_hi = 5) {
  vgpencr::Rng rng(seed);
  RandomInstance inst;
  const Index G = g_lo + static_cast<Index>(rng.uniform01() * double(g_hi - g_lo + 1));
  Index p = 0;
  for (Index g = 0; g < G; ++g) {
    const Index sz = 1 + static_cast<Index>(rng.uniform01() * double(pg_hi));
    inst.sizes.push_back(std::min(sz, pg_hi));
    p += inst.sizes.back();
  }
  const Index n = std::max<Index>(n_lo + static_cast<Index>(rng.uniform01() * double(n_hi - n_lo + 1)), 3);
  inst.X.resize(n, p);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < p; ++j) inst.X(i, j) = rng.normal();
  VectorXd beta = VectorXd::Zero(p);
  Index off = 0;
  for (Index g = 0; g < G; ++g) {
    if (rng.uniform01() < 0.4) {
      for (Index j = 0; j < inst.sizes[static_cast<std::size_t>(g)]; ++j) {
        beta[off + j] = 2.0 * rng.normal();
      }
    }
    off += inst.sizes[static_cast<std::size_t>(g)];
  }
  inst.y = inst.X * beta;
  for (Index i = 0; i < n; ++i) inst.y[i] += rng.normal();
  inst.y.array() -= inst.y.mean();
  inst.X.rowwise() -= inst.X.colwise().mean();
  return inst;
}

// ---------- brute-force minimizer of the group-lasso objective ----------

struct BruteProblem {
  MatrixXd X;
  VectorXd y;
  std::vector<Index> sizes;
  VectorXd weights;
  double lambda;
};

inline double brute_objective(const BruteProblem& pr, const VectorXd& beta) {
  double v = (pr.y - pr.X * beta).squaredNorm();
  Index off = 0;
  for (std::size_t g = 0; g < pr.sizes.size(); ++g) {
    v += pr.lambda * pr.weights[static_cast<Index>(g)] * beta.segment(off, pr.sizes[g]).norm();
    off += pr.sizes[g];
  }
  return v;
}

// golden-section minimum of a convex 1-d restriction
template <typename F>
double golden_min(F&& f, double lo, double hi, int iters = 80) {
  const double phi = 0.6180339887498949;
  double a = lo, b = hi;
  double x1 = b - phi * (b - a), x2 = a + phi * (b - a);
  double f1 = f(x1), f2 = f(x2);
  for (int k = 0; k < iters; ++k) {
    if (f1 < f2) {
      b = x2; x2 = x1; f2 = f1;
      x1 = b - phi * (b - a); f1 = f(x1);
    } else {
      a = x1; x1 = x2; f1 = f2;
      x2 = a + phi * (b - a); f2 = f(x2);
    }
  }
  return f1 < f2 ? x1 : x2;
}

// Dense grid scan over [-5,5]^p followed by cyclic coordinate golden-section
// refinement with explicit group-zero probes (the only nonsmooth points of
// the objective are full group zeros).
inline double brute_force_min(const BruteProblem& pr, double box = 5.0) {
  const Index p = pr.X.cols();
  VectorXd best;
  double best_val = std::numeric_limits<double>::infinity();

  const double step0 = 0.5;
  const Index steps = static_cast<Index>(2 * box / step0) + 1;
  VectorXd cand = VectorXd::Zero(p);
  const std::function<void(Index)> scan = [&](Index dimension) {
    if (dimension == p) {
      const double v = brute_objective(pr, cand);
      if (v < best_val) {
        best_val = v;
        best = cand;
      }
      return;
    }
    for (Index k = 0; k < steps; ++k) {
      cand[dimension] = -box + double(k) * step0;
      scan(dimension + 1);
    }
  };
  scan(0);

  // also start from the ridge point in case the minimizer sits between grid nodes
  const MatrixXd XtX = pr.X.transpose() * pr.X;
  VectorXd ridge = (XtX + 1e-8 * MatrixXd::Identity(p, p)).ldlt().solve(pr.X.transpose() * pr.y);
  if (brute_objective(pr, ridge) < best_val) {
    best = ridge;
    best_val = brute_objective(pr, ridge);
  }

  double radius = step0;
  while (radius > 1e-9) {
    bool improved = true;
    int guard = 0;
    while (improved && guard++ < 400) {
      improved = false;
      for (Index j = 0; j < p; ++j) {
        const double old = best[j];
        const double xj = golden_min(
            [&](double v) {
              best[j] = v;
              const double val = brute_objective(pr, best);
              best[j] = old;
              return val;
            },
            old - 2 * radius, old + 2 * radius);
        best[j] = xj;
        const double v = brute_objective(pr, best);
        if (v < best_val - 1e-15) {
          best_val = v;
          improved = true;
        } else {
          best[j] = old;
        }
      }
      // group-zero probes handle the kink at ||beta_g|| = 0
      Index off = 0;
      for (std::size_t g = 0; g < pr.sizes.size(); ++g) {
        VectorXd saved = best.segment(off, pr.sizes[g]);
        best.segment(off, pr.sizes[g]).setZero();
        const double v = brute_objective(pr, best);
        if (v < best_val - 1e-15) {
          best_val = v;
          improved = true;
        } else {
          best.segment(off, pr.sizes[g]) = saved;
        }
        off += pr.sizes[g];
      }
      // for groups parked at zero, probe along the pull of the residual
      off = 0;
      for (std::size_t g = 0; g < pr.sizes.size(); ++g) {
        if (best.segment(off, pr.sizes[g]).isZero(0.0)) {
          const VectorXd r = pr.y - pr.X * best;
          const VectorXd dir = pr.X.middleCols(off, pr.sizes[g]).transpose() * r;
          if (dir.norm() > 0) {
            const VectorXd d = dir.normalized();
            const double t = golden_min(
                [&](double v) {
                  VectorXd trial = best;
                  trial.segment(off, pr.sizes[g]) = v * d;
                  return brute_objective(pr, trial);
                },
                0.0, 2 * radius + 1.0);
            VectorXd trial = best;
            trial.segment(off, pr.sizes[g]) = t * d;
            const double v = brute_objective(pr, trial);
            if (v < best_val - 1e-15) {
              best = trial;
              best_val = v;
              improved = true;
            }
          }
        }
        off += pr.sizes[g];
      }
    }
    radius /= 4.0;
  }
  return best_val;
}

}  // namespace oracle
