#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "vgpencr/errors.hpp"
#include "vgpencr/grouping.hpp"
#include "vgpencr/types.hpp"

namespace vgpencr {

template <typename Scalar>
struct HyperParams {
  Scalar r = Scalar(0.01);   // InvGa shape of the noise-variance prior
  Scalar s = Scalar(0.01);   // InvGa rate
  Scalar tau = Scalar(1);    // global scale, fixed per fit
};

// All variational parameters of the mean-field factors
//   q(beta) = N(mu_beta, Sigma), q(sigma^2) = InvGa(r + (n+p)/2, s_sigma2),
//   q(b_g) = Ga((p_g+1)/2, s_b[g]), q(c_g) = Exp(s_c[g]).
// The covariance is held as prec_factor, the lower Cholesky factor L with
// L L^T = m_inv_sigma2 * (X^T X + M_tau) = Sigma^{-1}; sigma_diag caches
// diag(Sigma) so group traces never need a dense inverse.
template <typename Scalar>
struct CaviState {
  Vector<Scalar> mu_beta;
  Matrix<Scalar> prec_factor;
  Vector<Scalar> m_b;            // E_q[b_g]
  Scalar m_inv_sigma2 = 1;       // E_q[1/sigma^2]
  Scalar s_sigma2 = 1;
  Vector<Scalar> s_b;
  Vector<Scalar> s_c;
  Vector<Scalar> m_c;
  Index cycle = 0;
  std::vector<Scalar> elbo_trace;
  Vector<Scalar> sigma_diag;
};

template <typename Scalar>
struct CaviFit {
  CaviState<Scalar> state;
  CenteredDataset<Scalar> data;
  HyperParams<Scalar> hyper;
  bool converged = false;
  Index cycles_run = 0;
};

namespace detail {

// Gram pieces shared by every cycle of one fit.
template <typename Scalar>
struct CaviCache {
  Matrix<Scalar> XtX;
  Vector<Scalar> Xty;
};

template <typename Scalar>
CaviCache<Scalar> make_cavi_cache(const CenteredDataset<Scalar>& data) {
  CaviCache<Scalar> c;
  c.XtX.noalias() = data.design.X.transpose() * data.design.X;
  c.Xty.noalias() = data.design.X.transpose() * data.y;
  return c;
}

// diag(Sigma) from the precision factor: Sigma_jj = || L^{-1} e_j ||^2.
template <typename Scalar>
Vector<Scalar> sigma_diag_from_factor(const Matrix<Scalar>& L) {
  const Index p = L.rows();
  Matrix<Scalar> W = Matrix<Scalar>::Identity(p, p);
  L.template triangularView<Eigen::Lower>().solveInPlace(W);
  return W.colwise().squaredNorm().transpose();
}

template <typename Scalar>
Vector<Scalar> group_second_moments(const Vector<Scalar>& mu, const Vector<Scalar>& sigma_diag,
                                    const GroupSpec& spec) {
  Vector<Scalar> e(spec.G);
  for (Index g = 0; g < spec.G; ++g) {
    e[g] = mu.segment(spec.offsets[g], spec.sizes[g]).squaredNorm() +
           sigma_diag.segment(spec.offsets[g], spec.sizes[g]).sum();
  }
  return e;
}

// tr(X^T X Sigma) via X^T X = P/m - M_tau, valid because the state's factor
// was built from its own (m_b, m_inv_sigma2).
template <typename Scalar>
Scalar trace_xtx_sigma(const CaviState<Scalar>& st, const GroupSpec& spec, Scalar tau) {
  Scalar acc = Scalar(spec.p) / st.m_inv_sigma2;
  for (Index g = 0; g < spec.G; ++g) {
    acc -= st.m_b[g] / tau * st.sigma_diag.segment(spec.offsets[g], spec.sizes[g]).sum();
  }
  return acc;
}

template <typename Scalar>
Matrix<Scalar> precision_factor(const Matrix<Scalar>& XtX, const Vector<Scalar>& m_b,
                                const GroupSpec& spec, Scalar tau, Scalar m_inv_sigma2) {
  Matrix<Scalar> P = XtX;
  for (Index g = 0; g < spec.G; ++g) {
    P.diagonal().segment(spec.offsets[g], spec.sizes[g]).array() += m_b[g] / tau;
  }
  P *= m_inv_sigma2;
  Eigen::LLT<Matrix<Scalar>> llt(P);
  if (llt.info() != Eigen::Success) {
    throw NumericalFailure("precision matrix is not positive-definite");
  }
  return llt.matrixL();
}

// Completes the rate parameters from (m_b, mu, sigma_diag, m_inv_sigma2),
// keeping s_c = 1 + m_b and m_c = 1/s_c exact.
template <typename Scalar>
void refresh_rates(CaviState<Scalar>& st, const GroupSpec& spec, Scalar tau) {
  const Vector<Scalar> eg = group_second_moments(st.mu_beta, st.sigma_diag, spec);
  st.s_c = st.m_b.array() + Scalar(1);
  st.m_c = st.s_c.cwiseInverse();
  st.s_b = st.m_c.array() + st.m_inv_sigma2 * eg.array() / (2 * tau);
}

}  // namespace detail

// Evidence lower bound at the given state. Evaluated with the Gamma rate
// implied by the state's m_b (the pair that parameterizes one coherent
// q(b_g)); the stored s_b already anticipates the next cycle's b-update and
// mixing it in here breaks the coordinate-ascent monotonicity of the trace.
template <typename Scalar>
Scalar elbo(const CaviState<Scalar>& st, const CenteredDataset<Scalar>& data,
            const HyperParams<Scalar>& hyper) {
  const GroupSpec& spec = data.design.spec;
  const Scalar n = Scalar(data.design.n());
  const Scalar p = Scalar(spec.p);
  const Scalar tau = hyper.tau;
  const Scalar two_pi = Scalar(6.283185307179586476925286766559);

  const Vector<Scalar> eg = detail::group_second_moments(st.mu_beta, st.sigma_diag, spec);
  const Scalar resid = (data.y - data.design.X * st.mu_beta).squaredNorm() +
                       detail::trace_xtx_sigma(st, spec, tau);
  const Scalar logdet_sigma = Scalar(-2) * st.prec_factor.diagonal().array().log().sum();

  Scalar value = -n / 2 * std::log(two_pi) - p / 2 * std::log(tau);
  value -= st.m_inv_sigma2 *
           ((st.m_b.array() * eg.array()).sum() / (2 * tau) + resid / 2 + hyper.s);
  value -= 2 * Scalar(spec.G) * std::lgamma(Scalar(0.5));
  for (Index g = 0; g < spec.G; ++g) {
    const Scalar half = (Scalar(spec.sizes[g]) + 1) / 2;
    const Scalar s_b_g = half / st.m_b[g];
    value += std::lgamma(half) - std::log(st.s_c[g]) - half * (std::log(s_b_g) - 1) -
             (st.m_b[g] + 1) * st.m_c[g];
  }
  value += hyper.r * std::log(hyper.s) - std::lgamma(hyper.r);
  value += p / 2 * (std::log(two_pi) + 1);
  value += logdet_sigma / 2;
  const Scalar r_sigma2 = hyper.r + (n + p) / 2;
  value += -r_sigma2 * std::log(st.s_sigma2) + std::lgamma(r_sigma2) + r_sigma2;
  return value;
}

template <typename Scalar>
CaviState<Scalar> init_cavi(const CenteredDataset<Scalar>& data, const HyperParams<Scalar>& hyper,
                            const detail::CaviCache<Scalar>& cache) {
  if (!(hyper.r > 0 && hyper.s > 0 && hyper.tau > 0)) {
    throw InvalidArgument("hyperparameters must be strictly positive");
  }
  const GroupSpec& spec = data.design.spec;
  const Index n = data.design.n();
  const Index p = spec.p;

  CaviState<Scalar> st;
  st.m_b = Vector<Scalar>::Ones(spec.G);

  // ridge-regularized least squares start; exact LS when X^T X is well-conditioned
  const Scalar eps = Scalar(1e-6) * cache.XtX.trace() / Scalar(p);
  Matrix<Scalar> A = cache.XtX;
  A.diagonal().array() += eps;
  Eigen::LDLT<Matrix<Scalar>> ldlt(A);
  if (ldlt.info() != Eigen::Success) {
    throw NumericalFailure("ridge system for the CAVI start could not be factorized");
  }
  st.mu_beta = ldlt.solve(cache.Xty);
  if (!st.mu_beta.allFinite()) {
    throw NumericalFailure("ridge solution for the CAVI start is not finite");
  }

  const Scalar rss = (data.y - data.design.X * st.mu_beta).squaredNorm();
  if (n > p + 1 && rss > Scalar(1e-10) * std::max(Scalar(1), data.y.squaredNorm())) {
    st.m_inv_sigma2 = Scalar(n - p) / rss;
  } else {
    // interpolating start: the residual formula is undefined, fall back to
    // the sample variance of the centered response
    const Scalar var_y = data.y.squaredNorm() / Scalar(n - 1);
    st.m_inv_sigma2 = 1 / std::max(var_y, Scalar(1e-12));
  }

  st.prec_factor = detail::precision_factor(cache.XtX, st.m_b, spec, hyper.tau, st.m_inv_sigma2);
  st.sigma_diag = detail::sigma_diag_from_factor(st.prec_factor);
  st.s_sigma2 = (hyper.r + Scalar(n + p) / 2) / st.m_inv_sigma2;
  detail::refresh_rates(st, spec, hyper.tau);
  st.cycle = 0;
  return st;
}

template <typename Scalar>
CaviState<Scalar> init_cavi(const CenteredDataset<Scalar>& data, const HyperParams<Scalar>& hyper) {
  return init_cavi(data, hyper, detail::make_cavi_cache(data));
}

// One full cycle in the block order: b-update from previous-cycle moments,
// then M_tau, then the mean through the previous cycle's covariance factor,
// then the noise-variance update from previous-cycle quantities, then the new
// covariance factor, then the rate refresh. Every right-hand side that reads
// "previous cycle" stays on the entry state even where a same-cycle value
// already exists.
template <typename Scalar>
CaviState<Scalar> cavi_cycle(const CaviState<Scalar>& prev, const CenteredDataset<Scalar>& data,
                             const HyperParams<Scalar>& hyper,
                             const detail::CaviCache<Scalar>& cache) {
  const GroupSpec& spec = data.design.spec;
  const Index n = data.design.n();
  const Index p = spec.p;
  const Scalar tau = hyper.tau;
  if (prev.mu_beta.size() != p || prev.m_b.size() != spec.G) {
    throw LengthMismatch("state does not match the dataset dimensions");
  }

  const Vector<Scalar> eg_old = detail::group_second_moments(prev.mu_beta, prev.sigma_diag, spec);

  CaviState<Scalar> st;
  st.elbo_trace = prev.elbo_trace;
  st.cycle = prev.cycle + 1;

  // (1) local shrinkage means
  Vector<Scalar> sizes_p1(spec.G);
  for (Index g = 0; g < spec.G; ++g) sizes_p1[g] = Scalar(spec.sizes[g] + 1);
  st.m_b = sizes_p1.array() /
           (2 / (1 + prev.m_b.array()) + eg_old.array() * prev.m_inv_sigma2 / tau);

  // (3) mean through the previous covariance: mu = m_old * Sigma_old * X^T y
  Vector<Scalar> w = cache.Xty;
  prev.prec_factor.template triangularView<Eigen::Lower>().solveInPlace(w);
  prev.prec_factor.transpose().template triangularView<Eigen::Upper>().solveInPlace(w);
  st.mu_beta = prev.m_inv_sigma2 * w;

  // (4)-(5) noise precision from previous-cycle moments
  const Scalar tr_old = detail::trace_xtx_sigma(prev, spec, tau);
  const Scalar rss_old = (data.y - data.design.X * prev.mu_beta).squaredNorm();
  st.s_sigma2 = hyper.s +
                ((prev.m_b.array() / tau * eg_old.array()).sum() + tr_old + rss_old) / 2;
  st.m_inv_sigma2 = (hyper.r + Scalar(n + p) / 2) / st.s_sigma2;

  // (2)+(6) new covariance factor from the new M_tau and noise precision
  st.prec_factor = detail::precision_factor(cache.XtX, st.m_b, spec, tau, st.m_inv_sigma2);
  st.sigma_diag = detail::sigma_diag_from_factor(st.prec_factor);

  // (7) rate refresh and bookkeeping
  detail::refresh_rates(st, spec, tau);
  const Scalar e = elbo(st, data, hyper);
  if (!st.elbo_trace.empty()) {
    const Scalar last = st.elbo_trace.back();
    if (e - last < Scalar(-1e-6) * std::abs(last)) {
      throw DivergenceDetected("ELBO decreased by more than 1e-6 relative in one cycle");
    }
  }
  st.elbo_trace.push_back(e);
  return st;
}

template <typename Scalar>
CaviState<Scalar> cavi_cycle(const CaviState<Scalar>& prev, const CenteredDataset<Scalar>& data,
                             const HyperParams<Scalar>& hyper) {
  return cavi_cycle(prev, data, hyper, detail::make_cavi_cache(data));
}

namespace detail {

template <typename Scalar>
Scalar max_rel_change(const CaviState<Scalar>& a, const CaviState<Scalar>& b) {
  const auto vec = [](const Vector<Scalar>& x, const Vector<Scalar>& y) {
    return (x - y).template lpNorm<Eigen::Infinity>() /
           (1 + y.template lpNorm<Eigen::Infinity>());
  };
  Scalar d = vec(a.mu_beta, b.mu_beta);
  d = std::max(d, vec(a.m_b, b.m_b));
  d = std::max(d, vec(a.s_b, b.s_b));
  d = std::max(d, vec(a.s_c, b.s_c));
  d = std::max(d, std::abs(a.m_inv_sigma2 - b.m_inv_sigma2) / (1 + std::abs(b.m_inv_sigma2)));
  d = std::max(d, std::abs(a.s_sigma2 - b.s_sigma2) / (1 + std::abs(b.s_sigma2)));
  return d;
}

}  // namespace detail

// Convergence requires both a settled ELBO (relative change below rel_tol,
// the trace being the reported objective) and settled variational parameters
// (the ELBO is flat to second order around the optimum, so it alone can
// stop while parameters still drift).
template <typename Scalar>
CaviFit<Scalar> run_cavi(const CenteredDataset<Scalar>& data, const HyperParams<Scalar>& hyper,
                         Index min_cycles = 2, Scalar rel_tol = Scalar(1e-4),
                         Index max_cycles = 500) {
  if (min_cycles < 2) throw InvalidArgument("min_cycles must be at least 2");
  if (max_cycles < min_cycles) throw InvalidArgument("max_cycles < min_cycles");
  const auto cache = detail::make_cavi_cache(data);

  CaviFit<Scalar> fit;
  fit.hyper = hyper;
  fit.state = init_cavi(data, hyper, cache);
  fit.converged = false;
  while (fit.state.cycle < max_cycles) {
    CaviState<Scalar> next = cavi_cycle(fit.state, data, hyper, cache);
    const Scalar param_change = detail::max_rel_change(next, fit.state);
    const auto& tr = next.elbo_trace;
    bool done = false;
    if (next.cycle >= min_cycles && tr.size() >= 2) {
      const Scalar prev_e = tr[tr.size() - 2];
      done = std::abs(tr.back() - prev_e) < rel_tol * std::abs(prev_e) &&
             param_change < 5 * rel_tol;
    }
    fit.state = std::move(next);
    if (done) {
      fit.converged = true;
      break;
    }
  }
  fit.cycles_run = fit.state.cycle;
  fit.data = data;
  return fit;
}

template <typename Scalar>
struct TauSelection {
  Scalar tau = 0;
  std::vector<Scalar> elbos;  // final ELBO per grid point, NaN where the fit failed
};

// Grid maximization of the final ELBO over the global scale; ties go to the
// smaller tau (stronger shrinkage).
template <typename Scalar>
TauSelection<Scalar> select_tau(const CenteredDataset<Scalar>& data,
                                const HyperParams<Scalar>& hyper_base,
                                std::vector<Scalar> tau_grid) {
  if (tau_grid.empty()) throw EmptyInput("select_tau: empty grid");
  std::sort(tau_grid.begin(), tau_grid.end());
  TauSelection<Scalar> sel;
  sel.elbos.assign(tau_grid.size(), std::numeric_limits<Scalar>::quiet_NaN());
  Scalar best = -std::numeric_limits<Scalar>::infinity();
  bool any_ok = false;
  for (std::size_t k = 0; k < tau_grid.size(); ++k) {
    if (!(tau_grid[k] > 0)) throw InvalidArgument("select_tau: grid values must be positive");
    HyperParams<Scalar> hyper = hyper_base;
    hyper.tau = tau_grid[k];
    try {
      const auto fit = run_cavi(data, hyper);
      const Scalar e = fit.state.elbo_trace.back();
      sel.elbos[k] = e;
      if (!any_ok || e > best + Scalar(1e-12) * std::max(Scalar(1), std::abs(best))) {
        best = e;
        sel.tau = tau_grid[k];
      }
      any_ok = true;
    } catch (const Error&) {
      // grid point skipped; reported as NaN in elbos
    }
  }
  if (!any_ok) throw NumericalFailure("select_tau: every grid point failed");
  return sel;
}

}  // namespace vgpencr
