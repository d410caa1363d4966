#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "vgpencr/errors.hpp"
#include "vgpencr/grouping.hpp"
#include "vgpencr/types.hpp"

namespace vgpencr {

enum class BasisKind { NaturalCubic, BSpline };

template <typename Scalar>
struct SplineBasisSpec {
  BasisKind kind = BasisKind::BSpline;
  Index dim = 0;
  std::vector<Scalar> knots;  // natural: the dim spline knots; bspline: full clamped knot vector
  int degree = 3;
  Scalar lo = 0, hi = 1;
};

namespace detail {

// type-7 quantile (linear interpolation on the sorted sample)
template <typename Scalar>
Scalar quantile(const std::vector<Scalar>& sorted, Scalar prob) {
  const auto n = sorted.size();
  const Scalar h = prob * Scalar(n - 1);
  const auto k = static_cast<std::size_t>(std::floor(h));
  if (k + 1 >= n) return sorted.back();
  const Scalar frac = h - Scalar(k);
  return sorted[k] + frac * (sorted[k + 1] - sorted[k]);
}

template <typename Scalar>
Scalar cube_plus(Scalar v) {
  return v > 0 ? v * v * v : Scalar(0);
}

}  // namespace detail

// Natural cubic spline space on dim knots: boundary knots at the data range,
// dim-2 interior knots at equispaced quantiles. The space has dimension dim,
// contains constants and the identity, and is linear beyond the boundary.
template <typename Derived, typename Scalar = typename Derived::Scalar>
SplineBasisSpec<Scalar> make_natural_spec(const Eigen::MatrixBase<Derived>& z_in, Index dim = 4) {
  if (dim < 2) throw InvalidArgument("natural cubic basis needs dim >= 2");
  if (z_in.size() < 2) throw DegenerateInput("need at least 2 points to place knots");
  const Vector<Scalar> z = z_in;
  std::vector<Scalar> sorted(z.data(), z.data() + z.size());
  std::sort(sorted.begin(), sorted.end());
  SplineBasisSpec<Scalar> spec;
  spec.kind = BasisKind::NaturalCubic;
  spec.dim = dim;
  spec.degree = 3;
  spec.lo = sorted.front();
  spec.hi = sorted.back();
  spec.knots.push_back(spec.lo);
  for (Index k = 1; k + 1 < dim; ++k) {
    spec.knots.push_back(detail::quantile(sorted, Scalar(k) / Scalar(dim - 1)));
  }
  spec.knots.push_back(spec.hi);
  for (std::size_t k = 0; k + 1 < spec.knots.size(); ++k) {
    if (!(spec.knots[k] < spec.knots[k + 1])) {
      throw DegenerateInput("natural spline knots are not strictly increasing");
    }
  }
  return spec;
}

// Truncated-power natural basis: 1, z, d_k(z) - d_{K-1}(z) with
// d_k(z) = [(z - k_k)_+^3 - (z - k_K)_+^3] / (k_K - k_k).
template <typename Scalar, typename Derived>
Matrix<Scalar> natural_design(const SplineBasisSpec<Scalar>& spec,
                              const Eigen::MatrixBase<Derived>& z) {
  const Index K = static_cast<Index>(spec.knots.size());
  const Scalar kK = spec.knots[static_cast<std::size_t>(K - 1)];
  Matrix<Scalar> out(z.size(), spec.dim);
  const auto d = [&](Scalar x, Index k) {
    const Scalar kk = spec.knots[static_cast<std::size_t>(k)];
    return (detail::cube_plus(x - kk) - detail::cube_plus(x - kK)) / (kK - kk);
  };
  for (Index i = 0; i < z.size(); ++i) {
    const Scalar x = z[i];
    out(i, 0) = 1;
    out(i, 1) = x;
    const Scalar dlast = d(x, K - 2);
    for (Index k = 0; k + 2 < K; ++k) out(i, k + 2) = d(x, k) - dlast;
  }
  return out;
}

template <typename Derived>
Matrix<typename Derived::Scalar> natural_cubic_basis(const Eigen::MatrixBase<Derived>& z,
                                                     Index dim = 4) {
  return natural_design(make_natural_spec(z, dim), z);
}

// Cubic B-spline space on [lo, hi] with equispaced interior knots and
// (degree+1)-fold boundary replication.
template <typename Scalar>
SplineBasisSpec<Scalar> make_bspline_spec(Scalar lo, Scalar hi, Index dim, int degree = 3) {
  if (!(lo < hi)) throw InvalidArgument("bspline domain is empty");
  if (dim < degree + 1) throw InvalidArgument("bspline dim must be at least degree + 1");
  SplineBasisSpec<Scalar> spec;
  spec.kind = BasisKind::BSpline;
  spec.dim = dim;
  spec.degree = degree;
  spec.lo = lo;
  spec.hi = hi;
  const Index n_interior = dim - degree - 1;
  for (int k = 0; k <= degree; ++k) spec.knots.push_back(lo);
  for (Index k = 1; k <= n_interior; ++k) {
    spec.knots.push_back(lo + Scalar(k) * (hi - lo) / Scalar(n_interior + 1));
  }
  for (int k = 0; k <= degree; ++k) spec.knots.push_back(hi);
  return spec;
}

/// All dim B-spline values via the Cox-de Boor triangle; nonnegative, sums to 1.
template <typename Scalar>
Vector<Scalar> bspline_basis(Scalar t, const SplineBasisSpec<Scalar>& spec) {
  if (spec.kind != BasisKind::BSpline) throw InvalidArgument("spec is not a bspline spec");
  if (t < spec.lo || t > spec.hi) {
    const Scalar slack = Scalar(1e-9);
    if (t >= spec.lo - slack && t <= spec.hi + slack) {
      t = std::clamp(t, spec.lo, spec.hi);
    } else {
      throw OutOfDomain("bspline evaluation point outside the domain");
    }
  }
  const int deg = spec.degree;
  const auto& kn = spec.knots;
  // knot span containing t, with t == hi folded into the last real span
  Index span = static_cast<Index>(deg);
  const Index last_span = static_cast<Index>(kn.size()) - deg - 2;
  while (span < last_span && t >= kn[static_cast<std::size_t>(span + 1)]) ++span;

  std::vector<Scalar> vals(static_cast<std::size_t>(deg) + 1, Scalar(0));
  std::vector<Scalar> left(static_cast<std::size_t>(deg) + 1), right(static_cast<std::size_t>(deg) + 1);
  vals[0] = 1;
  for (int d = 1; d <= deg; ++d) {
    left[static_cast<std::size_t>(d)] = t - kn[static_cast<std::size_t>(span + 1 - d)];
    right[static_cast<std::size_t>(d)] = kn[static_cast<std::size_t>(span + d)] - t;
    Scalar saved = 0;
    for (int j = 0; j < d; ++j) {
      const Scalar denom = right[static_cast<std::size_t>(j + 1)] + left[static_cast<std::size_t>(d - j)];
      const Scalar tmp = vals[static_cast<std::size_t>(j)] / denom;
      vals[static_cast<std::size_t>(j)] = saved + right[static_cast<std::size_t>(j + 1)] * tmp;
      saved = left[static_cast<std::size_t>(d - j)] * tmp;
    }
    vals[static_cast<std::size_t>(d)] = saved;
  }
  Vector<Scalar> out = Vector<Scalar>::Zero(spec.dim);
  for (int j = 0; j <= deg; ++j) {
    out[span - deg + j] = vals[static_cast<std::size_t>(j)];
  }
  return out;
}

template <typename Scalar>
Scalar evaluate_spline(const SplineBasisSpec<Scalar>& spec, const Vector<Scalar>& coef, Scalar t) {
  return bspline_basis(t, spec).dot(coef);
}

// One repeated-measures observation of the varying-coefficient model.
template <typename Scalar>
struct VcObservation {
  Index subject = 0;
  Scalar t = 0;
  Vector<Scalar> x;  // G covariate values at time t
};

template <typename Scalar>
struct VcDesign {
  GroupedDesign<Scalar> design;  // N x (G*d), groups of size d
  SplineBasisSpec<Scalar> basis;
};

// Row (i,j) holds B_l(t_ij) * x_ig(t_ij) stacked over groups, so each
// coefficient function becomes one size-d group of basis weights.
template <typename Scalar>
VcDesign<Scalar> expand_varying_coefficient_design(const std::vector<VcObservation<Scalar>>& obs,
                                                   Index G, Index d, Scalar lo, Scalar hi) {
  if (obs.empty()) throw EmptyObservation("no observations to expand");
  if (d < 2) throw InvalidArgument("basis dimension must be at least 2");
  VcDesign<Scalar> out;
  out.basis = make_bspline_spec(lo, hi, d);
  Matrix<Scalar> U(static_cast<Index>(obs.size()), G * d);
  for (std::size_t r = 0; r < obs.size(); ++r) {
    if (obs[r].x.size() != G) throw EmptyObservation("observation has wrong covariate count");
    const Vector<Scalar> b = bspline_basis(obs[r].t, out.basis);
    for (Index g = 0; g < G; ++g) {
      U.row(static_cast<Index>(r)).segment(g * d, d) = obs[r].x[g] * b.transpose();
    }
  }
  out.design = build_grouped_design(std::move(U), std::vector<Index>(static_cast<std::size_t>(G), d));
  return out;
}

}  // namespace vgpencr
