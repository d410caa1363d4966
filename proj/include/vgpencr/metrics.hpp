#pragma once

#include <cmath>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "vgpencr/errors.hpp"
#include "vgpencr/types.hpp"

namespace vgpencr {

// Group-level selection counts; tp+fp+tn+fn == G.
struct ConfusionCounts {
  Index tp = 0, fp = 0, tn = 0, fn = 0;
};

inline ConfusionCounts confusion(const std::vector<Index>& selected,
                                 const std::vector<Index>& truth, Index G) {
  std::set<Index> sel(selected.begin(), selected.end());
  std::set<Index> tru(truth.begin(), truth.end());
  for (const auto& s : {sel, tru}) {
    for (Index g : s) {
      if (g < 0 || g >= G) throw IndexOutOfRange("group index " + std::to_string(g));
    }
  }
  ConfusionCounts c;
  for (Index g = 0; g < G; ++g) {
    const bool s = sel.count(g) > 0, t = tru.count(g) > 0;
    if (s && t) ++c.tp;
    else if (s) ++c.fp;
    else if (t) ++c.fn;
    else ++c.tn;
  }
  return c;
}

// Youden's J = sensitivity + specificity - 1; missing when a class is empty.
inline std::optional<double> youden(const ConfusionCounts& c) {
  if (c.tp + c.fn == 0 || c.tn + c.fp == 0) return std::nullopt;
  return double(c.tp) / double(c.tp + c.fn) + double(c.tn) / double(c.tn + c.fp) - 1.0;
}

// Matthews correlation; missing when any marginal sum is zero.
inline std::optional<double> mcc(const ConfusionCounts& c) {
  const double s1 = double(c.tp + c.fp), s2 = double(c.tp + c.fn);
  const double s3 = double(c.tn + c.fp), s4 = double(c.tn + c.fn);
  if (s1 == 0 || s2 == 0 || s3 == 0 || s4 == 0) return std::nullopt;
  const double num = double(c.tp) * double(c.tn) - double(c.fp) * double(c.fn);
  return num / std::sqrt(s1 * s2 * s3 * s4);
}

template <typename DerivedA, typename DerivedB>
typename DerivedA::Scalar mspe(const Eigen::MatrixBase<DerivedA>& pred,
                               const Eigen::MatrixBase<DerivedB>& actual) {
  using Scalar = typename DerivedA::Scalar;
  if (pred.size() != actual.size()) throw LengthMismatch("prediction/actual length mismatch");
  if (pred.size() == 0) throw EmptyInput("mspe of empty vectors");
  return (pred - actual).squaredNorm() / Scalar(pred.size());
}

// Integrated squared error of an estimated coefficient function by the
// trapezoid rule on an equispaced grid.
template <typename Scalar, typename FHat, typename FTrue>
Scalar mise(FHat&& beta_hat, FTrue&& beta_true, Scalar lo = Scalar(0), Scalar hi = Scalar(20),
            Index grid_points = 401) {
  if (grid_points < 2) throw InvalidArgument("mise needs at least 2 grid points");
  const Scalar h = (hi - lo) / Scalar(grid_points - 1);
  Scalar acc = 0;
  for (Index k = 0; k < grid_points; ++k) {
    const Scalar t = lo + Scalar(k) * h;
    const Scalar diff = beta_true(t) - beta_hat(t);
    const Scalar sq = diff * diff;
    acc += (k == 0 || k == grid_points - 1) ? sq / 2 : sq;
  }
  return acc * h;
}

}  // namespace vgpencr
