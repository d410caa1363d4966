#pragma once

#include <numeric>
#include <string>
#include <vector>

#include "vgpencr/errors.hpp"
#include "vgpencr/types.hpp"

namespace vgpencr {

/// Contiguous grouping of predictor columns: sizes[g] columns starting at offsets[g].
struct GroupSpec {
  std::vector<Index> sizes;
  std::vector<Index> offsets;
  Index G = 0;  // group count
  Index p = 0;  // total predictor count
};

inline GroupSpec make_group_spec(const std::vector<Index>& sizes) {
  GroupSpec spec;
  spec.sizes = sizes;
  spec.G = static_cast<Index>(sizes.size());
  spec.offsets.resize(sizes.size());
  Index off = 0;
  for (std::size_t g = 0; g < sizes.size(); ++g) {
    if (sizes[g] < 1) throw EmptyGroup("group " + std::to_string(g) + " has size " + std::to_string(sizes[g]));
    spec.offsets[g] = off;
    off += sizes[g];
  }
  spec.p = off;
  return spec;
}

/// One size-1 group per coordinate.
inline GroupSpec singleton_spec(Index p) {
  return make_group_spec(std::vector<Index>(static_cast<std::size_t>(p), 1));
}

template <typename Scalar>
struct GroupedDesign {
  Matrix<Scalar> X;  // n x spec.p, row i holds the stacked group blocks
  GroupSpec spec;

  Index n() const { return X.rows(); }
};

template <typename Scalar>
GroupedDesign<Scalar> build_grouped_design(Matrix<Scalar> raw, const std::vector<Index>& sizes) {
  GroupSpec spec = make_group_spec(sizes);
  if (spec.p != raw.cols()) {
    throw SizeMismatch("group sizes sum to " + std::to_string(spec.p) + " but matrix has " +
                       std::to_string(raw.cols()) + " columns");
  }
  return GroupedDesign<Scalar>{std::move(raw), std::move(spec)};
}

template <typename Scalar>
struct CenteringStats {
  Scalar y_bar = 0;        // sample response mean
  Vector<Scalar> x_bar;    // column means of the uncentered design
};

template <typename Scalar>
struct CenteredDataset {
  Vector<Scalar> y;               // centered response
  GroupedDesign<Scalar> design;   // column-centered design
  CenteringStats<Scalar> stats;
};

/// Subtract the response mean and the column means; the intercept drops out of the model.
template <typename Derived, typename Scalar = typename Derived::Scalar>
CenteredDataset<Scalar> center(const Eigen::MatrixBase<Derived>& y_raw,
                               const GroupedDesign<Scalar>& design) {
  const Index n = design.n();
  if (y_raw.size() != n) {
    throw LengthMismatch("response length " + std::to_string(y_raw.size()) + " != design rows " +
                         std::to_string(n));
  }
  if (n < 2) throw LengthMismatch("need at least 2 rows to center");
  CenteredDataset<Scalar> out;
  out.stats.y_bar = y_raw.mean();
  out.stats.x_bar = design.X.colwise().mean();
  out.y = y_raw.array() - out.stats.y_bar;
  out.design.spec = design.spec;
  out.design.X = design.X.rowwise() - out.stats.x_bar.transpose();
  return out;
}

}  // namespace vgpencr
