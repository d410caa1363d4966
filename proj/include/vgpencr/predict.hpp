#pragma once

#include <string>

#include "vgpencr/errors.hpp"
#include "vgpencr/grouping.hpp"
#include "vgpencr/types.hpp"

namespace vgpencr {

// Uncentered affine predictor built from any coefficient estimate plus the
// centering statistics of the fit it came from.
template <typename Scalar>
struct PredictionModel {
  Vector<Scalar> beta;
  CenteringStats<Scalar> stats;
  Scalar kappa_hat = 0;  // recovered intercept y_bar - beta . x_bar
};

template <typename Derived>
PredictionModel<typename Derived::Scalar> make_model(const Eigen::MatrixBase<Derived>& beta,
                                                     CenteringStats<typename Derived::Scalar> stats) {
  using Scalar = typename Derived::Scalar;
  if (beta.size() != stats.x_bar.size()) {
    throw LengthMismatch("coefficient length " + std::to_string(beta.size()) +
                         " != centroid length " + std::to_string(stats.x_bar.size()));
  }
  PredictionModel<Scalar> m{beta.eval(), std::move(stats), 0};
  m.kappa_hat = m.stats.y_bar - m.beta.dot(m.stats.x_bar);
  return m;
}

template <typename Scalar, typename Derived>
Scalar predict_point(const PredictionModel<Scalar>& model,
                     const Eigen::MatrixBase<Derived>& x_star) {
  if (x_star.size() != model.beta.size()) {
    throw LengthMismatch("feature length does not match the model");
  }
  return model.stats.y_bar + (x_star - model.stats.x_bar).dot(model.beta);
}

template <typename Scalar, typename Derived>
Vector<Scalar> predict_rows(const PredictionModel<Scalar>& model,
                            const Eigen::MatrixBase<Derived>& X_star) {
  if (X_star.cols() != model.beta.size()) {
    throw LengthMismatch("feature columns do not match the model");
  }
  return ((X_star.rowwise() - model.stats.x_bar.transpose()) * model.beta).array() +
         model.stats.y_bar;
}

}  // namespace vgpencr
