#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "vgpencr/basis.hpp"
#include "vgpencr/errors.hpp"
#include "vgpencr/grouping.hpp"
#include "vgpencr/rng.hpp"
#include "vgpencr/types.hpp"

namespace vgpencr {

enum class Scenario { Gam, Categorical, VaryingCoefficient };

template <typename Scalar>
struct SimTruth {
  std::vector<Index> active_groups;  // 0-based
  Vector<Scalar> beta0;              // empty when the truth is not linear in the design
  Scalar sigma_true = 1;
  Scenario scenario = Scenario::Gam;
};

template <typename Scalar>
struct SimDataset {
  Vector<Scalar> y_raw;
  GroupedDesign<Scalar> design;    // post basis/dummy expansion
  Matrix<Scalar> raw_covariates;   // pre-expansion values
  Vector<Scalar> signal;           // noiseless response
  SimTruth<Scalar> truth;
  std::uint64_t seed = 0;
  std::vector<SplineBasisSpec<Scalar>> bases;  // gam: one per group; vc: single entry
};

// --- generalized additive signal: 5 sin(pi z1) + 2.5 (z3^2 - 1/2) + exp(z4) + 3 z5 ---

template <typename Scalar>
Scalar gam_signal(const Vector<Scalar>& z) {
  return 5 * std::sin(Scalar(3.1415926535897932384626433832795) * z[0]) +
         Scalar(2.5) * (z[2] * z[2] - Scalar(0.5)) + std::exp(z[3]) + 3 * z[4];
}

struct GamOptions {
  Index n_test = 200;
  bool noiseless = false;  // internal flag for approximation-error studies
};

template <typename Scalar>
std::pair<SimDataset<Scalar>, SimDataset<Scalar>> gen_gam(Index n, Index G, std::uint64_t seed,
                                                          const GamOptions& opts = {}) {
  if (G < 5) throw GTooSmall("the additive signal uses covariates 1..5");
  if (n < 2) throw InvalidArgument("need n >= 2");
  Rng rng(seed);

  const auto draw = [&](Index rows) {
    Matrix<Scalar> z(rows, G);
    for (Index i = 0; i < rows; ++i) {
      for (Index g = 0; g < G; ++g) z(i, g) = Scalar(rng.uniform01());
    }
    return z;
  };
  const auto make = [&](const Matrix<Scalar>& z) {
    SimDataset<Scalar> ds;
    ds.raw_covariates = z;
    ds.signal.resize(z.rows());
    for (Index i = 0; i < z.rows(); ++i) ds.signal[i] = gam_signal<Scalar>(z.row(i).transpose());
    ds.y_raw = ds.signal;
    if (!opts.noiseless) {
      for (Index i = 0; i < z.rows(); ++i) ds.y_raw[i] += Scalar(rng.normal());
    }
    return ds;
  };

  const Matrix<Scalar> z_train = draw(n);
  SimDataset<Scalar> train = make(z_train);
  const Matrix<Scalar> z_test = draw(opts.n_test);
  SimDataset<Scalar> test = make(z_test);

  // dimension-4 natural cubic basis per covariate, knots from the training
  // sample and reused for the test expansion
  std::vector<SplineBasisSpec<Scalar>> bases;
  bases.reserve(static_cast<std::size_t>(G));
  Matrix<Scalar> Xtr(n, 4 * G), Xte(opts.n_test, 4 * G);
  for (Index g = 0; g < G; ++g) {
    const auto spec = make_natural_spec<Scalar>(z_train.col(g), 4);
    Xtr.middleCols(4 * g, 4) = natural_design(spec, Vector<Scalar>(z_train.col(g)));
    Xte.middleCols(4 * g, 4) = natural_design(spec, Vector<Scalar>(z_test.col(g)));
    bases.push_back(spec);
  }
  const std::vector<Index> sizes(static_cast<std::size_t>(G), 4);
  train.design = build_grouped_design(std::move(Xtr), sizes);
  test.design = build_grouped_design(std::move(Xte), sizes);
  train.bases = bases;
  test.bases = std::move(bases);

  SimTruth<Scalar> truth;
  truth.scenario = Scenario::Gam;
  truth.active_groups = {0, 2, 3, 4};
  train.truth = truth;
  test.truth = std::move(truth);
  train.seed = test.seed = seed;
  return {std::move(train), std::move(test)};
}

// --- regression with three-level categorical predictors ---

inline const std::vector<double>& categorical_probs(Index j) {
  // 1-based predictor index; z1, z3, z4 carry the skewed laws
  static const std::vector<double> p1{0.3, 0.65, 0.05};
  static const std::vector<double> p3{0.2, 0.5, 0.3};
  static const std::vector<double> p4{0.5, 0.2, 0.3};
  static const std::vector<double> uniform{1.0 / 3, 1.0 / 3, 1.0 / 3};
  if (j == 1) return p1;
  if (j == 3) return p3;
  if (j == 4) return p4;
  return uniform;
}

template <typename Scalar>
Scalar categorical_signal(int z1, int z2) {
  Scalar v = 0;
  if (z1 == 2) v += 2;
  if (z1 == 3) v += -1;
  if (z2 == 2) v += Scalar(4.5);
  if (z2 == 3) v += 5;
  if (z1 == 2 && z2 == 2) v += Scalar(1.5);
  if (z1 == 2 && z2 == 3) v += Scalar(-3.5);
  if (z1 == 3 && z2 == 2) v += 2;
  if (z1 == 3 && z2 == 3) v += 4;
  return v;
}

// Main effects as 2 reference-coded dummy columns (levels 2 and 3, level 1
// reference), every pair as a 4-column interaction group in lexicographic
// order, so G = K + C(K,2).
template <typename Scalar>
std::pair<SimDataset<Scalar>, SimDataset<Scalar>> gen_categorical(Index n, Index K,
                                                                  std::uint64_t seed,
                                                                  Index n_test = 200) {
  if (K < 3) throw KTooSmall("need at least 3 categorical predictors");
  if (n < 2) throw InvalidArgument("need n >= 2");
  Rng rng(seed);
  const Index G = K + K * (K - 1) / 2;
  const Index p = 2 * K + 4 * (K * (K - 1) / 2);

  const auto draw = [&](Index rows) {
    Matrix<Scalar> z(rows, K);
    for (Index i = 0; i < rows; ++i) {
      for (Index j = 1; j <= K; ++j) {
        z(i, j - 1) = Scalar(rng.categorical(categorical_probs(j)) + 1);
      }
    }
    return z;
  };
  const auto expand = [&](const Matrix<Scalar>& z) {
    Matrix<Scalar> X = Matrix<Scalar>::Zero(z.rows(), p);
    for (Index i = 0; i < z.rows(); ++i) {
      for (Index j = 0; j < K; ++j) {
        X(i, 2 * j) = z(i, j) == 2 ? 1 : 0;
        X(i, 2 * j + 1) = z(i, j) == 3 ? 1 : 0;
      }
      Index col = 2 * K;
      for (Index a = 0; a < K; ++a) {
        for (Index b = a + 1; b < K; ++b) {
          for (int la = 2; la <= 3; ++la) {
            for (int lb = 2; lb <= 3; ++lb) {
              X(i, col++) = (z(i, a) == Scalar(la) && z(i, b) == Scalar(lb)) ? 1 : 0;
            }
          }
        }
      }
    }
    return X;
  };
  const auto make = [&](const Matrix<Scalar>& z) {
    SimDataset<Scalar> ds;
    ds.raw_covariates = z;
    ds.signal.resize(z.rows());
    for (Index i = 0; i < z.rows(); ++i) {
      ds.signal[i] = categorical_signal<Scalar>(static_cast<int>(z(i, 0)), static_cast<int>(z(i, 1)));
    }
    ds.y_raw = ds.signal;
    for (Index i = 0; i < z.rows(); ++i) ds.y_raw[i] += Scalar(rng.normal());
    return ds;
  };

  const Matrix<Scalar> z_train = draw(n);
  SimDataset<Scalar> train = make(z_train);
  const Matrix<Scalar> z_test = draw(n_test);
  SimDataset<Scalar> test = make(z_test);

  std::vector<Index> sizes(static_cast<std::size_t>(K), 2);
  sizes.insert(sizes.end(), static_cast<std::size_t>(K * (K - 1) / 2), 4);
  train.design = build_grouped_design(expand(z_train), sizes);
  test.design = build_grouped_design(expand(z_test), sizes);

  SimTruth<Scalar> truth;
  truth.scenario = Scenario::Categorical;
  truth.active_groups = {0, 1, K};  // main 1, main 2, interaction (1,2)
  truth.beta0 = Vector<Scalar>::Zero(p);
  truth.beta0[0] = 2;
  truth.beta0[1] = -1;
  truth.beta0[2] = Scalar(4.5);
  truth.beta0[3] = 5;
  truth.beta0.segment(2 * K, 4) << Scalar(1.5), Scalar(-3.5), 2, 4;
  train.truth = truth;
  test.truth = std::move(truth);
  train.seed = test.seed = seed;
  (void)G;
  return {std::move(train), std::move(test)};
}

// --- varying-coefficient model on irregular time grids ---

template <typename Scalar>
Scalar vc_true_coefficient(Index g, Scalar t) {
  const Scalar pi = Scalar(3.1415926535897932384626433832795);
  switch (g) {
    case 0: return 10 * std::sin(pi * t / 15);
    case 1: return Scalar(-0.6) * t + 6;
    case 2: return -1 + 2 * std::sin(pi * (t - 25) / 8);
    case 3: return 1 + 2 * std::cos(pi * (t - 25) / 15);
    case 4: return 2 + 10 / (1 + std::exp(10 - t));
    case 5: return -5;
    default: return 0;
  }
}

struct VcOptions {
  Index d = 8;          // B-spline dimension per coefficient function
  double lo = 0.0;      // basis domain covering the perturbed times
  double hi = 20.0;
};

template <typename Scalar>
SimDataset<Scalar> gen_varying_coeff_one(Index n, Index G, Rng& rng, const VcOptions& opts) {
  std::vector<VcObservation<Scalar>> obs;
  std::vector<Scalar> signal, y;
  for (Index i = 0; i < n; ++i) {
    // each of the 20 nominal time points is skipped with probability 0.6;
    // an all-skipped subject is redrawn
    std::vector<bool> keep(20);
    bool any = false;
    while (!any) {
      for (int t = 0; t < 20; ++t) {
        keep[static_cast<std::size_t>(t)] = rng.uniform01() < 0.4;
        any = any || keep[static_cast<std::size_t>(t)];
      }
    }
    std::vector<Scalar> times;
    for (int t = 0; t < 20; ++t) {
      if (keep[static_cast<std::size_t>(t)]) {
        times.push_back(Scalar(t + 1) + Scalar(rng.uniform(-0.5, 0.5)));
      }
    }
    const Index m = static_cast<Index>(times.size());
    Matrix<Scalar> x(m, G);
    for (Index j = 0; j < m; ++j) {
      const Scalar t = times[static_cast<std::size_t>(j)];
      x(j, 0) = Scalar(rng.uniform(t / 10, 2 + t / 10));
    }
    for (Index j = 0; j < m; ++j) {
      const Scalar sd = std::sqrt((1 + x(j, 0)) / (2 + x(j, 0)));
      for (Index k = 1; k < 5; ++k) x(j, k) = Scalar(rng.normal()) * sd;
    }
    for (Index j = 0; j < m; ++j) {
      const Scalar t = times[static_cast<std::size_t>(j)];
      x(j, 5) = Scalar(1.5) * std::exp(t / 40) + Scalar(rng.normal());
    }
    // stationary tail covariates with corr(t,s) = 0.5^|t-s| via an order-1
    // autoregression along the subject's observed grid
    for (Index k = 6; k < G; ++k) {
      Scalar prev = Scalar(rng.normal());
      x(0, k) = prev;
      for (Index j = 1; j < m; ++j) {
        const Scalar rho = std::pow(Scalar(0.5), times[static_cast<std::size_t>(j)] -
                                                     times[static_cast<std::size_t>(j - 1)]);
        prev = rho * prev + std::sqrt(1 - rho * rho) * Scalar(rng.normal());
        x(j, k) = prev;
      }
    }
    for (Index j = 0; j < m; ++j) {
      const Scalar t = times[static_cast<std::size_t>(j)];
      Scalar s = 0;
      for (Index g = 0; g < std::min<Index>(6, G); ++g) s += x(j, g) * vc_true_coefficient(g, t);
      signal.push_back(s);
      y.push_back(s + Scalar(rng.normal()));
      VcObservation<Scalar> o;
      o.subject = i;
      o.t = t;
      o.x = x.row(j).transpose();
      obs.push_back(std::move(o));
    }
  }

  SimDataset<Scalar> ds;
  const Index N = static_cast<Index>(obs.size());
  ds.signal = Eigen::Map<const Vector<Scalar>>(signal.data(), N);
  ds.y_raw = Eigen::Map<const Vector<Scalar>>(y.data(), N);
  ds.raw_covariates.resize(N, G + 2);
  for (Index r = 0; r < N; ++r) {
    ds.raw_covariates(r, 0) = Scalar(obs[static_cast<std::size_t>(r)].subject);
    ds.raw_covariates(r, 1) = obs[static_cast<std::size_t>(r)].t;
    ds.raw_covariates.row(r).segment(2, G) = obs[static_cast<std::size_t>(r)].x.transpose();
  }
  auto expanded =
      expand_varying_coefficient_design(obs, G, opts.d, Scalar(opts.lo), Scalar(opts.hi));
  ds.design = std::move(expanded.design);
  ds.bases = {std::move(expanded.basis)};
  ds.truth.scenario = Scenario::VaryingCoefficient;
  ds.truth.active_groups = {0, 1, 2, 3, 4, 5};
  return ds;
}

template <typename Scalar>
std::pair<SimDataset<Scalar>, SimDataset<Scalar>> gen_varying_coeff(Index n, Index G,
                                                                    std::uint64_t seed,
                                                                    const VcOptions& opts = {}) {
  if (G < 6) throw GTooSmall("the varying-coefficient truth uses groups 1..6");
  if (n < 1) throw InvalidArgument("need n >= 1");
  Rng rng(seed);
  SimDataset<Scalar> train = gen_varying_coeff_one<Scalar>(n, G, rng, opts);
  SimDataset<Scalar> test = gen_varying_coeff_one<Scalar>(n, G, rng, opts);
  train.seed = test.seed = seed;
  return {std::move(train), std::move(test)};
}

}  // namespace vgpencr
