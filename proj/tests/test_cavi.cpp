#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "vgpencr/cavi.hpp"

using namespace vgpencr;

TEST_SUITE_BEGIN("cavi");

namespace {

CenteredDataset<double> as_dataset(const oracle::RandomInstance& inst) {
  CenteredDataset<double> data;
  data.design = build_grouped_design(Matrix<double>(inst.X), inst.sizes);
  data.y = inst.y;
  data.stats.y_bar = 0;
  data.stats.x_bar = Vector<double>::Zero(inst.X.cols());
  return data;
}

CenteredDataset<double> small_dataset(const Matrix<double>& X, const Vector<double>& y,
                                      const std::vector<Index>& sizes) {
  CenteredDataset<double> data;
  data.design = build_grouped_design(Matrix<double>(X), sizes);
  data.y = y;
  data.stats.y_bar = 0;
  data.stats.x_bar = Vector<double>::Zero(X.cols());
  return data;
}

// reconstruct the dense covariance from the stored precision factor
Matrix<double> dense_sigma(const CaviState<double>& st) {
  const Index p = st.prec_factor.rows();
  Matrix<double> W = Matrix<double>::Identity(p, p);
  st.prec_factor.triangularView<Eigen::Lower>().solveInPlace(W);
  return W.transpose() * W;
}

void check_state_matches_flat(const CaviState<double>& st, const oracle::FlatState& fl,
                              double tol = 1e-10) {
  const auto rel = [](double a, double b) { return std::abs(a - b) / (1.0 + std::abs(b)); };
  for (Index g = 0; g < fl.m_b.size(); ++g) {
    CHECK(rel(st.m_b[g], fl.m_b[g]) <= tol);
    CHECK(rel(st.s_c[g], fl.s_c[g]) <= tol);
    CHECK(rel(st.m_c[g], fl.m_c[g]) <= tol);
    CHECK(rel(st.s_b[g], fl.s_b[g]) <= tol);
  }
  CHECK(rel(st.m_inv_sigma2, fl.m_inv_sigma2) <= tol);
  CHECK(rel(st.s_sigma2, fl.s_sigma2) <= tol);
  CHECK((st.mu_beta - fl.mu).lpNorm<Eigen::Infinity>() <= tol * (1.0 + fl.mu.lpNorm<Eigen::Infinity>()));
  const Matrix<double> S = dense_sigma(st);
  CHECK((S - fl.Sigma).lpNorm<Eigen::Infinity>() <=
        tol * (1.0 + fl.Sigma.lpNorm<Eigen::Infinity>()));
}

}  // namespace

TEST_CASE("init: hand-solved 1-d normal equation and the variance fallback") {
  Matrix<double> X(3, 1);
  X << -1, 0, 1;
  Vector<double> y(3);
  y << -1, 0, 1;
  const auto data = small_dataset(X, y, {1});
  const auto st = init_cavi(data, HyperParams<double>{0.01, 0.01, 1.0});
  // ridge: mu = X'y / (X'X + eps), eps = 1e-6 * tr(X'X) / p
  const double expected_mu = 2.0 / (2.0 + 1e-6 * 2.0);
  CHECK(st.mu_beta[0] == doctest::Approx(expected_mu).epsilon(1e-12));
  // interpolating fit: residual is ~0, so m falls back to 1/var(y) = 1
  CHECK(st.m_inv_sigma2 == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(st.cycle == 0);
  CHECK(st.elbo_trace.empty());
}

TEST_CASE("init: m_b starts at one; zero response gives a zero mean") {
  const auto inst = oracle::random_instance(42, 20, 40, 2, 5, 3);
  auto data = as_dataset(inst);
  auto st = init_cavi(data, HyperParams<double>{0.01, 0.01, 0.5});
  CHECK(st.m_b == Vector<double>::Ones(st.m_b.size()));

  data.y.setZero();
  st = init_cavi(data, HyperParams<double>{0.01, 0.01, 0.5});
  CHECK(st.mu_beta.isZero(0.0));
}

TEST_CASE("cycle: scalar instance against the hand formula") {
  // p=1, one group, X=(-1,1)', y=(-1,1)', tau=1, r=s=0.01, pinned start
  Matrix<double> X(2, 1);
  X << -1, 1;
  Vector<double> y(2);
  y << -1, 1;
  const auto data = small_dataset(X, y, {1});
  const HyperParams<double> hyper{0.01, 0.01, 1.0};

  CaviState<double> st;
  st.mu_beta = Vector<double>::Ones(1);
  st.m_b = Vector<double>::Ones(1);
  st.m_inv_sigma2 = 1.0;
  // precision = m * (X'X + m_b/tau) = 1 * (2 + 1) = 3
  st.prec_factor = Matrix<double>::Constant(1, 1, std::sqrt(3.0));
  st.sigma_diag = Vector<double>::Constant(1, 1.0 / 3.0);
  st.s_sigma2 = (hyper.r + (2.0 + 1.0) / 2.0) / st.m_inv_sigma2;
  st.s_c = Vector<double>::Constant(1, 2.0);
  st.m_c = Vector<double>::Constant(1, 0.5);
  st.s_b = Vector<double>::Constant(1, 0.5 + (1.0 + 1.0 / 3.0) / 2.0);

  const auto next = cavi_cycle(st, data, hyper);
  // step (1): m_b = 2 / { 2/(1+1) + (mu^2 + Sigma) * m / tau } = 2 / (1 + 4/3)
  const double expected_m_b = 2.0 / (1.0 + (1.0 + 1.0 / 3.0));
  CHECK(next.m_b[0] == doctest::Approx(expected_m_b).epsilon(1e-14));
  CHECK(next.s_c[0] == doctest::Approx(1.0 + next.m_b[0]).epsilon(1e-15));
  CHECK(next.m_c[0] == doctest::Approx(1.0 / next.s_c[0]).epsilon(1e-15));
}

TEST_CASE("cycle: two cycles match the straight-line transcription") {
  for (std::uint64_t seed : {1u, 2u, 3u, 4u, 5u}) {
    const auto inst = oracle::random_instance(seed, 15, 60, 2, 6, 4);
    const auto data = as_dataset(inst);
    const HyperParams<double> hyper{0.01, 0.01, 0.3};

    oracle::FlatProblem fl{inst.X, inst.y, inst.sizes, hyper.tau, hyper.r, hyper.s};
    oracle::FlatState fs = oracle::flat_init(fl);
    CaviState<double> st = init_cavi(data, hyper);
    check_state_matches_flat(st, fs);

    for (int cycle = 0; cycle < 2; ++cycle) {
      fs = oracle::flat_cycle(fl, fs);
      st = cavi_cycle(st, data, hyper);
      check_state_matches_flat(st, fs);
      const double rel =
          std::abs(st.elbo_trace.back() - oracle::flat_elbo(fl, fs)) / (1.0 + std::abs(st.elbo_trace.back()));
      CHECK(rel <= 1e-10);
    }
  }
}

TEST_CASE("cycle: M_tau block structure for sizes [2,3]") {
  const auto inst = oracle::random_instance(99, 30, 30, 2, 2, 1);
  Matrix<double> X(30, 5);
  {
    Rng rng(1234);
    for (Index i = 0; i < 30; ++i)
      for (Index j = 0; j < 5; ++j) X(i, j) = rng.normal();
  }
  Vector<double> y = X * Vector<double>::Ones(5);
  y.array() -= y.mean();
  X.rowwise() -= X.colwise().mean();
  const auto data = small_dataset(X, y, {2, 3});
  const HyperParams<double> hyper{0.01, 0.01, 0.7};
  const auto st0 = init_cavi(data, hyper);
  const auto st = cavi_cycle(st0, data, hyper);

  // L L^T must equal m * (X'X + diag(m_b1, m_b1, m_b2, m_b2, m_b2) / tau)
  Matrix<double> expected = X.transpose() * X;
  for (Index j = 0; j < 2; ++j) expected(j, j) += st.m_b[0] / hyper.tau;
  for (Index j = 2; j < 5; ++j) expected(j, j) += st.m_b[1] / hyper.tau;
  expected *= st.m_inv_sigma2;
  const Matrix<double> rebuilt =
      st.prec_factor * st.prec_factor.transpose();
  CHECK((rebuilt - expected).lpNorm<Eigen::Infinity>() <=
        1e-12 * expected.lpNorm<Eigen::Infinity>());
}

TEST_CASE("elbo: log|Sigma| through the factor agrees with a direct 3x3 determinant") {
  const auto inst = oracle::random_instance(7, 25, 25, 3, 3, 1);
  const auto data = as_dataset(inst);
  REQUIRE(data.design.spec.p == 3);
  const HyperParams<double> hyper{0.01, 0.01, 1.0};
  const auto st = cavi_cycle(init_cavi(data, hyper), data, hyper);
  const double logdet_factor = -2.0 * st.prec_factor.diagonal().array().log().sum();
  const double logdet_direct = std::log(dense_sigma(st).determinant());
  CHECK(logdet_factor == doctest::Approx(logdet_direct).epsilon(1e-10));
}

TEST_CASE("elbo trace is nondecreasing on 100 seeded instances") {
  for (std::uint64_t seed = 100; seed < 200; ++seed) {
    const auto inst = oracle::random_instance(seed, 20, 60, 2, 8, 4);
    const auto data = as_dataset(inst);
    const HyperParams<double> hyper{0.01, 0.01, std::pow(10.0, (double(seed % 5) - 3.0))};
    const auto fit = run_cavi(data, hyper, 2, 1e-5, 40);
    const auto& tr = fit.state.elbo_trace;
    for (std::size_t k = 1; k < tr.size(); ++k) {
      CHECK(tr[k] >= tr[k - 1] - 1e-8 * std::abs(tr[k - 1]));
    }
  }
}

TEST_CASE("mu solves its own normal equations") {
  const auto inst = oracle::random_instance(55, 40, 80, 3, 6, 3);
  const auto data = as_dataset(inst);
  const HyperParams<double> hyper{0.01, 0.01, 0.2};
  const auto cache = detail::make_cavi_cache(data);
  auto prev = init_cavi(data, hyper, cache);
  for (int t = 0; t < 3; ++t) {
    const auto next = cavi_cycle(prev, data, hyper, cache);
    // mu_new was computed through the entry state's M_tau
    Matrix<double> A = cache.XtX;
    const auto& spec = data.design.spec;
    for (Index g = 0; g < spec.G; ++g) {
      A.diagonal().segment(spec.offsets[g], spec.sizes[g]).array() += prev.m_b[g] / hyper.tau;
    }
    const double rel = (A * next.mu_beta - cache.Xty).norm() / cache.Xty.norm();
    CHECK(rel <= 1e-10);
    prev = next;
  }
}

TEST_CASE("zero response pins the mean at zero through every cycle") {
  auto inst = oracle::random_instance(66, 25, 40, 2, 4, 3);
  inst.y.setZero();
  const auto data = as_dataset(inst);
  const HyperParams<double> hyper{0.01, 0.01, 1.0};
  auto st = init_cavi(data, hyper);
  for (int t = 0; t < 3; ++t) {
    st = cavi_cycle(st, data, hyper);
    CHECK(st.mu_beta.isZero(0.0));
  }
}

TEST_CASE("scale parameters stay strictly positive") {
  for (std::uint64_t seed : {10u, 20u, 30u}) {
    const auto inst = oracle::random_instance(seed, 20, 50, 2, 6, 4);
    const auto data = as_dataset(inst);
    const HyperParams<double> hyper{0.01, 0.01, 0.05};
    auto st = init_cavi(data, hyper);
    for (int t = 0; t < 5; ++t) {
      st = cavi_cycle(st, data, hyper);
      CHECK(st.m_b.minCoeff() > 0);
      CHECK(st.s_b.minCoeff() > 0);
      CHECK(st.s_c.minCoeff() > 0);
      CHECK(st.m_c.minCoeff() > 0);
      CHECK(st.s_sigma2 > 0);
      CHECK(st.m_inv_sigma2 > 0);
      CHECK(st.prec_factor.diagonal().minCoeff() > 0);
    }
  }
}

TEST_CASE("run_cavi: convergence control") {
  const auto inst = oracle::random_instance(77, 40, 60, 3, 5, 3);
  const auto data = as_dataset(inst);
  const HyperParams<double> hyper{0.01, 0.01, 0.5};
  CHECK_THROWS_AS(run_cavi(data, hyper, 1), InvalidArgument);

  const auto fit = run_cavi(data, hyper);
  CHECK(fit.cycles_run >= 2);
  CHECK(fit.converged);
  CHECK(fit.state.elbo_trace.size() == static_cast<std::size_t>(fit.cycles_run));

  // a starved cycle budget is a warning state, not an error
  const auto starved = run_cavi(data, hyper, 2, 1e-13, 3);
  CHECK_FALSE(starved.converged);
  CHECK(starved.cycles_run == 3);
}

TEST_CASE("run_cavi: fixed point has settled parameters") {
  const auto inst = oracle::random_instance(88, 50, 80, 2, 4, 3);
  const auto data = as_dataset(inst);
  const HyperParams<double> hyper{0.01, 0.01, 0.5};
  const double rel_tol = 1e-8;
  const auto fit = run_cavi(data, hyper, 2, rel_tol, 2000);
  REQUIRE(fit.converged);
  const auto again = cavi_cycle(fit.state, data, hyper);
  const auto relvec = [](const Vector<double>& a, const Vector<double>& b) {
    return (a - b).lpNorm<Eigen::Infinity>() / (1.0 + b.lpNorm<Eigen::Infinity>());
  };
  CHECK(relvec(again.mu_beta, fit.state.mu_beta) < 10 * rel_tol);
  CHECK(relvec(again.m_b, fit.state.m_b) < 10 * rel_tol);
  CHECK(relvec(again.s_b, fit.state.s_b) < 10 * rel_tol);
  CHECK(relvec(again.s_c, fit.state.s_c) < 10 * rel_tol);
  CHECK(std::abs(again.m_inv_sigma2 - fit.state.m_inv_sigma2) /
            (1.0 + fit.state.m_inv_sigma2) < 10 * rel_tol);
  CHECK(std::abs(again.s_sigma2 - fit.state.s_sigma2) / (1.0 + fit.state.s_sigma2) < 10 * rel_tol);
}

TEST_CASE("pure-noise data is shrunk hard") {
  Rng rng(2024);
  const Index n = 60, G = 6;
  Matrix<double> X(n, 2 * G);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < 2 * G; ++j) X(i, j) = rng.normal();
  Vector<double> y(n);
  for (Index i = 0; i < n; ++i) y[i] = rng.normal();
  y.array() -= y.mean();
  X.rowwise() -= X.colwise().mean();
  const auto data = small_dataset(X, y, std::vector<Index>(G, 2));
  const auto fit = run_cavi(data, HyperParams<double>{0.01, 0.01, 0.1});
  // signal-free fit: the local shrinkage means grow past their start value
  // and the fitted mean explains little of the response
  CHECK(fit.state.m_b.minCoeff() > 1.0);
  const double explained = (data.design.X * fit.state.mu_beta).squaredNorm() / y.squaredNorm();
  CHECK(explained < 0.5);
}

TEST_CASE("select_tau basics") {
  const auto inst = oracle::random_instance(123, 30, 50, 2, 4, 3);
  const auto data = as_dataset(inst);
  const HyperParams<double> base{0.01, 0.01, 1.0};

  const auto single = select_tau(data, base, {0.25});
  CHECK(single.tau == 0.25);
  CHECK(single.elbos.size() == 1);

  // duplicated grid values have identical objective; the smaller (first) wins
  const auto dup = select_tau(data, base, {0.5, 0.5});
  CHECK(dup.tau == 0.5);
  CHECK(dup.elbos[0] == dup.elbos[1]);

  CHECK_THROWS_AS(select_tau(data, base, {}), EmptyInput);
  CHECK_THROWS_AS(select_tau(data, base, {-1.0}), InvalidArgument);

  const auto grid = select_tau(data, base, {1e-3, 1e-2, 1e-1, 1.0, 10.0});
  double best = -std::numeric_limits<double>::infinity();
  for (double e : grid.elbos) best = std::max(best, e);
  bool found = false;
  for (std::size_t k = 0; k < grid.elbos.size(); ++k) {
    if (grid.elbos[k] == best) found = true;
  }
  CHECK(found);
}

TEST_SUITE_END();
