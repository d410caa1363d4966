#pragma once

#include <chrono>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "vgpencr/cavi.hpp"
#include "vgpencr/grouping.hpp"
#include "vgpencr/metrics.hpp"
#include "vgpencr/parallel.hpp"
#include "vgpencr/pencr.hpp"
#include "vgpencr/predict.hpp"
#include "vgpencr/sim.hpp"
#include "vgpencr/types.hpp"

namespace vgpencr {

// One full fitting pipeline: center, pick tau on the ELBO grid, fit, choose
// lambda by cross-validation (or accept a fixed one), sparsify.
struct PipelineOptions {
  HyperParams<double> hyper_base{0.01, 0.01, 1.0};
  std::vector<double> tau_grid{1e-3, 1e-2, 1e-1, 1.0, 10.0};
  std::optional<double> fixed_tau;
  std::optional<double> fixed_lambda;
  CvOptions cv;
  SparsifyMode mode = SparsifyMode::Grouped;
  Index min_cycles = 2;
  double rel_tol = 1e-4;
  Index max_cycles = 500;
};

struct PipelineResult {
  CaviFit<double> fit;
  SparseEstimate<double> estimate;
  double tau = 0;
  double lambda = 0;
  std::optional<CvResult<double>> cv;
};

inline PipelineResult run_pipeline(const Vector<double>& y_raw, const GroupedDesign<double>& design,
                                   const PipelineOptions& opts) {
  PipelineResult out;
  const auto centered = center(y_raw, design);
  HyperParams<double> hyper = opts.hyper_base;
  if (opts.fixed_tau) {
    hyper.tau = *opts.fixed_tau;
  } else {
    hyper.tau = select_tau(centered, opts.hyper_base, opts.tau_grid).tau;
  }
  out.tau = hyper.tau;
  out.fit = run_cavi(centered, hyper, opts.min_cycles, opts.rel_tol, opts.max_cycles);
  if (opts.fixed_lambda) {
    out.lambda = *opts.fixed_lambda;
  } else {
    out.cv = cross_validate_lambda(out.fit, y_raw, design, hyper, opts.cv, opts.mode);
    out.lambda = out.cv->chosen_lambda;
  }
  out.estimate = opts.mode == SparsifyMode::Grouped
                     ? sparsify(out.fit, out.lambda, ScaleMode::SecondMoment, {},
                                opts.cv.tol, opts.cv.max_iter)
                     : sparsify_nongrouped(out.fit, out.lambda, {}, opts.cv.tol, opts.cv.max_iter);
  return out;
}

// --- replication harness over the simulation scenarios ---

struct BenchConfig {
  Scenario scenario = Scenario::Gam;
  Index n = 200;
  Index size_param = 50;  // G for gam/vc, K for categorical
  Index d = 8;
  Index reps = 20;
  std::uint64_t seed = 0;
  Index threads = 1;
  bool run_grouped = true;
  bool run_nongrouped = true;
  PipelineOptions pipeline;  // mode is overridden per method
};

struct RepResult {
  Index rep = 0;
  std::uint64_t seed = 0;
  std::string method;
  bool ok = false;
  std::string error;
  double tau = 0, lambda = 0;
  std::optional<double> youden_j, mcc_value;
  double mspe_value = 0;
  std::vector<double> mise_active;  // per true group, varying-coefficient runs only
  std::optional<double> mise_zero;
  double runtime_seconds = 0;
};

namespace detail {

inline RepResult bench_one(const BenchConfig& cfg, Index rep, SparsifyMode mode,
                           const SimDataset<double>& train, const SimDataset<double>& test) {
  RepResult row;
  row.rep = rep;
  row.seed = cfg.seed + static_cast<std::uint64_t>(rep);
  row.method = mode == SparsifyMode::Grouped ? "VGPenCR" : "VPenCR";
  PipelineOptions opts = cfg.pipeline;
  opts.mode = mode;
  opts.cv.seed = mix_seed(row.seed);

  const auto t0 = std::chrono::steady_clock::now();
  const auto result = run_pipeline(train.y_raw, train.design, opts);
  row.runtime_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  row.tau = result.tau;
  row.lambda = result.lambda;
  const Index G = train.design.spec.G;
  const auto counts = confusion(result.estimate.selected, train.truth.active_groups, G);
  row.youden_j = youden(counts);
  row.mcc_value = mcc(counts);

  const auto model = make_model(result.estimate.beta_tilde, result.fit.data.stats);
  row.mspe_value = mspe(predict_rows(model, test.design.X), test.y_raw);

  if (cfg.scenario == Scenario::VaryingCoefficient) {
    const auto& basis = train.bases.front();
    const Index d = basis.dim;
    const auto coef_fn = [&](Index g) {
      const Vector<double> gamma_g = result.estimate.beta_tilde.segment(g * d, d);
      return [&basis, gamma_g](double t) { return evaluate_spline(basis, gamma_g, t); };
    };
    for (Index g = 0; g < 6; ++g) {
      row.mise_active.push_back(mise<double>(
          coef_fn(g), [g](double t) { return vc_true_coefficient<double>(g, t); }));
    }
    double zero_acc = 0;
    for (Index g = 6; g < G; ++g) {
      zero_acc += mise<double>(coef_fn(g), [](double) { return 0.0; });
    }
    row.mise_zero = G > 6 ? zero_acc / double(G - 6) : 0.0;
  }
  row.ok = true;
  return row;
}

}  // namespace detail

inline std::pair<SimDataset<double>, SimDataset<double>> generate_scenario(const BenchConfig& cfg,
                                                                           std::uint64_t seed) {
  switch (cfg.scenario) {
    case Scenario::Gam: {
      GamOptions o;
      return gen_gam<double>(cfg.n, cfg.size_param, seed, o);
    }
    case Scenario::Categorical:
      return gen_categorical<double>(cfg.n, cfg.size_param, seed);
    case Scenario::VaryingCoefficient: {
      VcOptions o;
      o.d = cfg.d;
      return gen_varying_coeff<double>(cfg.n, cfg.size_param, seed, o);
    }
  }
  throw InvalidArgument("unknown scenario");
}

// Replications run in parallel over independent seed streams; rows come back
// in deterministic (rep, method) order regardless of the thread count.
inline std::vector<RepResult> run_bench(const BenchConfig& cfg) {
  std::vector<SparsifyMode> modes;
  if (cfg.run_grouped) modes.push_back(SparsifyMode::Grouped);
  if (cfg.run_nongrouped) modes.push_back(SparsifyMode::NonGrouped);
  std::vector<RepResult> rows(static_cast<std::size_t>(cfg.reps) * modes.size());

  parallel_for(cfg.reps, cfg.threads, [&](Index rep) {
    const std::uint64_t seed = cfg.seed + static_cast<std::uint64_t>(rep);
    std::pair<SimDataset<double>, SimDataset<double>> data;
    try {
      data = generate_scenario(cfg, seed);
    } catch (const std::exception& e) {
      for (std::size_t m = 0; m < modes.size(); ++m) {
        auto& row = rows[static_cast<std::size_t>(rep) * modes.size() + m];
        row.rep = rep;
        row.seed = seed;
        row.method = modes[m] == SparsifyMode::Grouped ? "VGPenCR" : "VPenCR";
        row.error = e.what();
      }
      return;
    }
    for (std::size_t m = 0; m < modes.size(); ++m) {
      auto& row = rows[static_cast<std::size_t>(rep) * modes.size() + m];
      try {
        row = detail::bench_one(cfg, rep, modes[m], data.first, data.second);
      } catch (const std::exception& e) {
        row.rep = rep;
        row.seed = seed;
        row.method = modes[m] == SparsifyMode::Grouped ? "VGPenCR" : "VPenCR";
        row.ok = false;
        row.error = e.what();
      }
    }
  });
  return rows;
}

}  // namespace vgpencr
