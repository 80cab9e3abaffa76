/* Copyright 2026 The xcoding Authors

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#include "xcoding/celbo.hpp"

#include "xcoding/error.hpp"
#include "xcoding/optim.hpp"
#include "xcoding/textfmt.hpp"

#include <algorithm>
#include <cmath>
#include <optional>

namespace xcoding {

std::string to_string(OptimizerKind kind) { return kind == OptimizerKind::kAdam ? "adam" : "lbfgs"; }

OptimizerKind parse_optimizer(const std::string& name) {
  if (name == "adam") return OptimizerKind::kAdam;
  if (name == "lbfgs") return OptimizerKind::kLbfgs;
  throw ConfigError("unknown optimizer '" + name + "'");
}

void CelboConfig::validate() const {
  if (mc_samples < 1) throw ConfigError("mc_samples must be at least 1");
  if (restarts < 1) throw ConfigError("restarts must be at least 1");
  if (max_iters < 0) throw ConfigError("max_iters must be non-negative");
  if (lbfgs_batch < 1 || final_batch < 1) throw ConfigError("batch sizes must be positive");
  if (flow_depth < 1) throw ConfigError("flow depth must be at least 1");
}

double entropy_base(int dim) {
  if (dim < 1) throw ConfigError("entropy_base: dimension must be positive");
  return 0.5 * dim * (1.0 + kLog2Pi);
}

namespace {

struct BatchEval {
  CelboEstimate estimate;
  std::vector<Eigen::Index> kept;  // eps columns that contributed
  Matrix z;
  Vector terms;
  Matrix grad_z;
};

BatchEval evaluate_batch(const TargetDensity& target, const XCoder& xc, const Matrix& eps, bool with_grad) {
  if (xc.dim() != target.dim()) throw ConfigError("cross-coder and target latent dimensions differ");
  if (eps.rows() != xc.dim() || eps.cols() < 1) throw ConfigError("eps batch has the wrong shape");
  BatchEval out;
  out.z.resize(xc.dim(), eps.cols());
  std::vector<double> logdets;
  const bool affine = xc.kind() == XCoderKind::kGvi;
  if (affine) {
    // One affine map for the whole batch; the log-det is shared.
    const LogAbsDet det = lu_logabsdet(xc.gvi().weight);
    if (det.singular() || !std::isfinite(det.logabsdet)) {
      throw NumericalError("cross-coder Jacobian singular on " + std::to_string(eps.cols()) + " of " +
                           std::to_string(eps.cols()) + " samples");
    }
    out.z = xc.gvi().weight * eps;
    out.z.colwise() += xc.gvi().bias;
    if (!out.z.allFinite()) throw NumericalError("non-finite GVI output");
    out.kept.resize(static_cast<std::size_t>(eps.cols()));
    for (Eigen::Index j = 0; j < eps.cols(); ++j) out.kept[static_cast<std::size_t>(j)] = j;
    logdets.assign(out.kept.size(), det.logabsdet);
    if (det.sign < 0) out.estimate.reversed = static_cast<int>(eps.cols());
  }
  for (Eigen::Index j = 0; !affine && j < eps.cols(); ++j) {
    XForward fwd;
    try {
      fwd = xcoder_apply(xc, eps.col(j));
    } catch (const NumericalError&) {
      fwd.singular = true;
    }
    if (fwd.singular || !std::isfinite(fwd.logdet) || !fwd.z.allFinite()) {
      ++out.estimate.singular;
      continue;
    }
    if (fwd.orientation < 0) ++out.estimate.reversed;
    out.z.col(static_cast<Eigen::Index>(out.kept.size())) = fwd.z;
    out.kept.push_back(j);
    logdets.push_back(fwd.logdet);
  }
  if (static_cast<double>(out.estimate.singular) > kMaxSingularFraction * static_cast<double>(eps.cols())) {
    throw NumericalError("cross-coder Jacobian singular on " + std::to_string(out.estimate.singular) + " of " +
                         std::to_string(eps.cols()) + " samples");
  }
  const auto n = static_cast<Eigen::Index>(out.kept.size());
  out.z.conservativeResize(Eigen::NoChange, n);
  out.terms = target.log_density_batch(out.z, with_grad ? &out.grad_z : nullptr);
  // -log phi(eps) - H has mean zero; adding it per sample removes the base noise.
  const double half_dim = 0.5 * xc.dim();
  for (Eigen::Index j = 0; j < n; ++j) {
    out.terms[j] += logdets[static_cast<std::size_t>(j)] + 0.5 * eps.col(out.kept[static_cast<std::size_t>(j)]).squaredNorm() - half_dim;
  }
  if (!out.terms.allFinite()) throw NumericalError("non-finite C-ELBO term");

  const double mean = out.terms.mean();
  const double var = n > 1 ? (out.terms.array() - mean).square().sum() / static_cast<double>(n - 1) : 0.0;
  out.estimate.value = mean + entropy_base(xc.dim());
  out.estimate.std_error = std::sqrt(var / static_cast<double>(n));
  out.estimate.n = static_cast<int>(n);
  out.estimate.bound_valid = xc.bound_valid();
  return out;
}

}  // namespace

CelboEstimate celbo_estimate(const TargetDensity& target, const XCoder& xc, const Matrix& eps) {
  return evaluate_batch(target, xc, eps, false).estimate;
}

CelboEstimate celbo_estimate(const TargetDensity& target, const XCoder& xc, int mc_samples, Rng& rng) {
  if (mc_samples < 1) throw ConfigError("celbo_estimate: need at least one sample");
  return celbo_estimate(target, xc, standard_normal(rng, xc.dim(), mc_samples));
}

CelboEstimate celbo_estimate(const DecoderModel& model, const XCoder& xc, const EvidenceMask& ev,
                             int mc_samples, Rng& rng) {
  return celbo_estimate(posterior_target(model, ev), xc, mc_samples, rng);
}

Matrix moment_match(const Matrix& eps) {
  const auto n = static_cast<double>(eps.cols());
  if (eps.cols() <= eps.rows()) throw ConfigError("moment_match needs more columns than rows");
  const Matrix centered = eps.colwise() - eps.rowwise().mean();
  const Matrix cov = centered * centered.transpose() / n;
  const Eigen::LLT<Matrix> llt(cov);
  if (llt.info() != Eigen::Success) throw NumericalError("moment_match: sample covariance not positive definite");
  return llt.matrixL().solve(centered);
}

CelboGradient celbo_gradient(const TargetDensity& target, const XCoder& xc, const Matrix& eps) {
  BatchEval eval = evaluate_batch(target, xc, eps, true);
  CelboGradient out{eval.estimate, Vector::Zero(xc.num_params())};
  const double scale = 1.0 / static_cast<double>(eval.kept.size());
  if (xc.kind() == XCoderKind::kGvi) {
    const GviParams& p = xc.gvi();
    const Eigen::Index d = xc.dim();
    const Matrix gw = scale * eval.grad_z * eps.transpose() + Matrix(Eigen::PartialPivLU<Matrix>(p.weight).inverse().transpose());
    for (Eigen::Index i = 0; i < d; ++i)
      for (Eigen::Index j = 0; j < d; ++j) out.grad[i * d + j] = gw(i, j);
    out.grad.tail(d) = scale * eval.grad_z.rowwise().sum();
    return out;
  }
  for (std::size_t k = 0; k < eval.kept.size(); ++k) {
    const auto col = static_cast<Eigen::Index>(k);
    out.grad += xcoder_backprop(xc, eps.col(eval.kept[k]), scale * eval.grad_z.col(col), scale).params;
  }
  return out;
}

CelboGradient celbo_gradient(const DecoderModel& model, const XCoder& xc, const EvidenceMask& ev,
                             int mc_samples, Rng& rng) {
  return celbo_gradient(posterior_target(model, ev), xc, standard_normal(rng, xc.dim(), mc_samples));
}

namespace {

// True if the FCN Jacobian determinant is positive on every column of `eps`.
// Jacobian rows come from d batched reverse passes over small chunks.
bool fcn_orientation_kept(const FcnParams& p, const Matrix& eps) {
  constexpr Eigen::Index kChunk = 256;
  const int d = p.net.input_dim();
  std::vector<Matrix> rows(static_cast<std::size_t>(d));
  Matrix jac(d, d);
  for (Eigen::Index start = 0; start < eps.cols(); start += kChunk) {
    const Eigen::Index n = std::min(kChunk, eps.cols() - start);
    Tape tape;
    p.net.forward(eps.middleCols(start, n), &tape);
    for (int i = 0; i < d; ++i) {
      Matrix upstream = Matrix::Zero(d, n);
      upstream.row(i).setOnes();
      rows[static_cast<std::size_t>(i)] = p.net.backward(tape, upstream, false, nullptr);
    }
    for (Eigen::Index j = 0; j < n; ++j) {
      for (int i = 0; i < d; ++i) jac.row(i) = rows[static_cast<std::size_t>(i)].col(j).transpose();
      if (lu_logabsdet(jac).sign <= 0) return false;
    }
  }
  return true;
}

void run_lbfgs(const TargetDensity& target, XCoder& xc, const CelboConfig& cfg, const Matrix& batch,
               const Matrix& guard, RestartResult& out) {
  XCoder probe = xc;
  std::optional<CelboEstimate> last;
  Objective objective = [&](const Vector& x, Vector* grad) {
    probe.set_params(x);
    try {
      CelboGradient g = celbo_gradient(target, probe, batch);
      // Any dropped sample changes the objective's support; reject the point.
      if (g.estimate.singular > 0) return std::numeric_limits<double>::infinity();
      if (cfg.keep_orientation && g.estimate.reversed > 0) return std::numeric_limits<double>::infinity();
      if (cfg.keep_orientation && probe.kind() == XCoderKind::kFcn && !fcn_orientation_kept(probe.fcn(), guard)) {
        return std::numeric_limits<double>::infinity();
      }
      last = g.estimate;
      if (grad) *grad = -g.grad;
      return -g.estimate.value;
    } catch (const NumericalError&) {
      return std::numeric_limits<double>::infinity();
    }
  };
  LbfgsConfig lcfg;
  lcfg.max_iters = cfg.max_iters;
  lcfg.rel_tol = 1e-10;
  lcfg.window = 10;
  lcfg.window_tol = cfg.tol;
  const double start = objective(xc.params(), nullptr);
  if (!std::isfinite(start)) throw NumericalError("C-ELBO not finite at the initial cross-coder");
  out.trace.push_back({0, last->value, last->std_error});
  if (cfg.max_iters == 0) {
    out.stop_reason = "max_iters";
    return;
  }
  LbfgsResult res = lbfgs_minimize(
      objective, xc.params(), lcfg,
      [&](int iter, double) { out.trace.push_back({iter, last->value, last->std_error}); });
  xc.set_params(res.x);
  out.stop_reason = res.stop_reason;
}

void run_adam(const TargetDensity& target, XCoder& xc, const CelboConfig& cfg, Rng& rng, RestartResult& out) {
  Vector params = xc.params();
  Adam adam(params.size(), AdamConfig{cfg.learning_rate, 0.9, 0.999, 1e-8});
  constexpr int kWindow = 100;
  double window_sum = 0.0;
  double previous_window = -std::numeric_limits<double>::infinity();
  int skipped = 0;
  out.stop_reason = "max_iters";
  for (int iter = 0; iter < cfg.max_iters; ++iter) {
    const Matrix batch = standard_normal(rng, xc.dim(), cfg.mc_samples);
    CelboGradient g;
    try {
      g = celbo_gradient(target, xc, batch);
    } catch (const NumericalError&) {
      if (++skipped > cfg.max_iters / 2 + 10) throw NumericalError("adam: too many rejected steps");
      continue;
    }
    out.trace.push_back({iter, g.estimate.value, g.estimate.std_error});
    Vector next = params;
    adam.step(next, -g.grad);
    if (!next.allFinite()) throw NumericalError("adam: parameters diverged at iteration " + std::to_string(iter));
    params = std::move(next);
    xc.set_params(params);

    window_sum += g.estimate.value;
    if ((iter + 1) % kWindow == 0) {
      const double mean = window_sum / kWindow;
      window_sum = 0.0;
      if (cfg.tol > 0 && mean - previous_window < cfg.tol) {
        out.stop_reason = "tol";
        break;
      }
      previous_window = mean;
    }
  }
}

}  // namespace

FitReport optimize_xcoder(const TargetDensity& target, XCoderKind kind, const CelboConfig& cfg) {
  cfg.validate();
  const Rng root(cfg.seed);
  // Shared by every restart: the L-BFGS objective and the selection score.
  const Matrix batch = [&] {
    Rng r = root.derive("batch");
    const Matrix eps = standard_normal(r, target.dim(), cfg.lbfgs_batch);
    return cfg.moment_match ? moment_match(eps) : eps;
  }();
  // Denser probe set for the FCN orientation check; no decoder calls.
  const Matrix guard = [&] {
    Rng r = root.derive("guard");
    return kind == XCoderKind::kFcn ? standard_normal(r, target.dim(), kOrientationProbes) : Matrix();
  }();

  std::vector<RestartResult> results(static_cast<std::size_t>(cfg.restarts));
  std::vector<std::optional<XCoder>> fitted(static_cast<std::size_t>(cfg.restarts));
  std::string failures;
  for (int r = 0; r < cfg.restarts; ++r) {
    Rng rng = root.derive("restart").derive(static_cast<std::uint64_t>(r));
    Rng init_rng = rng.derive("init");
    XCoder xc = init_xcoder(kind, target.dim(), cfg.flow_depth, init_rng, cfg.fcn_hidden);
    auto& res = results[static_cast<std::size_t>(r)];
    try {
      if (cfg.optimizer == OptimizerKind::kLbfgs) {
        run_lbfgs(target, xc, cfg, batch, guard, res);
      } else {
        run_adam(target, xc, cfg, rng, res);
      }
      res.selection_celbo = celbo_estimate(target, xc, batch).value;
      fitted[static_cast<std::size_t>(r)] = std::move(xc);
    } catch (const NumericalError& e) {
      res.diverged = true;
      res.selection_celbo = -std::numeric_limits<double>::infinity();
      res.stop_reason = e.what();
      failures += " [restart " + std::to_string(r) + ": " + e.what() + "]";
    }
  }

  int best = -1;
  for (int r = 0; r < cfg.restarts; ++r) {
    const auto& res = results[static_cast<std::size_t>(r)];
    if (res.diverged) continue;
    if (best < 0 || res.selection_celbo > results[static_cast<std::size_t>(best)].selection_celbo) best = r;
  }
  if (best < 0) {
    std::string traces;
    for (const auto& res : results) traces += " trace_len=" + std::to_string(res.trace.size());
    throw NumericalError("all restarts diverged:" + failures + traces);
  }

  Rng report_rng = root.derive("report");
  XCoder chosen = std::move(*fitted[static_cast<std::size_t>(best)]);
  CelboEstimate final = celbo_estimate(target, chosen, cfg.final_batch, report_rng);
  FitReport report{std::move(chosen), final, results[static_cast<std::size_t>(best)].trace, best, std::move(results)};
  return report;
}

FitReport optimize_xcoder(const DecoderModel& model, const EvidenceMask& ev, XCoderKind kind,
                          const CelboConfig& cfg) {
  return optimize_xcoder(posterior_target(model, ev), kind, cfg);
}

std::string trace_csv(const std::vector<TracePoint>& trace) {
  std::string out = "iter,celbo,stderr\n";
  for (const auto& p : trace) {
    out += std::to_string(p.iter) + "," + textfmt::format_double(p.celbo) + "," +
           textfmt::format_double(p.std_error) + "\n";
  }
  return out;
}

Matrix decode_query(const DecoderModel& model, const Matrix& z, const EvidenceMask& ev, Rng& rng,
                    bool means_only) {
  Matrix t(model.output_dim(), z.cols());
  if (z.cols() == 0) return t;
  const Matrix params = decode_batch(model, z);
  for (Eigen::Index j = 0; j < z.cols(); ++j) {
    t.col(j) = sample_output(model, params.col(j), rng, means_only);
    for (std::size_t k = 0; k < ev.size(); ++k) t(ev.indices()[k], j) = ev.values()[k];
  }
  return t;
}

QuerySamples predict_query(const DecoderModel& model, const XCoder& xc, const EvidenceMask& ev, int n, Rng& rng,
                           bool means_only) {
  if (n < 0) throw ConfigError("predict_query: negative sample count");
  if (xc.dim() != model.latent_dim()) throw ConfigError("cross-coder and decoder latent dimensions differ");
  QuerySamples out;
  out.z.resize(xc.dim(), n);
  for (int j = 0; j < n; ++j) out.z.col(j) = xcoder_apply(xc, standard_normal(rng, xc.dim())).z;
  out.t = decode_query(model, out.z, ev, rng, means_only);
  return out;
}

}  // namespace xcoding
