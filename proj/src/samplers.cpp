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

#include "xcoding/samplers.hpp"

#include "xcoding/error.hpp"
#include "xcoding/textfmt.hpp"

#include <algorithm>
#include <cmath>

namespace xcoding {

void HmcConfig::validate() const {
  if (!(step_size > 0) || !std::isfinite(step_size)) throw ConfigError("HMC step size must be positive");
  if (leapfrog_steps < 1 || n_samples < 0 || burn_in < 0 || thin < 1 || n_chains < 1) {
    throw ConfigError("HMC leapfrog steps, thinning and chains must be positive");
  }
  if (!initial_states.empty() && static_cast<int>(initial_states.size()) != n_chains) {
    throw ConfigError("HMC needs one initial state per chain");
  }
}

namespace {

struct ChainResult {
  Matrix samples;
  double accept_rate;
  int nonfinite;
  Vector final_state;
};

ChainResult run_chain(const TargetDensity& target, const HmcConfig& cfg, Rng rng, const Vector* start) {
  const int d = target.dim();
  Vector z = start ? *start : standard_normal(rng, d);
  if (z.size() != d) throw ConfigError("HMC initial state has the wrong dimension");
  double logp = target.log_density(z);
  Vector grad = target.grad_log_density(z);
  if (!std::isfinite(logp)) throw NumericalError("HMC: target not finite at the initial point");

  const long total = static_cast<long>(cfg.burn_in) + static_cast<long>(cfg.n_samples) * cfg.thin;
  ChainResult out{Matrix(d, cfg.n_samples), 0.0, 0, Vector()};
  long accepted = 0;
  int kept = 0;
  const double eps = cfg.step_size;
  for (long it = 0; it < total; ++it) {
    const Vector momentum = standard_normal(rng, d);
    Vector q = z;
    Vector p = momentum;
    Vector g = grad;
    double logp_new = logp;
    bool finite = true;
    p += 0.5 * eps * g;
    for (int l = 0; l < cfg.leapfrog_steps; ++l) {
      q += eps * p;
      try {
        logp_new = target.log_density(q);
        g = target.grad_log_density(q);
      } catch (const NumericalError&) {
        finite = false;
        break;
      }
      if (!std::isfinite(logp_new) || !g.allFinite() || !q.allFinite()) {
        finite = false;
        break;
      }
      p += (l + 1 == cfg.leapfrog_steps ? 0.5 : 1.0) * eps * g;
    }
    const double h_old = -logp + 0.5 * momentum.squaredNorm();
    const double h_new = -logp_new + 0.5 * p.squaredNorm();
    const double u = rng.uniform();
    if (!finite || !std::isfinite(h_new)) {
      ++out.nonfinite;
    } else if (std::log(u) < h_old - h_new) {
      z = std::move(q);
      logp = logp_new;
      grad = std::move(g);
      ++accepted;
    }
    if (it >= cfg.burn_in && (it - cfg.burn_in) % cfg.thin == cfg.thin - 1) out.samples.col(kept++) = z;
  }
  if (total > 0 && out.nonfinite > cfg.max_nonfinite_fraction * static_cast<double>(total)) {
    throw NumericalError("HMC: " + std::to_string(out.nonfinite) + " of " + std::to_string(total) +
                         " proposals had a non-finite Hamiltonian");
  }
  out.accept_rate = total ? static_cast<double>(accepted) / static_cast<double>(total) : 0.0;
  out.final_state = std::move(z);
  return out;
}

double quantile(std::vector<double> sorted, double q) {
  std::sort(sorted.begin(), sorted.end());
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

}  // namespace

HmcResult hmc_sample(const TargetDensity& target, const HmcConfig& cfg) {
  cfg.validate();
  const Rng root = Rng(cfg.seed).derive("hmc-chain");
  HmcResult out;
  out.samples.resize(target.dim(), static_cast<Eigen::Index>(cfg.n_chains) * cfg.n_samples);
  for (int c = 0; c < cfg.n_chains; ++c) {
    const Vector* start = cfg.initial_states.empty() ? nullptr : &cfg.initial_states[static_cast<std::size_t>(c)];
    ChainResult chain = run_chain(target, cfg, root.derive(static_cast<std::uint64_t>(c)), start);
    out.samples.middleCols(static_cast<Eigen::Index>(c) * cfg.n_samples, cfg.n_samples) = chain.samples;
    out.accept_rates.push_back(chain.accept_rate);
    out.nonfinite.push_back(chain.nonfinite);
    out.final_states.push_back(std::move(chain.final_state));
  }
  return out;
}

SweepTable hmc_tuning_sweep(const TargetDensity& target, const std::vector<double>& step_sizes,
                            const HmcConfig& base) {
  if (step_sizes.empty()) throw ConfigError("HMC sweep needs at least one step size");
  SweepTable table;
  for (std::size_t k = 0; k < step_sizes.size(); ++k) {
    HmcConfig cfg = base;
    cfg.step_size = step_sizes[k];
    cfg.n_samples = 0;
    cfg.max_nonfinite_fraction = 1.0;
    cfg.seed = mix_seed(base.seed, k);
    const HmcResult res = hmc_sample(target, cfg);
    for (int c = 0; c < cfg.n_chains; ++c) table.rows.push_back({cfg.step_size, c, res.accept_rates[static_cast<std::size_t>(c)]});
    const auto& r = res.accept_rates;
    table.summary.push_back({cfg.step_size, quantile(r, 0.0), quantile(r, 0.25), quantile(r, 0.5), quantile(r, 0.75),
                             quantile(r, 1.0)});
  }
  return table;
}

std::string sweep_csv(const SweepTable& table) {
  std::string out = "eps,chain,accept_rate\n";
  for (const auto& row : table.rows) {
    out += textfmt::format_double(row.step_size) + "," + std::to_string(row.chain) + "," +
           textfmt::format_double(row.accept_rate) + "\n";
  }
  return out;
}

// ---------------------------------------------------------------------------

RejectionResult rejection_sample(const DecoderModel& model, const EvidenceMask& ev, int n, long max_tries, Rng& rng) {
  if (model.likelihood() != Likelihood::kBernoulli) {
    throw ConfigError("rejection sampling needs a bernoulli likelihood (acceptance bound p(x|z) <= 1)");
  }
  if (n < 0 || max_tries < 0) throw ConfigError("rejection_sample: negative counts");
  ev.validate(model);
  const int d = model.latent_dim();
  RejectionResult out;
  out.samples.resize(d, n);
  Eigen::Index accepted = 0;
  constexpr Eigen::Index kChunk = 1024;
  while (accepted < n && out.tries < max_tries) {
    const Eigen::Index chunk = std::min<Eigen::Index>(kChunk, max_tries - out.tries);
    const Matrix z = standard_normal(rng, d, chunk);
    Matrix params;
    if (!ev.empty()) params = decode_batch(model, z);
    for (Eigen::Index j = 0; j < chunk && accepted < n; ++j) {
      ++out.tries;
      double loglik = 0.0;
      for (std::size_t k = 0; k < ev.size(); ++k) {
        loglik += log_density_term(Likelihood::kBernoulli, 1.0, params(ev.indices()[k], j), ev.values()[k]);
      }
      if (rng.uniform() < std::exp(loglik)) out.samples.col(accepted++) = z.col(j);
    }
  }
  if (accepted < n) {
    out.samples.conservativeResize(Eigen::NoChange, accepted);
    out.complete = false;
    out.warning = "rejection sampling accepted " + std::to_string(accepted) + " of " + std::to_string(n) +
                  " requested samples within " + std::to_string(max_tries) + " proposals";
  }
  return out;
}

// ---------------------------------------------------------------------------

GridSpec GridSpec::square(double bound, int resolution) {
  GridSpec g;
  g.lower = {-bound, -bound};
  g.upper = {bound, bound};
  g.resolution = {resolution, resolution};
  g.validate();
  return g;
}

void GridSpec::validate() const {
  for (int a = 0; a < 2; ++a) {
    if (!(upper[a] > lower[a])) throw ConfigError("grid bounds must satisfy lower < upper");
    if (resolution[a] < 50) throw ConfigError("grid resolution must be at least 50");
  }
}

std::optional<std::array<int, 2>> GridSpec::locate(const Vector& z) const {
  std::array<int, 2> cell{};
  for (int a = 0; a < 2; ++a) {
    if (!(z[a] >= lower[a] && z[a] < upper[a])) return std::nullopt;
    cell[a] = std::min(resolution[a] - 1, static_cast<int>((z[a] - lower[a]) / cell_width(a)));
  }
  return cell;
}

GridPosterior grid_posterior(const TargetDensity& target, const GridSpec& spec) {
  spec.validate();
  if (target.dim() != 2) throw ConfigError("grid posterior needs a 2-dimensional latent");
  const int nx = spec.resolution[0];
  const int ny = spec.resolution[1];
  Matrix centers(2, static_cast<Eigen::Index>(nx) * ny);
  for (int i = 0; i < nx; ++i)
    for (int j = 0; j < ny; ++j) centers.col(static_cast<Eigen::Index>(i) * ny + j) << spec.center(0, i), spec.center(1, j);
  const Vector logs = target.log_density_batch(centers, nullptr);
  const double peak = logs.maxCoeff();
  if (!std::isfinite(peak)) {
    throw NumericalError("grid posterior: every cell underflows; widen the grid bounds");
  }
  const double log_mass = log_sum_exp(logs);
  GridPosterior out{spec, Matrix(nx, ny), log_mass + std::log(spec.cell_area())};
  for (int i = 0; i < nx; ++i)
    for (int j = 0; j < ny; ++j) out.prob(i, j) = std::exp(logs[static_cast<Eigen::Index>(i) * ny + j] - log_mass);
  out.prob /= out.prob.sum();
  return out;
}

GridPosterior grid_posterior(const DecoderModel& model, const EvidenceMask& ev, const GridSpec& spec) {
  return grid_posterior(posterior_target(model, ev), spec);
}

Matrix sample_grid(const GridPosterior& grid, Eigen::Index n, Rng& rng) {
  const int nx = grid.spec.resolution[0];
  const int ny = grid.spec.resolution[1];
  std::vector<double> cdf(static_cast<std::size_t>(nx) * ny);
  double acc = 0.0;
  for (int i = 0; i < nx; ++i)
    for (int j = 0; j < ny; ++j) cdf[static_cast<std::size_t>(i) * ny + j] = (acc += grid.prob(i, j));
  Matrix out(2, n);
  for (Eigen::Index k = 0; k < n; ++k) {
    const double u = rng.uniform() * acc;
    const auto pos = static_cast<std::size_t>(std::lower_bound(cdf.begin(), cdf.end(), u) - cdf.begin());
    const auto cell = std::min(pos, cdf.size() - 1);
    const int i = static_cast<int>(cell / static_cast<std::size_t>(ny));
    const int j = static_cast<int>(cell % static_cast<std::size_t>(ny));
    out(0, k) = grid.spec.lower[0] + (i + rng.uniform()) * grid.spec.cell_width(0);
    out(1, k) = grid.spec.lower[1] + (j + rng.uniform()) * grid.spec.cell_width(1);
  }
  return out;
}

// ---------------------------------------------------------------------------

AlternationResult rezende_alternation(const DecoderModel& decoder, const EncoderModel& encoder,
                                      const EvidenceMask& ev, int iters, int n_chains, Rng& rng) {
  if (iters < 0 || n_chains < 1) throw ConfigError("alternation needs iters >= 0 and n_chains >= 1");
  if (encoder.input_dim() != decoder.output_dim() || encoder.latent_dim() != decoder.latent_dim()) {
    throw ConfigError("encoder does not match the decoder");
  }
  ev.validate(decoder);
  const int d = decoder.latent_dim();
  const int dim = decoder.output_dim();
  AlternationResult out{Matrix(dim, n_chains), Matrix(dim, n_chains), Matrix(dim, n_chains), Matrix(d, n_chains)};

  auto clamp = [&](Vector& t) {
    for (std::size_t k = 0; k < ev.size(); ++k) t[ev.indices()[k]] = ev.values()[k];
  };
  for (int c = 0; c < n_chains; ++c) {
    Vector z = standard_normal(rng, d);
    Vector params = decode_forward(decoder, z).params;
    Vector t = sample_output(decoder, params, rng, false);
    clamp(t);
    Vector running = t;
    for (int it = 0; it < iters; ++it) {
      const EncoderModel::Posterior q = encoder.encode(t);
      z = q.mean + q.log_std.array().exp().matrix().cwiseProduct(standard_normal(rng, d));
      params = decode_forward(decoder, z).params;
      t = sample_output(decoder, params, rng, false);
      clamp(t);
      running += t;
    }
    out.final_t.col(c) = t;
    out.mean_t.col(c) = running / static_cast<double>(iters + 1);
    out.final_means.col(c) = params;
    out.final_z.col(c) = z;
  }
  return out;
}

}  // namespace xcoding
