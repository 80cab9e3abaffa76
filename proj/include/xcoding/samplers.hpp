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

#pragma once

#include "xcoding/genmodel.hpp"
#include "xcoding/target.hpp"

#include <array>
#include <optional>
#include <string>
#include <vector>

namespace xcoding {

// ---------------------------------------------------------------------------
// Hamiltonian Monte Carlo over z with identity mass matrix.

struct HmcConfig {
  double step_size = 0.05;
  int leapfrog_steps = 10;
  int burn_in = 1000;
  int n_samples = 500;  // kept samples per chain
  int thin = 1;
  int n_chains = 1;
  std::uint64_t seed = 0;
  // Fraction of proposals with a non-finite Hamiltonian that aborts a chain.
  double max_nonfinite_fraction = 0.5;
  // Optional starting points, one per chain; default draws from N(0, I).
  std::vector<Vector> initial_states;

  void validate() const;
};

struct HmcResult {
  Matrix samples;  // d x (n_chains * n_samples), grouped by chain
  std::vector<double> accept_rates;
  std::vector<int> nonfinite;
  std::vector<Vector> final_states;  // for continuing chains
};

HmcResult hmc_sample(const TargetDensity& target, const HmcConfig& cfg);

struct AcceptQuartiles {
  double step_size;
  double min, q1, median, q3, max;
};

struct SweepTable {
  struct Row {
    double step_size;
    int chain;
    double accept_rate;
  };
  std::vector<Row> rows;
  std::vector<AcceptQuartiles> summary;
};

// n_chains chains per step size; divergent chains count as rejections.
SweepTable hmc_tuning_sweep(const TargetDensity& target, const std::vector<double>& step_sizes,
                            const HmcConfig& base);

// CSV `eps,chain,accept_rate`.
std::string sweep_csv(const SweepTable& table);

// ---------------------------------------------------------------------------
// Rejection sampling from p(z | x) with prior proposals (bernoulli only).

struct RejectionResult {
  Matrix samples;  // d x accepted
  long tries = 0;
  bool complete = true;
  std::string warning;
  double acceptance_rate() const { return tries ? static_cast<double>(samples.cols()) / tries : 0.0; }
};

RejectionResult rejection_sample(const DecoderModel& model, const EvidenceMask& ev, int n, long max_tries, Rng& rng);

// ---------------------------------------------------------------------------
// Discretized posterior over a 2-dimensional latent.

struct GridSpec {
  std::array<double, 2> lower{-5.0, -5.0};
  std::array<double, 2> upper{5.0, 5.0};
  std::array<int, 2> resolution{200, 200};

  static GridSpec square(double bound, int resolution);
  void validate() const;
  double cell_width(int axis) const { return (upper[axis] - lower[axis]) / resolution[axis]; }
  double cell_area() const { return cell_width(0) * cell_width(1); }
  double center(int axis, int i) const { return lower[axis] + (i + 0.5) * cell_width(axis); }
  // Cell holding z, or nullopt outside the bounds.
  std::optional<std::array<int, 2>> locate(const Vector& z) const;
};

struct GridPosterior {
  GridSpec spec;
  Matrix prob;  // resolution[0] x resolution[1], sums to 1
  double log_evidence;  // log sum_cells exp(log density) * area
};

GridPosterior grid_posterior(const TargetDensity& target, const GridSpec& spec);
GridPosterior grid_posterior(const DecoderModel& model, const EvidenceMask& ev, const GridSpec& spec);

// Exact draws from the discretized table, uniform within a cell.
Matrix sample_grid(const GridPosterior& grid, Eigen::Index n, Rng& rng);

// ---------------------------------------------------------------------------
// Encoder/decoder alternation (approximate block Gibbs over z and y).

struct AlternationResult {
  Matrix final_t;      // D x n_chains, evidence clamped
  Matrix mean_t;       // D x n_chains, per-chain average over iterations
  Matrix final_means;  // D x n_chains, decoder means at the last z
  Matrix final_z;      // d x n_chains
};

AlternationResult rezende_alternation(const DecoderModel& decoder, const EncoderModel& encoder,
                                      const EvidenceMask& ev, int iters, int n_chains, Rng& rng);

}  // namespace xcoding
