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

#include "xcoding/celbo.hpp"
#include "xcoding/genmodel.hpp"
#include "xcoding/metrics.hpp"
#include "xcoding/samplers.hpp"

#include <string>
#include <vector>

namespace xcoding::cli {

// Stable process exit codes.
inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitNumerical = 3;

// Entry point shared by the binary and the tests. `args` excludes argv[0].
int run(const std::vector<std::string>& args);

/// Evidence positions from a mask spec:
///   "0,3,5"                explicit indices ("none" for the empty mask)
///   "random:<frac>:<seed>" round(frac * D) positions drawn without replacement
///   "rows:a-b,cols:c-d"    inclusive rectangle of a square image
std::vector<int> resolve_mask(const std::string& spec, int output_dim);

// Merges `key = value` lines of a config file into `args` for every key not
// already given on the command line. Boolean values become bare flags.
std::vector<std::string> merge_config(const std::vector<std::string>& args, const std::string& config_text);

// Side length when the output is a square image, else 0.
int image_side(int output_dim);

// P2 grayscale grid: the first tile shows the evidence alone (query pixels
// mid-gray); the remaining tiles show samples. Observed 1 renders as 255 and
// observed 0 as 0; query values map into [32, 223].
std::string render_pgm(const Matrix& t_samples, const EvidenceMask& ev, int side, int max_tiles = 16);

struct MethodSettings {
  CelboConfig celbo;
  HmcConfig hmc;
  long rs_max_tries = 10'000'000;
  int rezende_iters = 50;
  int samples = kDefaultQuerySamples;
  bool means_only = false;
  GridSpec grid;
  bool timing = true;
  std::uint64_t seed = 0;
};

struct MethodOutcome {
  Matrix z;
  Matrix t;
  std::optional<FitReport> fit;
  MetricsRow row;
  std::vector<std::string> warnings;
};

// One (method, mask) cell: Optimize and Predict phases, then metrics
// against `truth` (a full output vector) and, for 2-latent models, the grid.
MethodOutcome run_method(const ModelBundle& bundle, const EvidenceMask& ev, const Vector& truth,
                         const std::string& method, const MethodSettings& settings, int mask_id,
                         const GridPosterior* grid);

// Writes one z (or t) per row.
std::string samples_csv(const Matrix& columns);

}  // namespace xcoding::cli
