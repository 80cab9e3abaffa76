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
#include "xcoding/samplers.hpp"

#include <chrono>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace xcoding {

struct QueryEval {
  double log_marginal;  // logsumexp(per_sample) - ln M
  int n_samples;
  Vector per_sample;    // log p(y_true | z_m)
};

// Default sample count for the marginal-likelihood metric.
inline constexpr int kDefaultQuerySamples = 500;

QueryEval query_marginal_from_logliks(const Vector& per_sample);
// `t_true` is a full output vector; the query is the complement of `ev`.
QueryEval query_marginal_loglik(const DecoderModel& model, const Matrix& z_samples, const EvidenceMask& ev,
                                const Vector& t_true);

struct Divergence {
  double tv;
  double kl;       // KL[grid || empirical], empirical smoothed by +1 per cell
  long clipped;    // samples outside the bounds, folded into edge cells
};

// More than this fraction of samples outside the grid is an error.
inline constexpr double kMaxOutsideFraction = 0.05;

Divergence divergence_vs_grid(const Matrix& z_samples, const GridPosterior& grid);
// Normalized histogram of samples on the grid cells.
Matrix histogram_on_grid(const Matrix& z_samples, const GridSpec& spec, long* clipped = nullptr);

struct MmdResult {
  double mmd2;
  double bandwidth;
};

// Pairwise distances used for the median bandwidth come from at most this
// many evenly spaced pooled points.
inline constexpr Eigen::Index kBandwidthSubsample = 2000;

// Biased (V-statistic) squared MMD with a gaussian kernel. Kernel sums are
// accumulated in fixed point, so the result does not depend on argument
// order and is exactly zero for identical sets.
MmdResult mmd(const Matrix& x, const Matrix& y, std::optional<double> bandwidth = std::nullopt);
double median_pairwise_distance(const Matrix& pooled);

// ---------------------------------------------------------------------------
// Timing

struct TimingRow {
  std::string label;
  double seconds;
};

class TimingLog {
 public:
  template <class F>
  auto time(const std::string& label, F&& thunk) {
    const auto start = std::chrono::steady_clock::now();
    if constexpr (std::is_void_v<decltype(thunk())>) {
      thunk();
      rows_.push_back({label, elapsed(start)});
    } else {
      auto result = thunk();
      rows_.push_back({label, elapsed(start)});
      return result;
    }
  }
  const std::vector<TimingRow>& rows() const { return rows_; }
  double total(const std::string& label) const;

 private:
  static double elapsed(std::chrono::steady_clock::time_point start) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  }
  std::vector<TimingRow> rows_;
};

// Runs `thunk` and returns (result, wall seconds) on a monotonic clock.
template <class F>
auto timed(F&& thunk) {
  const auto start = std::chrono::steady_clock::now();
  auto result = thunk();
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return std::make_pair(std::move(result), seconds);
}

// ---------------------------------------------------------------------------

struct MetricsRow {
  std::string method;
  int mask_id = 0;
  std::optional<double> celbo;
  std::optional<double> query_loglik;
  std::optional<double> tv;
  std::optional<double> kl;
  std::optional<double> opt_seconds;
  std::optional<double> predict_seconds;
};

// CSV `method,mask_id,celbo,query_loglik,tv,kl,opt_seconds,predict_seconds`;
// missing values are written as empty fields.
std::string metrics_csv(const std::vector<MetricsRow>& rows);

}  // namespace xcoding
