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
#include "xcoding/xcoder.hpp"

#include <string>
#include <vector>

namespace xcoding {

enum class OptimizerKind { kAdam, kLbfgs };

std::string to_string(OptimizerKind kind);
OptimizerKind parse_optimizer(const std::string& name);

struct CelboConfig {
  int mc_samples = 64;        // per-step batch for adam
  int max_iters = 2000;
  OptimizerKind optimizer = OptimizerKind::kLbfgs;
  int restarts = 3;
  std::uint64_t seed = 0;
  // Adam stops once the mean objective over the last 100 steps improves by
  // less than this; 0 disables the check.
  double tol = 1e-4;
  double learning_rate = 1e-2;
  int lbfgs_batch = 1000;     // fixed eps batch of the deterministic objective
  bool moment_match = true;   // whiten the fixed batch to mean 0, covariance I
  int final_batch = 10000;    // fresh batch for the reported estimate
  int flow_depth = kDefaultFlowDepth;
  int fcn_hidden = 32;
  // lbfgs rejects steps that reverse the orientation of any batch sample.
  bool keep_orientation = true;

  void validate() const;
};

struct CelboEstimate {
  double value = 0.0;
  double std_error = 0.0;
  int n = 0;         // samples that contributed
  int singular = 0;  // samples dropped for a singular Jacobian
  int reversed = 0;  // samples whose Jacobian determinant is negative
  bool bound_valid = true;
};

// Differential entropy of the standard-normal base: d/2 (1 + ln 2 pi).
double entropy_base(int dim);

// Columns shifted and rotated so the sample mean is 0 and the (1/n) sample
// covariance is the identity.
Matrix moment_match(const Matrix& eps);

// Extra eps points on which lbfgs checks the FCN Jacobian sign.
inline constexpr int kOrientationProbes = 10000;

// More than this fraction of singular samples is an error.
inline constexpr double kMaxSingularFraction = 0.1;

// C-ELBO on a fixed eps batch (one column per sample).
CelboEstimate celbo_estimate(const TargetDensity& target, const XCoder& xc, const Matrix& eps);
CelboEstimate celbo_estimate(const TargetDensity& target, const XCoder& xc, int mc_samples, Rng& rng);
CelboEstimate celbo_estimate(const DecoderModel& model, const XCoder& xc, const EvidenceMask& ev,
                             int mc_samples, Rng& rng);

struct CelboGradient {
  CelboEstimate estimate;
  Vector grad;  // d C-ELBO / d psi, same layout as XCoder::params()
};

// Value and reparameterized gradient sharing the same eps batch.
CelboGradient celbo_gradient(const TargetDensity& target, const XCoder& xc, const Matrix& eps);
CelboGradient celbo_gradient(const DecoderModel& model, const XCoder& xc, const EvidenceMask& ev,
                             int mc_samples, Rng& rng);

struct TracePoint {
  int iter;
  double celbo;
  double std_error;
};

struct RestartResult {
  std::vector<TracePoint> trace;
  double selection_celbo;  // on the shared fixed batch
  std::string stop_reason;
  bool diverged = false;
};

struct FitReport {
  XCoder xcoder;
  CelboEstimate final;  // fresh batch of cfg.final_batch
  std::vector<TracePoint> trace;  // best restart
  int best_restart = 0;
  std::vector<RestartResult> restarts;
};

FitReport optimize_xcoder(const TargetDensity& target, XCoderKind kind, const CelboConfig& cfg);
FitReport optimize_xcoder(const DecoderModel& model, const EvidenceMask& ev, XCoderKind kind,
                          const CelboConfig& cfg);

// Trace as CSV `iter,celbo,stderr`.
std::string trace_csv(const std::vector<TracePoint>& trace);

struct QuerySamples {
  Matrix z;  // d x n
  Matrix t;  // D x n; evidence positions hold the observed values
};

// Draws z = xcoder(eps) and fills query positions from p(y | z) (or the
// decoded means when `means_only`).
QuerySamples predict_query(const DecoderModel& model, const XCoder& xc, const EvidenceMask& ev, int n,
                           Rng& rng, bool means_only = false);

// Fills query positions for given latent samples.
Matrix decode_query(const DecoderModel& model, const Matrix& z, const EvidenceMask& ev, Rng& rng,
                    bool means_only);

}  // namespace xcoding
