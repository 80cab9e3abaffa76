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

#include <Eigen/Dense>

#include <cstdint>
#include <limits>
#include <random>
#include <string_view>

namespace xcoding {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// Matrix-vector product with an explicit dimension check.
Vector matvec(const Matrix& m, const Vector& v);

struct LogAbsDet {
  double logabsdet;
  int sign;  // -1, 0 (singular), +1
  bool singular() const { return sign == 0; }
};

// |det| below this is reported as singular.
inline constexpr double kSingularDetFloor = 1e-300;

// log|det m| and its sign via partial-pivot LU. Singular matrices come back as
// {-inf, 0}.
LogAbsDet lu_logabsdet(const Matrix& m);

/// Seeded random stream.
///
/// The bit stream is std::mt19937_64, whose output sequence is fixed by the
/// C++ standard. Uniform and normal variates are produced by our own
/// transforms (53-bit mantissa fill, Box-Muller) rather than the
/// implementation-defined <random> distributions, so a seed reproduces the
/// same doubles on every conforming platform.
class Rng {
 public:
  static constexpr int kAlgorithmVersion = 1;

  explicit Rng(std::uint64_t seed = 0) : seed_(seed), engine_(seed) {}

  std::uint64_t seed() const { return seed_; }
  std::uint64_t next_u64() { return engine_(); }

  // Uniform on the open interval (0, 1).
  double uniform();
  double normal();
  // Index in [0, n).
  std::size_t index(std::size_t n);

  // Independent child stream keyed by a stable label hash.
  Rng derive(std::string_view label) const;
  Rng derive(std::uint64_t stream) const;

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

// 64-bit FNV-1a; stable across platforms and runs.
std::uint64_t stable_hash(std::string_view text);
// SplitMix64 finalizer, used to mix seeds with stream ids.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream);

Vector standard_normal(Rng& rng, Eigen::Index n);
Matrix standard_normal(Rng& rng, Eigen::Index rows, Eigen::Index cols);

double log_sum_exp(const Eigen::Ref<const Vector>& values);
double softplus(double x);
double sigmoid(double x);

inline constexpr double kLog2Pi = 1.8378770664093454835606594728112;

bool all_finite(const Eigen::Ref<const Matrix>& m);

}  // namespace xcoding
