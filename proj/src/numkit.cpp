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

#include "xcoding/numkit.hpp"

#include "xcoding/error.hpp"

#include <cmath>
#include <string>

namespace xcoding {

Vector matvec(const Matrix& m, const Vector& v) {
  if (m.cols() != v.size()) {
    throw ConfigError("matvec: matrix has " + std::to_string(m.cols()) + " columns but vector has " +
                      std::to_string(v.size()) + " entries");
  }
  return m * v;
}

LogAbsDet lu_logabsdet(const Matrix& m) {
  if (m.rows() != m.cols()) {
    throw ConfigError("lu_logabsdet: matrix is not square");
  }
  if (m.rows() == 0) return {0.0, 1};
  Eigen::PartialPivLU<Matrix> lu(m);
  const Matrix& packed = lu.matrixLU();
  double logabs = 0.0;
  int sign = lu.permutationP().determinant() > 0 ? 1 : -1;
  for (Eigen::Index i = 0; i < packed.rows(); ++i) {
    const double pivot = packed(i, i);
    if (pivot == 0.0 || !std::isfinite(pivot)) {
      return {-std::numeric_limits<double>::infinity(), 0};
    }
    if (pivot < 0) sign = -sign;
    logabs += std::log(std::abs(pivot));
  }
  if (logabs < std::log(kSingularDetFloor)) {
    return {-std::numeric_limits<double>::infinity(), 0};
  }
  return {logabs, sign};
}

double Rng::uniform() {
  // 53 random mantissa bits, shifted off zero.
  const std::uint64_t bits = engine_() >> 11;
  return (static_cast<double>(bits) + 0.5) * 0x1.0p-53;
}

double Rng::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  const double u1 = uniform();
  const double u2 = uniform();
  const double radius = std::sqrt(-2.0 * std::log(u1));
  const double angle = 2.0 * M_PI * u2;
  spare_ = radius * std::sin(angle);
  has_spare_ = true;
  return radius * std::cos(angle);
}

std::size_t Rng::index(std::size_t n) {
  if (n == 0) throw ConfigError("Rng::index: empty range");
  // Rejection keeps the draw unbiased.
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                              std::numeric_limits<std::uint64_t>::max() % n;
  std::uint64_t x;
  do {
    x = engine_();
  } while (x >= limit);
  return static_cast<std::size_t>(x % n);
}

Rng Rng::derive(std::string_view label) const { return Rng(mix_seed(seed_, stable_hash(label))); }

Rng Rng::derive(std::uint64_t stream) const { return Rng(mix_seed(seed_, stream)); }

std::uint64_t stable_hash(std::string_view text) {
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

Vector standard_normal(Rng& rng, Eigen::Index n) {
  if (n < 1) throw ConfigError("standard_normal: n must be at least 1");
  Vector out(n);
  for (Eigen::Index i = 0; i < n; ++i) out[i] = rng.normal();
  return out;
}

Matrix standard_normal(Rng& rng, Eigen::Index rows, Eigen::Index cols) {
  Matrix out(rows, cols);
  // Column-major fill: column j is one draw of a rows-dimensional vector.
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index i = 0; i < rows; ++i) out(i, j) = rng.normal();
  return out;
}

double log_sum_exp(const Eigen::Ref<const Vector>& values) {
  if (values.size() == 0) return -std::numeric_limits<double>::infinity();
  const double peak = values.maxCoeff();
  if (!std::isfinite(peak)) return peak;
  return peak + std::log((values.array() - peak).exp().sum());
}

double softplus(double x) {
  if (x > 30.0) return x + std::log1p(std::exp(-x));
  return std::log1p(std::exp(x));
}

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

bool all_finite(const Eigen::Ref<const Matrix>& m) { return m.allFinite(); }

}  // namespace xcoding
