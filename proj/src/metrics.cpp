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

#include "xcoding/metrics.hpp"

#include "xcoding/error.hpp"
#include "xcoding/textfmt.hpp"

#include <algorithm>
#include <cmath>

namespace xcoding {

QueryEval query_marginal_from_logliks(const Vector& per_sample) {
  if (per_sample.size() == 0) throw ConfigError("query marginal likelihood needs at least one sample");
  const auto m = static_cast<double>(per_sample.size());
  return {log_sum_exp(per_sample) - std::log(m), static_cast<int>(per_sample.size()), per_sample};
}

QueryEval query_marginal_loglik(const DecoderModel& model, const Matrix& z_samples, const EvidenceMask& ev,
                                const Vector& t_true) {
  if (z_samples.cols() == 0) throw ConfigError("query marginal likelihood needs at least one sample");
  if (t_true.size() != model.output_dim()) throw ConfigError("true output has the wrong dimension");
  const std::vector<int> query = ev.complement(model.output_dim());
  const Matrix params = decode_batch(model, z_samples);
  Vector per_sample(z_samples.cols());
  for (Eigen::Index j = 0; j < z_samples.cols(); ++j) {
    per_sample[j] = log_likelihood_at(model, params.col(j), query, t_true);
  }
  return query_marginal_from_logliks(per_sample);
}

Matrix histogram_on_grid(const Matrix& z_samples, const GridSpec& spec, long* clipped) {
  Matrix hist = Matrix::Zero(spec.resolution[0], spec.resolution[1]);
  long outside = 0;
  for (Eigen::Index k = 0; k < z_samples.cols(); ++k) {
    std::array<int, 2> cell{};
    if (auto located = spec.locate(z_samples.col(k))) {
      cell = *located;
    } else {
      ++outside;
      for (int a = 0; a < 2; ++a) {
        const double pos = (z_samples(a, k) - spec.lower[a]) / spec.cell_width(a);
        cell[a] = std::clamp(std::isfinite(pos) ? static_cast<int>(std::floor(pos)) : 0, 0, spec.resolution[a] - 1);
      }
    }
    hist(cell[0], cell[1]) += 1.0;
  }
  if (clipped) *clipped = outside;
  if (z_samples.cols() > 0) hist /= static_cast<double>(z_samples.cols());
  return hist;
}

Divergence divergence_vs_grid(const Matrix& z_samples, const GridPosterior& grid) {
  if (z_samples.rows() != 2) throw ConfigError("divergence_vs_grid needs 2-dimensional samples");
  if (z_samples.cols() == 0) throw ConfigError("divergence_vs_grid needs samples");
  Divergence out{};
  const Matrix hist = histogram_on_grid(z_samples, grid.spec, &out.clipped);
  if (static_cast<double>(out.clipped) > kMaxOutsideFraction * static_cast<double>(z_samples.cols())) {
    throw NumericalError(std::to_string(out.clipped) + " of " + std::to_string(z_samples.cols()) +
                         " samples fall outside the grid bounds");
  }
  out.tv = 0.5 * (hist - grid.prob).cwiseAbs().sum();
  const auto n = static_cast<double>(z_samples.cols());
  const auto cells = static_cast<double>(hist.size());
  double kl = 0.0;
  for (Eigen::Index i = 0; i < hist.rows(); ++i) {
    for (Eigen::Index j = 0; j < hist.cols(); ++j) {
      const double p = grid.prob(i, j);
      if (p <= 0) continue;
      const double q = (hist(i, j) * n + 1.0) / (n + cells);
      kl += p * std::log(p / q);
    }
  }
  out.kl = std::max(0.0, kl);
  return out;
}

double median_pairwise_distance(const Matrix& pooled) {
  const Eigen::Index n = pooled.cols();
  const Eigen::Index m = std::min(n, kBandwidthSubsample);
  std::vector<Eigen::Index> pick(static_cast<std::size_t>(m));
  for (Eigen::Index k = 0; k < m; ++k) pick[static_cast<std::size_t>(k)] = k * n / m;
  std::vector<double> dist;
  dist.reserve(static_cast<std::size_t>(m * (m - 1) / 2));
  for (Eigen::Index a = 0; a < m; ++a)
    for (Eigen::Index b = a + 1; b < m; ++b)
      dist.push_back((pooled.col(pick[static_cast<std::size_t>(a)]) - pooled.col(pick[static_cast<std::size_t>(b)])).norm());
  if (dist.empty()) return 0.0;
  const auto mid = dist.begin() + static_cast<std::ptrdiff_t>(dist.size() / 2);
  std::nth_element(dist.begin(), mid, dist.end());
  return *mid;
}

namespace {

// Kernel values in [0, 1] scaled to integers; sums are then exact and
// independent of summation order.
constexpr double kFixedScale = 0x1.0p52;

unsigned __int128 kernel_sum(const Matrix& a, const Matrix& b, double inv_two_bw2) {
  unsigned __int128 total = 0;
  for (Eigen::Index i = 0; i < a.cols(); ++i) {
    for (Eigen::Index j = 0; j < b.cols(); ++j) {
      const double d2 = (a.col(i) - b.col(j)).squaredNorm();
      total += static_cast<unsigned __int128>(std::llround(std::exp(-d2 * inv_two_bw2) * kFixedScale));
    }
  }
  return total;
}

double to_mean(unsigned __int128 sum, double count) {
  return static_cast<double>(static_cast<long double>(sum) / static_cast<long double>(kFixedScale)) / count;
}

}  // namespace

MmdResult mmd(const Matrix& x, const Matrix& y, std::optional<double> bandwidth) {
  if (x.cols() == 0 || y.cols() == 0) throw ConfigError("mmd needs two non-empty sample sets");
  if (x.rows() != y.rows()) throw ConfigError("mmd sample sets differ in dimension");
  double bw;
  if (bandwidth) {
    bw = *bandwidth;
  } else {
    // Pool in a fixed order (x first) only when |x| <= |y| lexicographically so
    // the bandwidth is symmetric in the arguments.
    const bool x_first = x.cols() != y.cols() ? x.cols() < y.cols()
                                              : std::lexicographical_compare(x.data(), x.data() + x.size(), y.data(),
                                                                             y.data() + y.size());
    Matrix pooled(x.rows(), x.cols() + y.cols());
    if (x_first) {
      pooled << x, y;
    } else {
      pooled << y, x;
    }
    bw = median_pairwise_distance(pooled);
  }
  if (!(bw > 0) || !std::isfinite(bw)) throw NumericalError("mmd bandwidth is degenerate (all points identical?)");
  const double inv = 1.0 / (2.0 * bw * bw);
  const auto n = static_cast<double>(x.cols());
  const auto m = static_cast<double>(y.cols());
  const double kxx = to_mean(kernel_sum(x, x, inv), n * n);
  const double kyy = to_mean(kernel_sum(y, y, inv), m * m);
  const double kxy = to_mean(kernel_sum(x, y, inv), n * m);
  return {kxx + kyy - 2.0 * kxy, bw};
}

double TimingLog::total(const std::string& label) const {
  double sum = 0.0;
  for (const auto& r : rows_)
    if (r.label == label) sum += r.seconds;
  return sum;
}

std::string metrics_csv(const std::vector<MetricsRow>& rows) {
  auto field = [](const std::optional<double>& v) { return v ? textfmt::format_double(*v) : std::string(); };
  std::string out = "method,mask_id,celbo,query_loglik,tv,kl,opt_seconds,predict_seconds\n";
  for (const auto& r : rows) {
    out += r.method + "," + std::to_string(r.mask_id) + "," + field(r.celbo) + "," + field(r.query_loglik) + "," +
           field(r.tv) + "," + field(r.kl) + "," + field(r.opt_seconds) + "," + field(r.predict_seconds) + "\n";
  }
  return out;
}

}  // namespace xcoding
