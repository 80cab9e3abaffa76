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

#include "xcoding/toydata.hpp"

#include "xcoding/error.hpp"

#include <algorithm>
#include <cmath>

namespace xcoding {

Matrix make_bars(int n, std::uint64_t seed) {
  if (n < 1) throw ConfigError("make_bars: n must be at least 1");
  Rng rng(seed);
  Matrix data(kBarsDim, n);
  for (int k = 0; k < n; ++k) {
    const int r = static_cast<int>(rng.index(kBarsSide - 1));
    const int c = static_cast<int>(rng.index(kBarsSide - 1));
    bool row_on = false;
    bool col_on = false;
    while (!row_on && !col_on) {
      row_on = rng.uniform() < 0.75;
      col_on = rng.uniform() < 0.75;
    }
    for (int i = 0; i < kBarsSide; ++i) {
      for (int j = 0; j < kBarsSide; ++j) {
        const bool band = (row_on && (i == r || i == r + 1)) || (col_on && (j == c || j == c + 1));
        const double p = band ? 0.95 : 0.03;
        data(i * kBarsSide + j, k) = rng.uniform() < p ? 1.0 : 0.0;
      }
    }
  }
  return data;
}

ConjugateModel make_conjugate_model(const Matrix& a, const Vector& c, double sigma) {
  if (a.rows() != c.size()) throw ConfigError("conjugate model offset does not match A");
  Network net(make_spec(static_cast<int>(a.cols()), {}, static_cast<int>(a.rows()), Activation::kIdentity,
                        Activation::kIdentity));
  net.layers()[0].weight = a;
  net.layers()[0].bias = c;
  return {DecoderModel(std::move(net), Likelihood::kGaussian, sigma), a, c, sigma};
}

ConjugateModel make_random_conjugate_model(int latent_dim, int output_dim, double sigma, Rng& rng) {
  const Matrix a = standard_normal(rng, output_dim, latent_dim);
  const Vector c = 0.5 * standard_normal(rng, output_dim);
  return make_conjugate_model(a, c, sigma);
}

namespace {

struct EvidenceRows {
  Matrix a;
  Vector residual;  // x - c on the evidence rows
};

EvidenceRows evidence_rows(const ConjugateModel& m, const EvidenceMask& ev) {
  ev.validate(m.model);
  EvidenceRows out{Matrix(static_cast<Eigen::Index>(ev.size()), m.a.cols()), Vector(static_cast<Eigen::Index>(ev.size()))};
  for (std::size_t k = 0; k < ev.size(); ++k) {
    const auto row = static_cast<Eigen::Index>(k);
    out.a.row(row) = m.a.row(ev.indices()[k]);
    out.residual[row] = ev.values()[k] - m.c[ev.indices()[k]];
  }
  return out;
}

}  // namespace

GaussianPosterior conjugate_posterior(const ConjugateModel& m, const EvidenceMask& ev) {
  const auto d = m.a.cols();
  const EvidenceRows rows = evidence_rows(m, ev);
  const double s2 = m.sigma * m.sigma;
  const Matrix precision = Matrix::Identity(d, d) + rows.a.transpose() * rows.a / s2;
  Eigen::SelfAdjointEigenSolver<Matrix> eig(precision);
  const double cond = eig.eigenvalues().maxCoeff() / eig.eigenvalues().minCoeff();
  if (!(cond <= kMaxConditionNumber)) throw NumericalError("conjugate posterior is ill-conditioned");
  GaussianPosterior out;
  out.covariance = precision.inverse();
  out.covariance = 0.5 * (out.covariance + out.covariance.transpose());
  out.mean = out.covariance * rows.a.transpose() * rows.residual / s2;

  const auto n = static_cast<Eigen::Index>(ev.size());
  if (n == 0) {
    out.log_evidence = 0.0;
    return out;
  }
  // x_e ~ N(c_e, A_e A_e^T + sigma^2 I).
  const Matrix marginal_cov = rows.a * rows.a.transpose() + s2 * Matrix::Identity(n, n);
  Eigen::LLT<Matrix> llt(marginal_cov);
  const Matrix lower = llt.matrixL();
  const Vector white = lower.triangularView<Eigen::Lower>().solve(rows.residual);
  out.log_evidence = -0.5 * static_cast<double>(n) * kLog2Pi - lower.diagonal().array().log().sum() -
                     0.5 * white.squaredNorm();
  return out;
}

double conjugate_log_predictive(const ConjugateModel& m, const EvidenceMask& ev, const Vector& t_true) {
  const GaussianPosterior post = conjugate_posterior(m, ev);
  const std::vector<int> query = ev.complement(static_cast<int>(m.a.rows()));
  const auto nq = static_cast<Eigen::Index>(query.size());
  if (nq == 0) return 0.0;
  Matrix aq(nq, m.a.cols());
  Vector resid(nq);
  for (Eigen::Index k = 0; k < nq; ++k) {
    aq.row(k) = m.a.row(query[static_cast<std::size_t>(k)]);
    resid[k] = t_true[query[static_cast<std::size_t>(k)]] - m.c[query[static_cast<std::size_t>(k)]] -
               aq.row(k).dot(post.mean);
  }
  const Matrix cov = aq * post.covariance * aq.transpose() + m.sigma * m.sigma * Matrix::Identity(nq, nq);
  Eigen::LLT<Matrix> llt(cov);
  const Matrix lower = llt.matrixL();
  const Vector white = lower.triangularView<Eigen::Lower>().solve(resid);
  return -0.5 * static_cast<double>(nq) * kLog2Pi - lower.diagonal().array().log().sum() - 0.5 * white.squaredNorm();
}

// ---------------------------------------------------------------------------

int count_local_maxima(const Matrix& prob) {
  int count = 0;
  for (Eigen::Index i = 1; i + 1 < prob.rows(); ++i) {
    for (Eigen::Index j = 1; j + 1 < prob.cols(); ++j) {
      const double v = prob(i, j);
      bool peak = v > 0;
      for (int di = -1; di <= 1 && peak; ++di)
        for (int dj = -1; dj <= 1 && peak; ++dj)
          if ((di || dj) && prob(i + di, j + dj) >= v) peak = false;
      if (peak) ++count;
    }
  }
  return count;
}

double mode_trough_ratio(const GridPosterior& grid) {
  const int nx = grid.spec.resolution[0];
  // Cell columns straddling z_1 = 0.
  const double pos = -grid.spec.lower[0] / grid.spec.cell_width(0);
  const int lo = std::clamp(static_cast<int>(std::floor(pos - 0.5)), 0, nx - 1);
  const int hi = std::clamp(static_cast<int>(std::ceil(pos - 0.5)), 0, nx - 1);
  const double trough = std::max(grid.prob.row(lo).maxCoeff(), grid.prob.row(hi).maxCoeff());
  return grid.prob.maxCoeff() / trough;
}

BimodalModel make_bimodal_model(std::uint64_t seed) {
  Rng rng(seed);
  constexpr int kEvidencePixels = 6;
  constexpr int kOtherPixels = 6;
  constexpr int kDim = kEvidencePixels + kOtherPixels;
  // Hidden relu units: z1+, z1-, z2+, z2-.
  Network net(make_spec(2, {4}, kDim, Activation::kRelu, Activation::kSigmoid));
  auto& hidden = net.layers()[0];
  hidden.weight << 1, 0, -1, 0, 0, 1, 0, -1;
  auto& out = net.layers()[1];
  out.weight.setZero();
  out.bias.setZero();
  const double threshold = 1.4 + 0.2 * rng.uniform();
  for (int j = 0; j < kEvidencePixels; ++j) {
    // logit = slope (|z1| - threshold) + tilt z2; symmetric in z1.
    const double slope = 2.0 + rng.uniform();
    const double tilt = 0.3 * (2.0 * rng.uniform() - 1.0);
    out.weight.row(j) << slope, slope, tilt, -tilt;
    out.bias[j] = -slope * threshold;
  }
  for (int j = kEvidencePixels; j < kDim; ++j) {
    const double tilt = 1.0 + rng.uniform();
    out.weight.row(j) << 0.0, 0.0, tilt, -tilt;
    out.bias[j] = 0.5 * (2.0 * rng.uniform() - 1.0);
  }
  DecoderModel model(std::move(net), Likelihood::kBernoulli);
  std::vector<int> idx(kEvidencePixels);
  for (int j = 0; j < kEvidencePixels; ++j) idx[static_cast<std::size_t>(j)] = j;
  EvidenceMask ev(idx, std::vector<double>(kEvidencePixels, 1.0));

  const GridPosterior grid = grid_posterior(model, ev, GridSpec::square(5.0, 100));
  if (count_local_maxima(grid.prob) < 2 || mode_trough_ratio(grid) < 10.0) {
    throw NumericalError("bimodal model construction failed its grid check");
  }
  return {std::move(model), std::move(ev)};
}

DecoderModel make_toy_bernoulli(int output_dim, std::uint64_t seed, int hidden, double weight_scale) {
  Rng rng(seed);
  Network net(make_spec(2, {hidden}, output_dim, Activation::kTanh, Activation::kSigmoid));
  for (auto& layer : net.layers()) {
    layer.weight = weight_scale * standard_normal(rng, layer.weight.rows(), layer.weight.cols()) /
                   std::sqrt(static_cast<double>(layer.weight.cols()));
    layer.bias = 0.5 * standard_normal(rng, layer.bias.size());
  }
  return DecoderModel(std::move(net), Likelihood::kBernoulli);
}

}  // namespace xcoding
