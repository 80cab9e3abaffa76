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

namespace xcoding {

inline constexpr int kBarsSide = 8;
inline constexpr int kBarsDim = kBarsSide * kBarsSide;

/// Binary 8x8 images (one per column). Each image draws a horizontal band
/// row r and a vertical band column c (both two pixels wide); each band is
/// switched on independently with probability 3/4, redrawn until at least one
/// is on. Band pixels are 1 with probability 0.95, background pixels with
/// probability 0.03.
Matrix make_bars(int n, std::uint64_t seed);

/// Linear-Gaussian decoder t = A z + c + sigma * noise with the closed-form
/// posterior used as an oracle.
struct ConjugateModel {
  DecoderModel model;
  Matrix a;
  Vector c;
  double sigma;
};

ConjugateModel make_conjugate_model(const Matrix& a, const Vector& c, double sigma);
ConjugateModel make_random_conjugate_model(int latent_dim, int output_dim, double sigma, Rng& rng);

struct GaussianPosterior {
  Vector mean;
  Matrix covariance;
  double log_evidence;  // log p(x)
};

inline constexpr double kMaxConditionNumber = 1e12;

GaussianPosterior conjugate_posterior(const ConjugateModel& m, const EvidenceMask& ev);

// Closed-form log p(y_query | x) for a query vector under the conjugate model.
double conjugate_log_predictive(const ConjugateModel& m, const EvidenceMask& ev, const Vector& t_true);

struct BimodalModel {
  DecoderModel model;
  EvidenceMask evidence;  // the mask that makes the posterior bimodal
};

/// 2-latent bernoulli decoder whose evidence pixels depend on |z_1|: the
/// posterior under the declared mask is symmetric under z_1 -> -z_1 and has
/// two separated modes. The property is checked on a grid before returning.
BimodalModel make_bimodal_model(std::uint64_t seed);

// Peak density over the whole grid divided by the peak along the z_1 = 0
// cell column pair; large values mean well-separated modes.
double mode_trough_ratio(const GridPosterior& grid);
// Cells strictly greater than their 8 neighbours (edge cells excluded).
int count_local_maxima(const Matrix& prob);

// Small random 2-latent bernoulli decoder (tanh hidden layer).
DecoderModel make_toy_bernoulli(int output_dim, std::uint64_t seed, int hidden = 16, double weight_scale = 1.5);

}  // namespace xcoding
