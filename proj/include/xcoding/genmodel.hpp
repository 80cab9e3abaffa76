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

#include "xcoding/network.hpp"
#include "xcoding/numkit.hpp"

#include <optional>
#include <string>
#include <vector>

namespace xcoding {

enum class Likelihood { kBernoulli, kGaussian };

std::string to_string(Likelihood lik);
Likelihood parse_likelihood(const std::string& name);

// Bernoulli probabilities are clamped to [kProbClamp, 1 - kProbClamp] before
// taking logs.
inline constexpr double kProbClamp = 1e-7;
inline constexpr double kDefaultSigma = 0.1;

/// Decoder p(t | z) with a standard-normal prior on z.
///
/// Bernoulli decoders end in a sigmoid and emit per-pixel probabilities;
/// Gaussian decoders emit means with a fixed isotropic noise scale sigma.
class DecoderModel {
 public:
  DecoderModel(Network net, Likelihood likelihood, double sigma = kDefaultSigma);

  const Network& network() const { return net_; }
  Likelihood likelihood() const { return likelihood_; }
  double sigma() const { return sigma_; }
  int latent_dim() const { return net_.input_dim(); }
  int output_dim() const { return net_.output_dim(); }

 private:
  Network net_;
  Likelihood likelihood_;
  double sigma_;
};

// Gaussian amortized posterior q(z | t): the network emits [mean; log-std].
class EncoderModel {
 public:
  explicit EncoderModel(Network net);

  const Network& network() const { return net_; }
  Network& network() { return net_; }
  int latent_dim() const { return net_.output_dim() / 2; }
  int input_dim() const { return net_.input_dim(); }

  struct Posterior {
    Vector mean;
    Vector log_std;
  };
  Posterior encode(const Vector& t) const;

 private:
  Network net_;
};

/// Observed output positions and their values. The complement is the query.
class EvidenceMask {
 public:
  EvidenceMask() = default;
  // Pairs are sorted by index; duplicates and non-finite values throw.
  EvidenceMask(std::vector<int> indices, std::vector<double> values);

  // Evidence taken from a full output vector at the given positions.
  static EvidenceMask from_vector(const Vector& t, std::vector<int> indices);

  const std::vector<int>& indices() const { return indices_; }
  const std::vector<double>& values() const { return values_; }
  std::size_t size() const { return indices_.size(); }
  bool empty() const { return indices_.empty(); }

  // Sorted positions in [0, output_dim) that are not observed.
  std::vector<int> complement(int output_dim) const;

  // Bounds and, for Bernoulli models, {0,1}-valued observations.
  void validate(const DecoderModel& model) const;

 private:
  std::vector<int> indices_;
  std::vector<double> values_;
};

struct DecodeResult {
  Vector params;  // probabilities (bernoulli) or means (gaussian)
  Tape tape;
};

DecodeResult decode_forward(const DecoderModel& model, const Vector& z);
// Batched decode: column j of `z` is one latent point.
Matrix decode_batch(const DecoderModel& model, const Matrix& z, Tape* tape = nullptr);

// log N(z; 0, I).
double log_prior(const Vector& z);

// Per-position log-density of observations given decoded parameters.
double log_density_term(Likelihood lik, double sigma, double param, double value);

double log_likelihood_masked(const DecoderModel& model, const Vector& z, const EvidenceMask& ev);
// Same, restricted to an explicit index set with values read from `target`.
double log_likelihood_at(const DecoderModel& model, const Vector& params,
                         const std::vector<int>& indices, const Vector& target);

double log_joint(const DecoderModel& model, const Vector& z, const EvidenceMask& ev);
Vector grad_log_joint_z(const DecoderModel& model, const Vector& z, const EvidenceMask& ev);

// Batched log joint and (optionally) its z-gradient for the columns of `z`.
Vector log_joint_batch(const DecoderModel& model, const Matrix& z, const EvidenceMask& ev,
                       Matrix* grad = nullptr);

// Draws t ~ p(t | z), or returns the decoded parameters when `means_only`.
Vector sample_output(const DecoderModel& model, const Vector& params, Rng& rng, bool means_only);

// ---------------------------------------------------------------------------
// VAE training

struct TrainConfig {
  int latent_dim = 2;
  std::vector<int> hidden = {64};
  Activation hidden_act = Activation::kRelu;
  Likelihood likelihood = Likelihood::kBernoulli;
  double sigma = kDefaultSigma;
  int epochs = 30;
  int batch_size = 32;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  std::uint64_t seed = 0;
};

struct TrainResult {
  DecoderModel decoder;
  EncoderModel encoder;
  std::vector<double> elbo_trace;  // mean per-datum ELBO per epoch
};

// Closed-form KL[N(mean, exp(log_std)^2) || N(0, I)].
double gaussian_kl(const Vector& mean, const Vector& log_std);

// Monte-Carlo ELBO averaged over the columns of `data` (one sample each).
double evaluate_elbo(const DecoderModel& decoder, const EncoderModel& encoder, const Matrix& data,
                     Rng& rng);

// `data` holds one datum per column.
TrainResult train_vae(const Matrix& data, const TrainConfig& config);

// ---------------------------------------------------------------------------
// Files

struct ModelBundle {
  DecoderModel decoder;
  std::optional<EncoderModel> encoder;
};

void save_model(const std::string& path, const DecoderModel& decoder,
                const EncoderModel* encoder = nullptr);
ModelBundle load_model(const std::string& path);
std::string serialize_model(const DecoderModel& decoder, const EncoderModel* encoder = nullptr);
ModelBundle parse_model(const std::string& text);

// Datasets: one datum per row in the file, one datum per column in memory.
Matrix load_dataset_csv(const std::string& path);
void save_dataset_csv(const std::string& path, const Matrix& data);
// Raw little-endian float64 values, `dim` per datum.
Matrix load_dataset_binary(const std::string& path, int dim);

}  // namespace xcoding
