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

#include "xcoding/error.hpp"
#include "xcoding/genmodel.hpp"
#include "xcoding/optim.hpp"

#include <cmath>
#include <numeric>

namespace xcoding {

double gaussian_kl(const Vector& mean, const Vector& log_std) {
  const Eigen::ArrayXd var = (2.0 * log_std.array()).exp();
  return 0.5 * (mean.array().square() + var - 1.0 - 2.0 * log_std.array()).sum();
}

namespace {

struct BatchElbo {
  Vector elbo;  // per column
  Vector decoder_grad;
  Vector encoder_grad;
};

// Per-column ELBO for a batch and, optionally, gradients of the batch sum.
BatchElbo batch_elbo(const DecoderModel& decoder, const EncoderModel& encoder, const Matrix& batch,
                     const Matrix& noise, bool with_grad) {
  const int d = encoder.latent_dim();
  const Eigen::Index n = batch.cols();
  Tape enc_tape;
  const Matrix enc_out = encoder.network().forward(batch, with_grad ? &enc_tape : nullptr);
  const Matrix mean = enc_out.topRows(d);
  const Matrix log_std = enc_out.bottomRows(d);
  const Matrix std_dev = log_std.array().exp().matrix();
  const Matrix z = mean + std_dev.cwiseProduct(noise);

  Tape dec_tape;
  const Matrix params = decoder.network().forward(z, with_grad ? &dec_tape : nullptr);

  BatchElbo out;
  out.elbo.resize(n);
  Matrix upstream = Matrix::Zero(params.rows(), n);
  for (Eigen::Index j = 0; j < n; ++j) {
    double ll = 0.0;
    for (Eigen::Index i = 0; i < params.rows(); ++i) {
      const double p = params(i, j);
      const double t = batch(i, j);
      ll += log_density_term(decoder.likelihood(), decoder.sigma(), p, t);
      if (with_grad) {
        if (decoder.likelihood() == Likelihood::kBernoulli) {
          upstream(i, j) = (p < kProbClamp || p > 1.0 - kProbClamp) ? 0.0 : t - p;
        } else {
          upstream(i, j) = (t - p) / (decoder.sigma() * decoder.sigma());
        }
      }
    }
    out.elbo[j] = ll - gaussian_kl(mean.col(j), log_std.col(j));
  }
  if (!with_grad) return out;

  const bool at_pre = decoder.likelihood() == Likelihood::kBernoulli;
  const Matrix grad_z = decoder.network().backward(dec_tape, upstream, at_pre, &out.decoder_grad);
  Matrix grad_enc(2 * d, n);
  grad_enc.topRows(d) = grad_z - mean;
  grad_enc.bottomRows(d) =
      (grad_z.cwiseProduct(std_dev).cwiseProduct(noise).array() - (std_dev.array().square() - 1.0)).matrix();
  encoder.network().backward(enc_tape, grad_enc, false, &out.encoder_grad);
  return out;
}

}  // namespace

double evaluate_elbo(const DecoderModel& decoder, const EncoderModel& encoder, const Matrix& data, Rng& rng) {
  const Matrix noise = standard_normal(rng, encoder.latent_dim(), data.cols());
  return batch_elbo(decoder, encoder, data, noise, false).elbo.mean();
}

TrainResult train_vae(const Matrix& data, const TrainConfig& config) {
  if (data.cols() == 0) throw ConfigError("train_vae: empty dataset");
  if (config.latent_dim < 1) throw ConfigError("train_vae: latent_dim must be positive");
  if (config.batch_size < 1 || config.epochs < 0) throw ConfigError("train_vae: bad batch size or epochs");
  if (!data.allFinite()) throw ConfigError("train_vae: dataset contains non-finite values");
  const int dim = static_cast<int>(data.rows());

  Rng rng(config.seed);
  Rng init_rng = rng.derive("init");
  Rng noise_rng = rng.derive("noise");
  Rng shuffle_rng = rng.derive("shuffle");

  const Activation out_act =
      config.likelihood == Likelihood::kBernoulli ? Activation::kSigmoid : Activation::kIdentity;
  std::vector<int> enc_hidden(config.hidden.rbegin(), config.hidden.rend());
  Network dec_net =
      Network::glorot(make_spec(config.latent_dim, config.hidden, dim, config.hidden_act, out_act), init_rng);
  Network enc_net = Network::glorot(
      make_spec(dim, enc_hidden, 2 * config.latent_dim, config.hidden_act, Activation::kIdentity), init_rng);

  DecoderModel decoder(std::move(dec_net), config.likelihood, config.sigma);
  EncoderModel encoder(std::move(enc_net));

  AdamConfig adam_cfg{config.learning_rate, config.beta1, config.beta2, 1e-8};
  Network dec_work = decoder.network();
  Vector dec_params = dec_work.params();
  Vector enc_params = encoder.network().params();
  Adam dec_opt(dec_params.size(), adam_cfg);
  Adam enc_opt(enc_params.size(), adam_cfg);

  std::vector<Eigen::Index> order(static_cast<std::size_t>(data.cols()));
  std::iota(order.begin(), order.end(), 0);

  TrainResult result{decoder, encoder, {}};
  long iteration = 0;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[shuffle_rng.index(i)]);
    double elbo_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(config.batch_size)) {
      const std::size_t stop = std::min(order.size(), start + static_cast<std::size_t>(config.batch_size));
      Matrix batch(dim, static_cast<Eigen::Index>(stop - start));
      for (std::size_t k = start; k < stop; ++k) batch.col(static_cast<Eigen::Index>(k - start)) = data.col(order[k]);
      const Matrix noise = standard_normal(noise_rng, config.latent_dim, batch.cols());

      BatchElbo step;
      try {
        step = batch_elbo(result.decoder, result.encoder, batch, noise, true);
      } catch (const NumericalError& e) {
        throw NumericalError("train_vae diverged at iteration " + std::to_string(iteration) + ": " + e.what());
      }
      const double total = step.elbo.sum();
      if (!std::isfinite(total) || !step.decoder_grad.allFinite() || !step.encoder_grad.allFinite()) {
        throw NumericalError("train_vae diverged at iteration " + std::to_string(iteration));
      }
      elbo_sum += total;
      const double scale = -1.0 / static_cast<double>(batch.cols());
      dec_opt.step(dec_params, scale * step.decoder_grad);
      enc_opt.step(enc_params, scale * step.encoder_grad);
      dec_work.set_params(dec_params);
      result.decoder = DecoderModel(dec_work, config.likelihood, config.sigma);
      result.encoder.network().set_params(enc_params);
      ++iteration;
    }
    result.elbo_trace.push_back(elbo_sum / static_cast<double>(data.cols()));
  }
  return result;
}

}  // namespace xcoding
