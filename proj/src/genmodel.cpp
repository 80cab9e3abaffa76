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

#include "xcoding/genmodel.hpp"

#include "xcoding/error.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace xcoding {

std::string to_string(Likelihood lik) { return lik == Likelihood::kBernoulli ? "bernoulli" : "gaussian"; }

Likelihood parse_likelihood(const std::string& name) {
  if (name == "bernoulli") return Likelihood::kBernoulli;
  if (name == "gaussian") return Likelihood::kGaussian;
  throw ConfigError("unknown likelihood '" + name + "'");
}

DecoderModel::DecoderModel(Network net, Likelihood likelihood, double sigma)
    : net_(std::move(net)), likelihood_(likelihood), sigma_(sigma) {
  if (likelihood_ == Likelihood::kBernoulli && net_.spec().activations.back() != Activation::kSigmoid) {
    throw ConfigError("bernoulli decoder must end in a sigmoid");
  }
  if (likelihood_ == Likelihood::kGaussian && !(std::isfinite(sigma_) && sigma_ > 0)) {
    throw ConfigError("gaussian decoder needs a finite positive sigma");
  }
}

EncoderModel::EncoderModel(Network net) : net_(std::move(net)) {
  if (net_.output_dim() % 2 != 0) throw ConfigError("encoder output must hold mean and log-std");
}

EncoderModel::Posterior EncoderModel::encode(const Vector& t) const {
  Vector out = net_.forward(t);
  const int d = latent_dim();
  return {out.head(d), out.tail(d)};
}

EvidenceMask::EvidenceMask(std::vector<int> indices, std::vector<double> values) {
  if (indices.size() != values.size()) throw ConfigError("evidence indices and values differ in length");
  std::vector<std::size_t> order(indices.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return indices[a] < indices[b]; });
  for (std::size_t k : order) {
    if (!indices_.empty() && indices_.back() == indices[k]) {
      throw ConfigError("duplicate evidence index " + std::to_string(indices[k]));
    }
    if (indices[k] < 0) throw ConfigError("negative evidence index");
    if (!std::isfinite(values[k])) throw ConfigError("non-finite evidence value");
    indices_.push_back(indices[k]);
    values_.push_back(values[k]);
  }
}

EvidenceMask EvidenceMask::from_vector(const Vector& t, std::vector<int> indices) {
  std::vector<double> values;
  values.reserve(indices.size());
  for (int i : indices) {
    if (i < 0 || i >= t.size()) throw ConfigError("evidence index out of range");
    values.push_back(t[i]);
  }
  return EvidenceMask(std::move(indices), std::move(values));
}

std::vector<int> EvidenceMask::complement(int output_dim) const {
  std::vector<int> out;
  std::size_t k = 0;
  for (int i = 0; i < output_dim; ++i) {
    if (k < indices_.size() && indices_[k] == i) {
      ++k;
    } else {
      out.push_back(i);
    }
  }
  return out;
}

void EvidenceMask::validate(const DecoderModel& model) const {
  for (std::size_t k = 0; k < indices_.size(); ++k) {
    if (indices_[k] >= model.output_dim()) {
      throw ConfigError("evidence index " + std::to_string(indices_[k]) + " outside output of size " +
                        std::to_string(model.output_dim()));
    }
    if (model.likelihood() == Likelihood::kBernoulli && values_[k] != 0.0 && values_[k] != 1.0) {
      throw ConfigError("bernoulli evidence must be 0 or 1");
    }
  }
}

DecodeResult decode_forward(const DecoderModel& model, const Vector& z) {
  if (z.size() != model.latent_dim()) throw ConfigError("latent vector has the wrong dimension");
  DecodeResult result;
  result.params = model.network().forward(Matrix(z), &result.tape).col(0);
  return result;
}

Matrix decode_batch(const DecoderModel& model, const Matrix& z, Tape* tape) {
  return model.network().forward(z, tape);
}

double log_prior(const Vector& z) {
  return -0.5 * static_cast<double>(z.size()) * kLog2Pi - 0.5 * z.squaredNorm();
}

double log_density_term(Likelihood lik, double sigma, double param, double value) {
  if (lik == Likelihood::kBernoulli) {
    const double p = std::clamp(param, kProbClamp, 1.0 - kProbClamp);
    if (value == 1.0) return std::log(p);
    if (value == 0.0) return std::log1p(-p);
    return value * std::log(p) + (1.0 - value) * std::log1p(-p);
  }
  const double r = (value - param) / sigma;
  return -0.5 * (kLog2Pi + 2.0 * std::log(sigma)) - 0.5 * r * r;
}

namespace {

// dL/d(last pre-activation) for bernoulli, dL/d(mean) for gaussian.
double log_density_slope(Likelihood lik, double sigma, double param, double value) {
  if (lik == Likelihood::kBernoulli) {
    if (param < kProbClamp || param > 1.0 - kProbClamp) return 0.0;
    return value - param;
  }
  return (value - param) / (sigma * sigma);
}

}  // namespace

double log_likelihood_masked(const DecoderModel& model, const Vector& z, const EvidenceMask& ev) {
  if (ev.empty()) return 0.0;
  const Vector params = decode_forward(model, z).params;
  double total = 0.0;
  for (std::size_t k = 0; k < ev.size(); ++k) {
    total += log_density_term(model.likelihood(), model.sigma(), params[ev.indices()[k]], ev.values()[k]);
  }
  return total;
}

double log_likelihood_at(const DecoderModel& model, const Vector& params, const std::vector<int>& indices,
                         const Vector& target) {
  double total = 0.0;
  for (int i : indices) total += log_density_term(model.likelihood(), model.sigma(), params[i], target[i]);
  return total;
}

double log_joint(const DecoderModel& model, const Vector& z, const EvidenceMask& ev) {
  return log_prior(z) + log_likelihood_masked(model, z, ev);
}

Vector log_joint_batch(const DecoderModel& model, const Matrix& z, const EvidenceMask& ev, Matrix* grad) {
  const Eigen::Index n = z.cols();
  Vector values = -0.5 * static_cast<double>(z.rows()) * kLog2Pi * Vector::Ones(n) -
                  0.5 * z.colwise().squaredNorm().transpose();
  if (grad) *grad = -z;
  if (ev.empty()) return values;

  Tape tape;
  const Matrix params = model.network().forward(z, grad ? &tape : nullptr);
  Matrix upstream;
  if (grad) upstream = Matrix::Zero(params.rows(), n);
  for (std::size_t k = 0; k < ev.size(); ++k) {
    const int row = ev.indices()[k];
    const double x = ev.values()[k];
    for (Eigen::Index j = 0; j < n; ++j) {
      values[j] += log_density_term(model.likelihood(), model.sigma(), params(row, j), x);
      if (grad) upstream(row, j) = log_density_slope(model.likelihood(), model.sigma(), params(row, j), x);
    }
  }
  if (grad) {
    const bool at_pre = model.likelihood() == Likelihood::kBernoulli;
    *grad += model.network().backward(tape, upstream, at_pre, nullptr);
  }
  return values;
}

Vector grad_log_joint_z(const DecoderModel& model, const Vector& z, const EvidenceMask& ev) {
  if (z.size() != model.latent_dim()) throw ConfigError("latent vector has the wrong dimension");
  Matrix grad;
  log_joint_batch(model, Matrix(z), ev, &grad);
  return grad.col(0);
}

Vector sample_output(const DecoderModel& model, const Vector& params, Rng& rng, bool means_only) {
  if (means_only) return params;
  Vector out(params.size());
  if (model.likelihood() == Likelihood::kGaussian) {
    for (Eigen::Index i = 0; i < params.size(); ++i) out[i] = params[i] + model.sigma() * rng.normal();
    return out;
  }
  for (Eigen::Index i = 0; i < params.size(); ++i) out[i] = rng.uniform() < params[i] ? 1.0 : 0.0;
  return out;
}

}  // namespace xcoding
