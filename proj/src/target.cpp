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

#include "xcoding/target.hpp"

#include "xcoding/error.hpp"

#include <cmath>

namespace xcoding {

Vector TargetDensity::log_density_batch(const Matrix& z, Matrix* grad) const {
  Vector values(z.cols());
  if (grad) grad->resize(z.rows(), z.cols());
  for (Eigen::Index j = 0; j < z.cols(); ++j) {
    const Vector point = z.col(j);
    values[j] = log_density(point);
    if (grad) grad->col(j) = grad_log_density(point);
  }
  return values;
}

namespace {

DecoderModel observed_rows(const DecoderModel& model, const EvidenceMask& ev) {
  if (ev.empty()) return model;
  Network net = model.network();
  DenseLayer& last = net.layers().back();
  const auto k = static_cast<Eigen::Index>(ev.size());
  Matrix weight(k, last.weight.cols());
  Vector bias(k);
  for (Eigen::Index r = 0; r < k; ++r) {
    weight.row(r) = last.weight.row(ev.indices()[static_cast<std::size_t>(r)]);
    bias[r] = last.bias[ev.indices()[static_cast<std::size_t>(r)]];
  }
  NetworkSpec spec = net.spec();
  spec.sizes.back() = static_cast<int>(k);
  Network cut(spec);
  for (std::size_t l = 0; l + 1 < net.layers().size(); ++l) cut.layers()[l] = net.layers()[l];
  cut.layers().back() = DenseLayer{weight, bias};
  return DecoderModel(cut, model.likelihood(), model.sigma());
}

EvidenceMask renumbered(const EvidenceMask& ev) {
  std::vector<int> idx(ev.size());
  for (std::size_t k = 0; k < ev.size(); ++k) idx[k] = static_cast<int>(k);
  return EvidenceMask(idx, std::vector<double>(ev.values().begin(), ev.values().end()));
}

}  // namespace

PosteriorTarget::PosteriorTarget(DecoderModel model, EvidenceMask evidence)
    : model_(std::move(model)), evidence_(std::move(evidence)), observed_(model_), observed_evidence_(evidence_) {
  evidence_.validate(model_);
  observed_ = observed_rows(model_, evidence_);
  observed_evidence_ = renumbered(evidence_);
}

double PosteriorTarget::log_density(const Vector& z) const {
  return log_joint(observed_, z, observed_evidence_);
}

Vector PosteriorTarget::grad_log_density(const Vector& z) const {
  return grad_log_joint_z(observed_, z, observed_evidence_);
}

Vector PosteriorTarget::log_density_batch(const Matrix& z, Matrix* grad) const {
  return log_joint_batch(observed_, z, observed_evidence_, grad);
}

PosteriorTarget posterior_target(const DecoderModel& model, const EvidenceMask& evidence) {
  return PosteriorTarget(model, evidence);
}

GmmTarget::GmmTarget(std::vector<GmmComponent> components) : components_(std::move(components)) {
  if (components_.empty()) throw ConfigError("GMM needs at least one component");
  dim_ = static_cast<int>(components_.front().mean.size());
  double total = 0.0;
  for (const auto& c : components_) {
    if (!(c.weight > 0)) throw ConfigError("GMM weights must be positive");
    if (c.mean.size() != dim_ || c.covariance.rows() != dim_ || c.covariance.cols() != dim_) {
      throw ConfigError("GMM components must share one dimension");
    }
    total += c.weight;
  }
  if (std::abs(total - 1.0) > 1e-9) throw ConfigError("GMM weights must sum to 1");
  for (const auto& c : components_) {
    Factor f{Eigen::LLT<Matrix>(c.covariance), Matrix(), 0.0};
    if (f.llt.info() != Eigen::Success) throw ConfigError("GMM covariance is not positive-definite");
    f.lower = f.llt.matrixL();
    const double logdet = 2.0 * f.lower.diagonal().array().log().sum();
    f.log_norm = std::log(c.weight) - 0.5 * dim_ * kLog2Pi - 0.5 * logdet;
    factors_.push_back(std::move(f));
  }
}

Vector GmmTarget::component_log_densities(const Vector& z) const {
  Vector out(static_cast<Eigen::Index>(components_.size()));
  for (std::size_t k = 0; k < components_.size(); ++k) {
    const Vector white = factors_[k].lower.triangularView<Eigen::Lower>().solve(z - components_[k].mean);
    out[static_cast<Eigen::Index>(k)] = factors_[k].log_norm - 0.5 * white.squaredNorm();
  }
  return out;
}

double GmmTarget::log_density(const Vector& z) const { return log_sum_exp(component_log_densities(z)); }

Vector GmmTarget::grad_log_density(const Vector& z) const {
  const Vector logs = component_log_densities(z);
  const double total = log_sum_exp(logs);
  Vector grad = Vector::Zero(dim_);
  for (std::size_t k = 0; k < components_.size(); ++k) {
    const double resp = std::exp(logs[static_cast<Eigen::Index>(k)] - total);
    grad -= resp * factors_[k].llt.solve(z - components_[k].mean);
  }
  return grad;
}

Matrix GmmTarget::sample(Rng& rng, Eigen::Index n) const {
  Matrix out(dim_, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    double u = rng.uniform();
    std::size_t k = 0;
    while (k + 1 < components_.size() && u > components_[k].weight) {
      u -= components_[k].weight;
      ++k;
    }
    out.col(j) = components_[k].mean + factors_[k].lower * standard_normal(rng, dim_);
  }
  return out;
}

GmmTarget make_two_mode_gmm(int dim, double offset) {
  Vector shift = Vector::Zero(dim);
  shift[0] = offset;
  return GmmTarget({{0.5, -shift, Matrix::Identity(dim, dim)}, {0.5, shift, Matrix::Identity(dim, dim)}});
}

}  // namespace xcoding
