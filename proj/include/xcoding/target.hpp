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
#include "xcoding/numkit.hpp"

#include <vector>

namespace xcoding {

// Unnormalized log-density over the latent space with its gradient.
class TargetDensity {
 public:
  virtual ~TargetDensity() = default;
  virtual int dim() const = 0;
  virtual double log_density(const Vector& z) const = 0;
  virtual Vector grad_log_density(const Vector& z) const = 0;
  // Columns of `z` are points; fills `grad` column-wise when non-null.
  virtual Vector log_density_batch(const Matrix& z, Matrix* grad) const;
};

// log p(z) + log p(x | z) for a decoder and evidence.
class PosteriorTarget final : public TargetDensity {
 public:
  PosteriorTarget(DecoderModel model, EvidenceMask evidence);

  int dim() const override { return model_.latent_dim(); }
  double log_density(const Vector& z) const override;
  Vector grad_log_density(const Vector& z) const override;
  Vector log_density_batch(const Matrix& z, Matrix* grad) const override;

  const DecoderModel& model() const { return model_; }
  const EvidenceMask& evidence() const { return evidence_; }

 private:
  DecoderModel model_;
  EvidenceMask evidence_;
  // Last layer cut down to the observed rows, with evidence renumbered to match.
  DecoderModel observed_;
  EvidenceMask observed_evidence_;
};

PosteriorTarget posterior_target(const DecoderModel& model, const EvidenceMask& evidence);

struct GmmComponent {
  double weight;
  Vector mean;
  Matrix covariance;
};

/// Normalized Gaussian mixture density.
class GmmTarget final : public TargetDensity {
 public:
  explicit GmmTarget(std::vector<GmmComponent> components);

  int dim() const override { return dim_; }
  double log_density(const Vector& z) const override;
  Vector grad_log_density(const Vector& z) const override;

  // log(w_k) + log N(z; mu_k, Sigma_k) for every component.
  Vector component_log_densities(const Vector& z) const;
  // Exact draws, one per column.
  Matrix sample(Rng& rng, Eigen::Index n) const;

  const std::vector<GmmComponent>& components() const { return components_; }

 private:
  struct Factor {
    Eigen::LLT<Matrix> llt;
    Matrix lower;
    double log_norm;  // log w - d/2 log 2pi - 1/2 log|Sigma|
  };
  std::vector<GmmComponent> components_;
  std::vector<Factor> factors_;
  int dim_;
};

// Equal-weight two-component mixture with identity covariances at +-offset
// along the first axis.
GmmTarget make_two_mode_gmm(int dim, double offset);

}  // namespace xcoding
