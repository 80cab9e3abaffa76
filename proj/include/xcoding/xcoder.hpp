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

#include <string>
#include <variant>
#include <vector>

namespace xcoding {

enum class XCoderKind { kGvi, kPlanar, kFcn };

std::string to_string(XCoderKind kind);
XCoderKind parse_xcoder_kind(const std::string& name);

// FCN cross-coders assemble the full Jacobian; refuse beyond this latent size.
inline constexpr int kFcnMaxDim = 4;
// ln() arguments of planar log-det terms below this are rejected.
inline constexpr double kPlanarLogFloor = 1e-12;
inline constexpr int kDefaultFlowDepth = 10;

// Affine map z = W eps + b.
struct GviParams {
  Matrix weight;
  Vector bias;
};

// One planar layer h + u_hat * tanh(w.h + b). `u` is the raw parameter; the
// effective u_hat is constrained so that w.u_hat > -1.
struct PlanarLayerParams {
  Vector u;
  Vector w;
  double b = 0.0;
};

struct PlanarStack {
  std::vector<PlanarLayerParams> layers;
};

// Square network d -> ... -> d, tanh hidden layers, identity output.
struct FcnParams {
  Network net;
};

struct XForward {
  Vector z;
  double logdet = 0.0;
  bool singular = false;
  int orientation = 1;  // sign of the Jacobian determinant
};

/// A cross-coder maps base noise eps ~ N(0, I) to latent z.
///
/// All three families expose the same flat parameter vector interface so the
/// optimizers can treat them uniformly.
class XCoder {
 public:
  explicit XCoder(GviParams p);
  explicit XCoder(PlanarStack s);
  explicit XCoder(FcnParams p);

  XCoderKind kind() const;
  int dim() const { return dim_; }
  // False for FCN: the network is not guaranteed one-to-one, so the C-ELBO
  // may not be a lower bound.
  bool bound_valid() const { return kind() != XCoderKind::kFcn; }

  const GviParams& gvi() const { return std::get<GviParams>(params_); }
  const PlanarStack& planar() const { return std::get<PlanarStack>(params_); }
  const FcnParams& fcn() const { return std::get<FcnParams>(params_); }

  Eigen::Index num_params() const;
  Vector params() const;
  void set_params(const Eigen::Ref<const Vector>& flat);

 private:
  std::variant<GviParams, PlanarStack, FcnParams> params_;
  int dim_;
};

// Planar invertibility constraint: m(a) = -1 + 1e-6 + softplus(a + c) with c
// chosen so that m(0) = 0. Then u_hat = u + (m(w.u) - w.u) w / |w|^2 and
// w.u_hat = m(w.u) > -1 + 1e-6.
double planar_constraint(double a);
double planar_constraint_slope(double a);
Vector planar_effective_u(const PlanarLayerParams& p);

XForward gvi_apply(const GviParams& p, const Vector& eps);

struct PlanarStep {
  Vector h;
  double logdet_term;
};
// Single layer with an already-constrained u_hat.
PlanarStep planar_layer_apply(const Vector& u_hat, const Vector& w, double b, const Vector& h);

XForward nf_apply(const PlanarStack& s, const Vector& eps);

// Jacobian dz/deps assembled one output row at a time by reverse passes.
Matrix fcn_jacobian(const FcnParams& p, const Vector& eps);
XForward fcn_apply(const FcnParams& p, const Vector& eps);

XForward xcoder_apply(const XCoder& xc, const Vector& eps);

struct XGradient {
  Vector params;
  Vector eps;
};

// Gradient of grad_z . z(psi, eps) + grad_logdet * logdet(psi, eps) with
// respect to the flat parameters and eps. Singular points yield a
// NumericalError.
XGradient xcoder_backprop(const XCoder& xc, const Vector& eps, const Vector& grad_z, double grad_logdet);

// GVI: W = I + 0.01 noise, b = 0. Planar: u ~ 0.01 noise, w ~ noise, b = 0.
// FCN: near-identity tanh network with `fcn_hidden` units per hidden layer.
XCoder init_xcoder(XCoderKind kind, int dim, int depth, Rng& rng, int fcn_hidden = 32);

std::string serialize_xcoder(const XCoder& xc);
XCoder parse_xcoder(const std::string& text);
void save_xcoder(const std::string& path, const XCoder& xc);
XCoder load_xcoder(const std::string& path);

}  // namespace xcoding
