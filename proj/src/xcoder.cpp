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

#include "xcoding/xcoder.hpp"

#include "xcoding/error.hpp"
#include "xcoding/textfmt.hpp"

#include <cmath>
#include <optional>

namespace xcoding {

std::string to_string(XCoderKind kind) {
  switch (kind) {
    case XCoderKind::kGvi: return "gvi";
    case XCoderKind::kPlanar: return "nf";
    case XCoderKind::kFcn: return "fcn";
  }
  return "?";
}

XCoderKind parse_xcoder_kind(const std::string& name) {
  if (name == "gvi") return XCoderKind::kGvi;
  if (name == "nf" || name == "planar") return XCoderKind::kPlanar;
  if (name == "fcn") return XCoderKind::kFcn;
  throw ConfigError("unknown cross-coder kind '" + name + "'");
}

namespace {

void validate_fcn(const Network& net) {
  const auto& spec = net.spec();
  if (spec.input_dim() != spec.output_dim()) throw ConfigError("FCN cross-coder must be square");
  if (spec.input_dim() > kFcnMaxDim) {
    throw ConfigError("FCN cross-coder needs the full Jacobian; latent dimension " +
                      std::to_string(spec.input_dim()) + " exceeds the limit of " + std::to_string(kFcnMaxDim));
  }
  for (std::size_t l = 0; l + 1 < spec.activations.size(); ++l) {
    if (spec.activations[l] != Activation::kTanh) throw ConfigError("FCN hidden layers must be tanh");
  }
  if (spec.activations.back() != Activation::kIdentity) throw ConfigError("FCN output layer must be identity");
}

}  // namespace

XCoder::XCoder(GviParams p) : params_(std::move(p)) {
  const auto& g = std::get<GviParams>(params_);
  if (g.weight.rows() != g.weight.cols() || g.weight.rows() != g.bias.size() || g.bias.size() < 1) {
    throw ConfigError("GVI weight must be square and match the bias");
  }
  if (!g.weight.allFinite() || !g.bias.allFinite()) throw ConfigError("GVI parameters must be finite");
  dim_ = static_cast<int>(g.bias.size());
}

XCoder::XCoder(PlanarStack s) : params_(std::move(s)) {
  const auto& st = std::get<PlanarStack>(params_);
  if (st.layers.empty()) throw ConfigError("planar stack needs at least one layer");
  dim_ = static_cast<int>(st.layers.front().u.size());
  if (dim_ < 1) throw ConfigError("planar layer dimension must be positive");
  for (const auto& l : st.layers) {
    if (l.u.size() != dim_ || l.w.size() != dim_) throw ConfigError("planar layers must share one dimension");
  }
}

XCoder::XCoder(FcnParams p) : params_(std::move(p)) {
  validate_fcn(std::get<FcnParams>(params_).net);
  dim_ = std::get<FcnParams>(params_).net.input_dim();
}

XCoderKind XCoder::kind() const {
  switch (params_.index()) {
    case 0: return XCoderKind::kGvi;
    case 1: return XCoderKind::kPlanar;
    default: return XCoderKind::kFcn;
  }
}

Eigen::Index XCoder::num_params() const {
  switch (kind()) {
    case XCoderKind::kGvi: return dim_ * dim_ + dim_;
    case XCoderKind::kPlanar: return static_cast<Eigen::Index>(planar().layers.size()) * (2 * dim_ + 1);
    case XCoderKind::kFcn: return fcn().net.num_params();
  }
  return 0;
}

Vector XCoder::params() const {
  Vector flat(num_params());
  Eigen::Index k = 0;
  switch (kind()) {
    case XCoderKind::kGvi:
      for (Eigen::Index i = 0; i < dim_; ++i)
        for (Eigen::Index j = 0; j < dim_; ++j) flat[k++] = gvi().weight(i, j);
      flat.tail(dim_) = gvi().bias;
      break;
    case XCoderKind::kPlanar:
      for (const auto& l : planar().layers) {
        flat.segment(k, dim_) = l.u;
        flat.segment(k + dim_, dim_) = l.w;
        flat[k + 2 * dim_] = l.b;
        k += 2 * dim_ + 1;
      }
      break;
    case XCoderKind::kFcn: flat = fcn().net.params(); break;
  }
  return flat;
}

void XCoder::set_params(const Eigen::Ref<const Vector>& flat) {
  if (flat.size() != num_params()) throw ConfigError("cross-coder parameter vector has the wrong length");
  Eigen::Index k = 0;
  switch (kind()) {
    case XCoderKind::kGvi: {
      auto& g = std::get<GviParams>(params_);
      for (Eigen::Index i = 0; i < dim_; ++i)
        for (Eigen::Index j = 0; j < dim_; ++j) g.weight(i, j) = flat[k++];
      g.bias = flat.tail(dim_);
      break;
    }
    case XCoderKind::kPlanar:
      for (auto& l : std::get<PlanarStack>(params_).layers) {
        l.u = flat.segment(k, dim_);
        l.w = flat.segment(k + dim_, dim_);
        l.b = flat[k + 2 * dim_];
        k += 2 * dim_ + 1;
      }
      break;
    case XCoderKind::kFcn: std::get<FcnParams>(params_).net.set_params(flat); break;
  }
}

// ---------------------------------------------------------------------------
// GVI

XForward gvi_apply(const GviParams& p, const Vector& eps) {
  if (eps.size() != p.bias.size()) throw ConfigError("gvi_apply: dimension mismatch");
  XForward out;
  out.z = p.weight * eps + p.bias;
  const LogAbsDet det = lu_logabsdet(p.weight);
  out.logdet = det.logabsdet;
  out.singular = det.singular();
  out.orientation = det.sign;
  return out;
}

// ---------------------------------------------------------------------------
// Planar flow

namespace {

constexpr double kPlanarMargin = 1e-6;
// Squared norms of w below this skip the constraint (w = 0 is an exact
// constant shift with unit Jacobian).
constexpr double kTinyNorm2 = 1e-24;

double planar_shift() {
  static const double c = std::log(std::expm1(1.0 - kPlanarMargin));
  return c;
}

}  // namespace

double planar_constraint(double a) { return -1.0 + kPlanarMargin + softplus(a + planar_shift()); }

double planar_constraint_slope(double a) { return sigmoid(a + planar_shift()); }

Vector planar_effective_u(const PlanarLayerParams& p) {
  const double n2 = p.w.squaredNorm();
  if (n2 < kTinyNorm2) return p.u;
  const double alpha = p.w.dot(p.u);
  return p.u + ((planar_constraint(alpha) - alpha) / n2) * p.w;
}

PlanarStep planar_layer_apply(const Vector& u_hat, const Vector& w, double b, const Vector& h) {
  if (u_hat.size() != h.size() || w.size() != h.size()) throw ConfigError("planar_layer_apply: dimension mismatch");
  const double t = std::tanh(w.dot(h) + b);
  const double arg = 1.0 + (1.0 - t * t) * u_hat.dot(w);
  if (!(std::abs(arg) >= kPlanarLogFloor)) {
    throw NumericalError("planar layer log-det argument below floor");
  }
  return {h + u_hat * t, std::log(std::abs(arg))};
}

XForward nf_apply(const PlanarStack& s, const Vector& eps) {
  XForward out;
  out.z = eps;
  for (const auto& layer : s.layers) {
    PlanarStep step = planar_layer_apply(planar_effective_u(layer), layer.w, layer.b, out.z);
    out.z = std::move(step.h);
    out.logdet += step.logdet_term;
  }
  return out;
}

// ---------------------------------------------------------------------------
// FCN

Matrix fcn_jacobian(const FcnParams& p, const Vector& eps) {
  const int d = p.net.input_dim();
  Tape tape;
  p.net.forward(Matrix(eps), &tape);
  Matrix jac(d, d);
  for (int i = 0; i < d; ++i) {
    Matrix upstream = Matrix::Zero(d, 1);
    upstream(i, 0) = 1.0;
    jac.row(i) = p.net.backward(tape, upstream, false, nullptr).col(0).transpose();
  }
  return jac;
}

XForward fcn_apply(const FcnParams& p, const Vector& eps) {
  if (eps.size() != p.net.input_dim()) throw ConfigError("fcn_apply: dimension mismatch");
  XForward out;
  out.z = p.net.forward(eps);
  const LogAbsDet det = lu_logabsdet(fcn_jacobian(p, eps));
  out.logdet = det.logabsdet;
  out.singular = det.singular();
  out.orientation = det.sign;
  return out;
}

XForward xcoder_apply(const XCoder& xc, const Vector& eps) {
  if (eps.size() != xc.dim()) throw ConfigError("cross-coder input has the wrong dimension");
  switch (xc.kind()) {
    case XCoderKind::kGvi: return gvi_apply(xc.gvi(), eps);
    case XCoderKind::kPlanar: return nf_apply(xc.planar(), eps);
    case XCoderKind::kFcn: return fcn_apply(xc.fcn(), eps);
  }
  return {};
}

// ---------------------------------------------------------------------------
// Reverse mode

namespace {

XGradient gvi_backprop(const GviParams& p, const Vector& eps, const Vector& grad_z, double grad_logdet) {
  const Eigen::Index d = eps.size();
  XGradient g;
  g.params.resize(d * d + d);
  Matrix gw = grad_z * eps.transpose();
  if (grad_logdet != 0.0) {
    Eigen::PartialPivLU<Matrix> lu(p.weight);
    if (lu_logabsdet(p.weight).singular()) throw NumericalError("GVI weight is singular");
    gw += grad_logdet * lu.inverse().transpose();
  }
  for (Eigen::Index i = 0; i < d; ++i)
    for (Eigen::Index j = 0; j < d; ++j) g.params[i * d + j] = gw(i, j);
  g.params.tail(d) = grad_z;
  g.eps = p.weight.transpose() * grad_z;
  return g;
}

XGradient planar_backprop(const PlanarStack& s, const Vector& eps, const Vector& grad_z, double grad_logdet) {
  const Eigen::Index d = eps.size();
  const std::size_t k = s.layers.size();
  std::vector<Vector> inputs(k);
  std::vector<Vector> u_hat(k);
  Vector h = eps;
  for (std::size_t i = 0; i < k; ++i) {
    inputs[i] = h;
    u_hat[i] = planar_effective_u(s.layers[i]);
    h = planar_layer_apply(u_hat[i], s.layers[i].w, s.layers[i].b, h).h;
  }

  XGradient g;
  g.params = Vector::Zero(static_cast<Eigen::Index>(k) * (2 * d + 1));
  Vector gh = grad_z;
  for (std::size_t i = k; i-- > 0;) {
    const auto& layer = s.layers[i];
    const Vector& w = layer.w;
    const Vector& uh = u_hat[i];
    const double t = std::tanh(w.dot(inputs[i]) + layer.b);
    const double slope = 1.0 - t * t;
    const double kappa = uh.dot(w);
    const double arg = 1.0 + slope * kappa;

    // Contributions through the residual output and through the log-det term.
    const double g_pre = gh.dot(uh) * slope + grad_logdet * (kappa / arg) * (-2.0 * t * slope);
    const double g_kappa = grad_logdet * slope / arg;
    Vector g_uhat = gh * t + g_kappa * w;
    Vector g_w = g_kappa * uh + g_pre * inputs[i];
    const double g_b = g_pre;
    Vector g_h = gh + g_pre * w;

    // Chain through the constraint u_hat(u, w).
    Vector g_u = g_uhat;
    const double n2 = w.squaredNorm();
    if (n2 >= kTinyNorm2) {
      const double alpha = w.dot(layer.u);
      const double excess = planar_constraint(alpha) - alpha;
      const double d_excess = planar_constraint_slope(alpha) - 1.0;
      const double gw_dot = g_uhat.dot(w);
      g_u += (gw_dot * d_excess / n2) * w;
      g_w += (excess / n2) * g_uhat + (gw_dot * d_excess / n2) * layer.u -
             (2.0 * gw_dot * excess / (n2 * n2)) * w;
    }
    const Eigen::Index off = static_cast<Eigen::Index>(i) * (2 * d + 1);
    g.params.segment(off, d) = g_u;
    g.params.segment(off + d, d) = g_w;
    g.params[off + 2 * d] = g_b;
    gh = std::move(g_h);
  }
  g.eps = std::move(gh);
  return g;
}

// Forward-mode Jacobian tracking through the network, then one reverse sweep
// over both the activations and the Jacobian products.
XGradient fcn_backprop(const FcnParams& p, const Vector& eps, const Vector& grad_z, double grad_logdet) {
  const auto& layers = p.net.layers();
  const std::size_t n = layers.size();
  const Eigen::Index d = eps.size();

  std::vector<Vector> h(n);       // input to layer l
  std::vector<Matrix> jac(n);     // d h_l / d eps
  std::vector<Vector> act(n);     // tanh outputs of hidden layers
  std::vector<Matrix> pre_jac(n); // W_l J_l for hidden layers
  h[0] = eps;
  jac[0] = Matrix::Identity(d, d);
  for (std::size_t l = 0; l + 1 < n; ++l) {
    act[l] = (layers[l].weight * h[l] + layers[l].bias).array().tanh().matrix();
    pre_jac[l] = layers[l].weight * jac[l];
    const Vector slope = (1.0 - act[l].array().square()).matrix();
    h[l + 1] = act[l];
    jac[l + 1] = slope.asDiagonal() * pre_jac[l];
  }
  const Matrix full_jac = layers[n - 1].weight * jac[n - 1];

  Matrix g_jac = Matrix::Zero(d, d);
  if (grad_logdet != 0.0) {
    if (lu_logabsdet(full_jac).singular()) throw NumericalError("FCN Jacobian is singular");
    g_jac = grad_logdet * full_jac.inverse().transpose();
  }

  std::vector<Eigen::Index> offset(n);
  Eigen::Index running = 0;
  for (std::size_t l = 0; l < n; ++l) {
    offset[l] = running;
    running += layers[l].weight.size() + layers[l].bias.size();
  }
  XGradient g;
  g.params = Vector::Zero(running);
  auto scatter = [&](std::size_t l, const Matrix& gw, const Vector& gb) {
    const Eigen::Index cols = layers[l].weight.cols();
    for (Eigen::Index i = 0; i < gw.rows(); ++i)
      for (Eigen::Index j = 0; j < cols; ++j) g.params[offset[l] + i * cols + j] += gw(i, j);
    g.params.segment(offset[l] + gw.rows() * cols, gb.size()) += gb;
  };

  // Output layer: z = W h + b, J = W J_prev.
  const auto& out_layer = layers[n - 1];
  scatter(n - 1, grad_z * h[n - 1].transpose() + g_jac * jac[n - 1].transpose(), grad_z);
  Vector g_h = out_layer.weight.transpose() * grad_z;
  g_jac = out_layer.weight.transpose() * g_jac;

  for (std::size_t l = n - 1; l-- > 0;) {
    const Vector slope = (1.0 - act[l].array().square()).matrix();
    const Matrix g_pre_jac = slope.asDiagonal() * g_jac;
    const Vector g_slope = g_jac.cwiseProduct(pre_jac[l]).rowwise().sum();
    const Vector g_act = g_h + g_slope.cwiseProduct(-2.0 * act[l]);
    const Vector g_pre = g_act.cwiseProduct(slope);
    scatter(l, g_pre * h[l].transpose() + g_pre_jac * jac[l].transpose(), g_pre);
    g_h = layers[l].weight.transpose() * g_pre;
    g_jac = layers[l].weight.transpose() * g_pre_jac;
  }
  g.eps = std::move(g_h);
  return g;
}

}  // namespace

XGradient xcoder_backprop(const XCoder& xc, const Vector& eps, const Vector& grad_z, double grad_logdet) {
  if (eps.size() != xc.dim() || grad_z.size() != xc.dim()) {
    throw ConfigError("xcoder_backprop: dimension mismatch");
  }
  switch (xc.kind()) {
    case XCoderKind::kGvi: return gvi_backprop(xc.gvi(), eps, grad_z, grad_logdet);
    case XCoderKind::kPlanar: return planar_backprop(xc.planar(), eps, grad_z, grad_logdet);
    case XCoderKind::kFcn: return fcn_backprop(xc.fcn(), eps, grad_z, grad_logdet);
  }
  return {};
}

// ---------------------------------------------------------------------------
// Initialization

XCoder init_xcoder(XCoderKind kind, int dim, int depth, Rng& rng, int fcn_hidden) {
  if (dim < 1) throw ConfigError("cross-coder dimension must be positive");
  switch (kind) {
    case XCoderKind::kGvi: {
      GviParams p{Matrix::Identity(dim, dim) + 0.01 * standard_normal(rng, dim, dim), Vector::Zero(dim)};
      return XCoder(std::move(p));
    }
    case XCoderKind::kPlanar: {
      if (depth < 1) throw ConfigError("flow depth must be at least 1");
      PlanarStack s;
      for (int i = 0; i < depth; ++i) {
        PlanarLayerParams l;
        l.u = 0.01 * standard_normal(rng, dim);
        l.w = standard_normal(rng, dim);
        l.b = 0.0;
        s.layers.push_back(std::move(l));
      }
      return XCoder(std::move(s));
    }
    case XCoderKind::kFcn: {
      if (dim > kFcnMaxDim) {
        throw ConfigError("FCN cross-coder needs the full Jacobian; latent dimension " + std::to_string(dim) +
                          " exceeds the limit of " + std::to_string(kFcnMaxDim));
      }
      const int hidden = std::max(fcn_hidden, dim);
      // tanh(a e)/a ~ e near the origin.
      constexpr double kGain = 0.2;
      Network net(make_spec(dim, {hidden}, dim, Activation::kTanh, Activation::kIdentity));
      auto& in = net.layers()[0];
      auto& out = net.layers()[1];
      in.weight = 0.01 * standard_normal(rng, hidden, dim);
      out.weight = 0.01 * standard_normal(rng, dim, hidden);
      for (int i = 0; i < dim; ++i) {
        in.weight(i, i) = kGain;
        out.weight(i, i) = 1.0 / kGain;
      }
      return XCoder(FcnParams{std::move(net)});
    }
  }
  throw ConfigError("unknown cross-coder kind");
}

// ---------------------------------------------------------------------------
// Files

std::string serialize_xcoder(const XCoder& xc) {
  using namespace textfmt;
  std::string out = header();
  out += "[xcoder]\nkind=" + to_string(xc.kind()) + "\nd=" + std::to_string(xc.dim()) + "\n";
  switch (xc.kind()) {
    case XCoderKind::kGvi:
      out += "k=1\n";
      for (Eigen::Index i = 0; i < xc.dim(); ++i) out += format_row(xc.gvi().weight.row(i).transpose()) + "\n";
      out += format_row(xc.gvi().bias) + "\n";
      break;
    case XCoderKind::kPlanar:
      out += "k=" + std::to_string(xc.planar().layers.size()) + "\n";
      for (const auto& l : xc.planar().layers) {
        out += format_row(l.u) + "\n" + format_row(l.w) + "\n" + format_double(l.b) + "\n";
      }
      break;
    case XCoderKind::kFcn: {
      out += "k=" + std::to_string(xc.fcn().net.layers().size()) + "\n";
      write_network(out, xc.fcn().net);
      for (const auto& layer : xc.fcn().net.layers()) {
        for (Eigen::Index i = 0; i < layer.weight.rows(); ++i) out += format_row(layer.weight.row(i).transpose()) + "\n";
        out += format_row(layer.bias) + "\n";
      }
      break;
    }
  }
  return out;
}

XCoder parse_xcoder(const std::string& text) {
  using namespace textfmt;
  const Document doc = parse(text);
  const Section* sec = doc.find("xcoder");
  if (!sec) throw ParseError("file has no [xcoder] section");
  const int d = parse_ints(sec->key("d"), sec->line).at(0);
  const int k = parse_ints(sec->key("k"), sec->line).at(0);
  if (d < 1 || k < 1) throw ParseError("cross-coder dimension and depth must be positive", sec->line);
  std::size_t cursor = 0;
  auto row = [&](std::size_t expect) -> const std::vector<double>& {
    if (cursor >= sec->rows.size()) throw ParseError("[xcoder] ends early", sec->line);
    const auto& r = sec->rows[cursor];
    if (r.size() != expect) throw ParseError("[xcoder] row has the wrong length", sec->row_lines[cursor]);
    ++cursor;
    return r;
  };
  auto as_vector = [](const std::vector<double>& r) {
    return Vector(Eigen::Map<const Vector>(r.data(), static_cast<Eigen::Index>(r.size())));
  };
  std::optional<XCoder> result;
  try {
    switch (parse_xcoder_kind(sec->key("kind"))) {
      case XCoderKind::kGvi: {
        GviParams p{Matrix(d, d), Vector(d)};
        for (int i = 0; i < d; ++i) p.weight.row(i) = as_vector(row(static_cast<std::size_t>(d))).transpose();
        p.bias = as_vector(row(static_cast<std::size_t>(d)));
        result.emplace(std::move(p));
        break;
      }
      case XCoderKind::kPlanar: {
        PlanarStack s;
        for (int i = 0; i < k; ++i) {
          PlanarLayerParams l;
          l.u = as_vector(row(static_cast<std::size_t>(d)));
          l.w = as_vector(row(static_cast<std::size_t>(d)));
          l.b = row(1)[0];
          s.layers.push_back(std::move(l));
        }
        result.emplace(std::move(s));
        break;
      }
      case XCoderKind::kFcn: {
        Network net = read_network(*sec, &cursor);
        result.emplace(FcnParams{std::move(net)});
        break;
      }
    }
  } catch (const ConfigError& e) {
    throw ParseError(e.what(), sec->line);
  }
  if (cursor != sec->rows.size()) throw ParseError("[xcoder] has trailing rows", sec->row_lines[cursor]);
  if (result->dim() != d) throw ParseError("[xcoder] dimension does not match d=", sec->line);
  return std::move(*result);
}

void save_xcoder(const std::string& path, const XCoder& xc) { textfmt::write_file(path, serialize_xcoder(xc)); }

XCoder load_xcoder(const std::string& path) { return parse_xcoder(textfmt::read_file(path)); }

}  // namespace xcoding
