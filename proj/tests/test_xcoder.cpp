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
#include "xcoding/xcoder.hpp"

#include <doctest.h>

#include "oracles.hpp"

#include <cmath>

using namespace xcoding;

namespace {

Vector vec(std::initializer_list<double> v) {
  Vector out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out[i++] = x;
  return out;
}

PlanarStack random_stack(int d, int k, Rng& rng, double scale = 1.0) {
  PlanarStack s;
  for (int l = 0; l < k; ++l) {
    s.layers.push_back({scale * standard_normal(rng, d), scale * standard_normal(rng, d), rng.normal()});
  }
  return s;
}

FcnParams random_fcn(int d, Rng& rng) {
  return {Network::glorot(make_spec(d, {6}, d, Activation::kTanh, Activation::kIdentity), rng)};
}

double fd_logdet(const std::function<Vector(const Vector&)>& f, const Vector& eps) {
  return std::log(std::abs(oracle::fd_jacobian(f, eps).determinant()));
}

}  // namespace

TEST_CASE("gvi_apply") {
  GviParams id{Matrix::Identity(2, 2), Vector::Zero(2)};
  const Vector e = vec({0.3, -0.4});
  auto r = gvi_apply(id, e);
  CHECK(r.z == e);
  CHECK(r.logdet == doctest::Approx(0.0));

  GviParams two{2 * Matrix::Identity(2, 2), Vector::Zero(2)};
  r = gvi_apply(two, e);
  CHECK(r.z == 2 * e);
  CHECK(r.logdet == doctest::Approx(2 * std::log(2.0)));

  Matrix shear(2, 2);
  shear << 1, 1, 0, 1;
  r = gvi_apply({shear, vec({1, 0})}, vec({1, 1}));
  CHECK(r.z == vec({3, 1}));
  CHECK(r.logdet == doctest::Approx(0.0));

  Matrix sing(2, 2);
  sing << 1, 2, 2, 4;
  CHECK(gvi_apply({sing, Vector::Zero(2)}, e).singular);
}

TEST_CASE("planar layer closed forms") {
  const Vector h = vec({0.5, -1.0});
  auto r = planar_layer_apply(Vector::Zero(2), vec({1, 2}), 0.3, h);
  CHECK(r.h == h);
  CHECK(r.logdet_term == doctest::Approx(0.0));

  const Vector u = vec({0.4, 0.1});
  r = planar_layer_apply(u, Vector::Zero(2), 0.7, h);
  CHECK(r.h.isApprox(h + u * std::tanh(0.7)));
  CHECK(r.logdet_term == doctest::Approx(0.0));

  r = planar_layer_apply(vec({1}), vec({1}), 0.0, vec({0}));
  CHECK(r.h[0] == doctest::Approx(0.0));
  CHECK(r.logdet_term == doctest::Approx(std::log(2.0)));

  // raw u = 0 stays the identity after the invertibility constraint
  PlanarLayerParams zero_u{Vector::Zero(2), vec({1, -2}), 0.5};
  CHECK(planar_effective_u(zero_u).isZero());
  CHECK(planar_constraint(0.0) == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("planar constraint keeps layers invertible") {
  Rng rng(4);
  for (int i = 0; i < 200; ++i) {
    PlanarLayerParams p{3 * standard_normal(rng, 3), standard_normal(rng, 3), rng.normal()};
    const Vector uh = planar_effective_u(p);
    REQUIRE(p.w.dot(uh) > -1.0);
  }
  for (double a : {-5.0, -0.3, 0.0, 0.8, 4.0}) {
    const double fd = (planar_constraint(a + 1e-6) - planar_constraint(a - 1e-6)) / 2e-6;
    CHECK(planar_constraint_slope(a) == doctest::Approx(fd).epsilon(1e-6));
  }
}

TEST_CASE("nf_apply") {
  PlanarStack id;
  for (int l = 0; l < 3; ++l) id.layers.push_back({Vector::Zero(2), vec({0.5, 1}), 0.2});
  const Vector e = vec({1.1, -0.3});
  auto r = nf_apply(id, e);
  CHECK(r.z.isApprox(e));
  CHECK(r.logdet == doctest::Approx(0.0));

  Rng rng(8);
  PlanarStack one = random_stack(2, 1, rng);
  const auto& l = one.layers[0];
  const auto step = planar_layer_apply(planar_effective_u(l), l.w, l.b, e);
  r = nf_apply(one, e);
  CHECK(r.z.isApprox(step.h));
  CHECK(r.logdet == doctest::Approx(step.logdet_term));
}

TEST_CASE("logdet matches finite-difference Jacobians") {
  Rng rng(12);
  for (int probe = 0; probe < 20; ++probe) {
    const Vector e = standard_normal(rng, 2);
    GviParams g{standard_normal(rng, 2, 2), standard_normal(rng, 2)};
    REQUIRE(oracle::rel_err(gvi_apply(g, e).logdet, fd_logdet([&](const Vector& x) { return gvi_apply(g, x).z; }, e)) <= 1e-4);
    for (int k : {1, 3, 10}) {
      const PlanarStack s = random_stack(2, k, rng);
      const double fd = fd_logdet([&](const Vector& x) { return nf_apply(s, x).z; }, e);
      REQUIRE(oracle::rel_err(nf_apply(s, e).logdet, fd) <= 1e-4);
    }
    const FcnParams f = random_fcn(2, rng);
    const Matrix fdj = oracle::fd_jacobian([&](const Vector& x) { return fcn_apply(f, x).z; }, e);
    REQUIRE((fcn_jacobian(f, e) - fdj).cwiseAbs().maxCoeff() <= 1e-5);
    REQUIRE(oracle::rel_err(fcn_apply(f, e).logdet, std::log(std::abs(fdj.determinant()))) <= 1e-4);
  }
}

TEST_CASE("fcn identity and singular cases") {
  Network net(make_spec(2, {}, 2, Activation::kRelu, Activation::kIdentity));
  net.layers()[0].weight.setIdentity();
  net.layers()[0].bias.setZero();
  const Vector e = vec({0.2, 0.9});
  auto r = fcn_apply({net}, e);
  CHECK(r.z == e);
  CHECK(r.logdet == doctest::Approx(0.0));

  net.layers()[0].weight << 1, 2, 1, 2;
  CHECK(fcn_apply({net}, e).singular);
}

TEST_CASE("xcoder_backprop gvi closed forms") {
  Rng rng(3);
  GviParams p{standard_normal(rng, 2, 2), standard_normal(rng, 2)};
  const XCoder xc(p);
  const Vector e = standard_normal(rng, 2);
  const Vector up = standard_normal(rng, 2);
  const XGradient g = xcoder_backprop(xc, e, up, 0.0);
  const Matrix outer = up * e.transpose();
  // flat layout: W row-major then b
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j) CHECK(g.params[i * 2 + j] == doctest::Approx(outer(i, j)));
  CHECK(g.params.tail(2).isApprox(up));

  const XGradient gl = xcoder_backprop(xc, e, Vector::Zero(2), 1.0);
  const Matrix inv_t = p.weight.inverse().transpose();
  auto logdet_w = [&](const Vector& flat) {
    Matrix w(2, 2);
    w << flat[0], flat[1], flat[2], flat[3];
    return std::log(std::abs(w.determinant()));
  };
  Vector w_flat(4);
  w_flat << p.weight(0, 0), p.weight(0, 1), p.weight(1, 0), p.weight(1, 1);
  const Vector fd = oracle::fd_gradient(logdet_w, w_flat, 1e-6);
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j) {
      CHECK(gl.params[i * 2 + j] == doctest::Approx(inv_t(i, j)).epsilon(1e-10));
      CHECK(std::abs(gl.params[i * 2 + j] - fd[i * 2 + j]) <= 1e-6);
    }
}

TEST_CASE("xcoder_backprop matches finite differences for every kind") {
  Rng rng(5);
  std::vector<XCoder> coders;
  coders.emplace_back(GviParams{standard_normal(rng, 2, 2), standard_normal(rng, 2)});
  coders.emplace_back(random_stack(2, 4, rng));
  coders.emplace_back(random_fcn(2, rng));
  for (const XCoder& xc : coders) {
    const Vector e = standard_normal(rng, 2);
    const Vector gz = standard_normal(rng, 2);
    const double gl = 0.7;
    const XGradient g = xcoder_backprop(xc, e, gz, gl);
    auto loss_p = [&](const Vector& p) {
      XCoder copy = xc;
      copy.set_params(p);
      const XForward f = xcoder_apply(copy, e);
      return gz.dot(f.z) + gl * f.logdet;
    };
    auto loss_e = [&](const Vector& x) {
      const XForward f = xcoder_apply(xc, x);
      return gz.dot(f.z) + gl * f.logdet;
    };
    CHECK(oracle::rel_err(g.params, oracle::fd_gradient(loss_p, xc.params())) <= 1e-6);
    CHECK(oracle::rel_err(g.eps, oracle::fd_gradient(loss_e, e)) <= 1e-6);
  }
}

TEST_CASE("init_xcoder is near identity") {
  Rng rng(1);
  const XCoder gvi = init_xcoder(XCoderKind::kGvi, 3, 0, rng);
  CHECK(std::abs(xcoder_apply(gvi, Vector::Zero(3)).logdet) <= 0.1);
  const XCoder nf = init_xcoder(XCoderKind::kPlanar, 2, 10, rng);
  CHECK(nf.planar().layers.size() == 10);
  const XCoder fcn = init_xcoder(XCoderKind::kFcn, 2, 0, rng);
  CHECK_FALSE(fcn.bound_valid());
  CHECK(nf.bound_valid());
  for (int i = 0; i < 50; ++i) {
    Vector e = standard_normal(rng, 2);
    e /= std::max(1.0, e.norm());
    REQUIRE((xcoder_apply(nf, e).z - e).norm() <= 0.05);
    REQUIRE(std::abs(xcoder_apply(nf, e).logdet) <= 0.1);
  }
  CHECK_THROWS_AS(init_xcoder(XCoderKind::kFcn, kFcnMaxDim + 1, 0, rng), ConfigError);
}

TEST_CASE("xcoder params and text round trip") {
  Rng rng(6);
  for (XCoderKind kind : {XCoderKind::kGvi, XCoderKind::kPlanar, XCoderKind::kFcn}) {
    XCoder xc = init_xcoder(kind, 2, 3, rng);
    Vector p = xc.params() + 0.1 * standard_normal(rng, xc.num_params());
    xc.set_params(p);
    CHECK(xc.params() == p);
    const XCoder back = parse_xcoder(serialize_xcoder(xc));
    CHECK(back.kind() == kind);
    CHECK(back.params() == p);
    CHECK(serialize_xcoder(back) == serialize_xcoder(xc));
  }
  CHECK(parse_xcoder_kind("nf") == XCoderKind::kPlanar);
  CHECK_THROWS_AS(parse_xcoder_kind("maf"), ConfigError);
  CHECK_THROWS_AS(parse_xcoder("XCVAE 1\n[xcoder]\nkind=gvi\n"), ParseError);
}
