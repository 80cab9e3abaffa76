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
#include "xcoding/toydata.hpp"

#include <doctest.h>

#include "oracles.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>

using namespace xcoding;

namespace {

DecoderModel zero_bernoulli(int d, int D) {
  Network net(make_spec(d, {}, D, Activation::kRelu, Activation::kSigmoid));
  for (auto& layer : net.layers()) {
    layer.weight.setZero();
    layer.bias.setZero();
  }
  return DecoderModel(net, Likelihood::kBernoulli);
}

DecoderModel random_decoder(Likelihood lik, std::uint64_t seed) {
  Rng rng(seed);
  const Activation out = lik == Likelihood::kBernoulli ? Activation::kSigmoid : Activation::kIdentity;
  Network net = Network::glorot(make_spec(2, {7}, 5, Activation::kTanh, out), rng);
  for (auto& layer : net.layers()) layer.weight *= 2.0;
  return DecoderModel(net, lik, 0.3);
}

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / ("xcoding_test_" + name)).string();
}

}  // namespace

TEST_CASE("decode_forward") {
  const DecoderModel zero = zero_bernoulli(2, 4);
  const Vector p = decode_forward(zero, Vector::Constant(2, 0.7)).params;
  CHECK(p.isApprox(Vector::Constant(4, 0.5)));

  Network lin(make_spec(2, {}, 2, Activation::kRelu, Activation::kIdentity));
  lin.layers()[0].weight.setIdentity();
  lin.layers()[0].bias.setZero();
  Vector z(2);
  z << 0.3, -1.2;
  CHECK(decode_forward(DecoderModel(lin, Likelihood::kGaussian), z).params == z);

  // 2 -> 3 by hand: relu then identity.
  Network hand(make_spec(2, {2}, 3, Activation::kRelu, Activation::kIdentity));
  hand.layers()[0].weight << 1, 0, 1, -1;
  hand.layers()[0].bias << 0, 0.5;
  hand.layers()[1].weight << 1, 1, 2, 0, 0, 3;
  hand.layers()[1].bias << 0, 1, 0;
  z << 1, 2;  // hidden = (1, relu(-0.5)) = (1, 0)
  const Vector out = decode_forward(DecoderModel(hand, Likelihood::kGaussian), z).params;
  CHECK(out[0] == 1.0);
  CHECK(out[1] == 3.0);
  CHECK(out[2] == 0.0);
}

TEST_CASE("bernoulli decoder must end in a sigmoid") {
  Network net(make_spec(2, {}, 3, Activation::kRelu, Activation::kIdentity));
  CHECK_THROWS_AS(DecoderModel(net, Likelihood::kBernoulli), ConfigError);
  CHECK_THROWS_AS(DecoderModel(net, Likelihood::kGaussian, 0.0), ConfigError);
}

TEST_CASE("masked likelihood closed forms") {
  const DecoderModel zero = zero_bernoulli(2, 6);
  const EvidenceMask ev({0, 2, 5}, {1, 0, 1});
  CHECK(log_likelihood_masked(zero, Vector::Zero(2), ev) == doctest::Approx(3 * std::log(0.5)));
  CHECK(log_likelihood_masked(zero, Vector::Zero(2), EvidenceMask()) == 0.0);

  Network lin(make_spec(2, {}, 2, Activation::kRelu, Activation::kIdentity));
  lin.layers()[0].weight.setIdentity();
  lin.layers()[0].bias.setZero();
  const DecoderModel gauss(lin, Likelihood::kGaussian, 1.0);
  Vector z(2);
  z << 0.4, -0.9;
  const EvidenceMask at_mean({0, 1}, {0.4, -0.9});
  CHECK(log_likelihood_masked(gauss, z, at_mean) == doctest::Approx(-2 * 0.5 * kLog2Pi));
}

TEST_CASE("log_joint") {
  const DecoderModel zero = zero_bernoulli(2, 4);
  CHECK(log_joint(zero, Vector::Zero(2), EvidenceMask()) == doctest::Approx(-std::log(2 * M_PI)));
  const EvidenceMask four({0, 1, 2, 3}, {1, 0, 1, 1});
  CHECK(log_joint(zero, Vector::Zero(2), four) == doctest::Approx(-std::log(2 * M_PI) + 4 * std::log(0.5)));

  for (auto lik : {Likelihood::kBernoulli, Likelihood::kGaussian}) {
    const DecoderModel m = random_decoder(lik, 5);
    Rng rng(9);
    for (int i = 0; i < 20; ++i) {
      const Vector z = standard_normal(rng, 2);
      const Vector t = decode_forward(m, standard_normal(rng, 2)).params;
      const Vector tb = (lik == Likelihood::kBernoulli) ? Vector((t.array() > 0.5).cast<double>()) : t;
      const EvidenceMask ev = EvidenceMask::from_vector(tb, {1, 3, 4});
      CHECK(log_joint(m, z, ev) == log_prior(z) + log_likelihood_masked(m, z, ev));
      CHECK(log_joint(m, z, ev) == doctest::Approx(oracle::log_joint(m, z, ev)).epsilon(1e-12));
      const EvidenceMask full = EvidenceMask::from_vector(tb, {0, 1, 2, 3, 4});
      CHECK(log_likelihood_masked(m, z, full) ==
            doctest::Approx(oracle::log_lik(m, oracle::decoder_params(m, z), full.indices(), full.values())));
    }
  }
}

TEST_CASE("grad_log_joint_z") {
  const DecoderModel zero = zero_bernoulli(2, 4);
  Vector z(2);
  z << 0.7, -0.2;
  CHECK(grad_log_joint_z(zero, z, EvidenceMask({0, 1}, {1, 0})).isApprox(-z));
  const DecoderModel m = random_decoder(Likelihood::kBernoulli, 3);
  CHECK(grad_log_joint_z(m, z, EvidenceMask()).isApprox(-z));

  for (auto lik : {Likelihood::kBernoulli, Likelihood::kGaussian}) {
    const DecoderModel model = random_decoder(lik, 4);
    Rng rng(17);
    for (int probe = 0; probe < 50; ++probe) {
      const Vector zp = standard_normal(rng, 2);
      const Vector t = lik == Likelihood::kBernoulli ? Vector::Ones(5) : standard_normal(rng, 5);
      const EvidenceMask ev = EvidenceMask::from_vector(t, {0, 2, 3});
      const Vector g = grad_log_joint_z(model, zp, ev);
      const Vector fd = oracle::fd_gradient([&](const Vector& x) { return oracle::log_joint(model, x, ev); }, zp);
      REQUIRE(oracle::rel_err(g, fd) <= 1e-5);
    }
  }
}

TEST_CASE("log_joint_batch agrees with pointwise evaluation") {
  const DecoderModel m = random_decoder(Likelihood::kBernoulli, 8);
  Rng rng(1);
  const Matrix z = standard_normal(rng, 2, 13);
  const EvidenceMask ev({1, 4}, {1, 0});
  Matrix grad;
  const Vector lj = log_joint_batch(m, z, ev, &grad);
  for (Eigen::Index j = 0; j < z.cols(); ++j) {
    CHECK(lj[j] == doctest::Approx(log_joint(m, z.col(j), ev)).epsilon(1e-13));
    CHECK(grad.col(j).isApprox(grad_log_joint_z(m, z.col(j), ev), 1e-12));
  }
}

TEST_CASE("evidence mask validation") {
  CHECK_THROWS_AS(EvidenceMask({1, 1}, {0, 0}), ConfigError);
  CHECK_THROWS_AS(EvidenceMask({1}, {0, 1}), ConfigError);
  const EvidenceMask sorted({3, 1}, {1, 0});
  CHECK(sorted.indices() == std::vector<int>{1, 3});
  CHECK(sorted.values() == std::vector<double>{0, 1});
  CHECK(sorted.complement(5) == std::vector<int>{0, 2, 4});
  const DecoderModel m = zero_bernoulli(2, 4);
  CHECK_THROWS_AS(EvidenceMask({7}, {1}).validate(m), ConfigError);
  CHECK_THROWS_AS(EvidenceMask({0}, {0.5}).validate(m), ConfigError);
}

TEST_CASE("gaussian kl closed form") {
  CHECK(gaussian_kl(Vector::Zero(3), Vector::Zero(3)) == 0.0);
  CHECK(gaussian_kl(Vector::Ones(1), Vector::Zero(1)) == doctest::Approx(0.5));
  CHECK(gaussian_kl(Vector::Ones(2), Vector::Zero(2)) == doctest::Approx(1.0));
}

TEST_CASE("train_vae improves the ELBO on bars") {
  const Matrix data = make_bars(400, 3);
  TrainConfig cfg;
  cfg.hidden = {32};
  cfg.epochs = 15;
  cfg.seed = 4;
  TrainConfig untrained = cfg;
  untrained.epochs = 0;
  const TrainResult before = train_vae(data, untrained);
  const TrainResult after = train_vae(data, cfg);
  CHECK(after.elbo_trace.size() == 15);
  Rng r1(1), r2(1);
  const double e0 = evaluate_elbo(before.decoder, before.encoder, data, r1);
  const double e1 = evaluate_elbo(after.decoder, after.encoder, data, r2);
  CHECK(e1 > e0);
  const TrainResult again = train_vae(data, cfg);
  CHECK(serialize_model(again.decoder, &again.encoder) == serialize_model(after.decoder, &after.encoder));
}

TEST_CASE("model files round trip") {
  const DecoderModel m = random_decoder(Likelihood::kGaussian, 21);
  Rng rng(2);
  Network enc_net = Network::glorot(make_spec(5, {4}, 4, Activation::kRelu, Activation::kIdentity), rng);
  const EncoderModel enc(enc_net);
  const std::string path = temp_path("model.txt");
  save_model(path, m, &enc);
  const ModelBundle back = load_model(path);
  REQUIRE(back.encoder.has_value());
  CHECK(back.decoder.sigma() == m.sigma());
  CHECK(back.decoder.likelihood() == Likelihood::kGaussian);
  for (int i = 0; i < 100; ++i) {
    const Vector z = standard_normal(rng, 2);
    REQUIRE(decode_forward(back.decoder, z).params == decode_forward(m, z).params);
  }
  CHECK(serialize_model(back.decoder, &*back.encoder) == serialize_model(m, &enc));
  std::filesystem::remove(path);
}

TEST_CASE("model parse errors") {
  const DecoderModel m = random_decoder(Likelihood::kBernoulli, 1);
  const std::string text = serialize_model(m);
  CHECK_THROWS_AS(parse_model(text.substr(0, text.size() / 2)), ParseError);
  std::string wrong = text;
  wrong.replace(0, wrong.find('\n'), "XCVAE 9");
  CHECK_THROWS_AS(parse_model(wrong), VersionError);
  CHECK_THROWS_AS(parse_model("not a model"), ParseError);
  CHECK_THROWS_AS(load_model("/nonexistent/model.txt"), Error);
}

TEST_CASE("dataset io") {
  const Matrix data = make_bars(5, 1);
  const std::string path = temp_path("data.csv");
  save_dataset_csv(path, data);
  CHECK(load_dataset_csv(path) == data);
  std::ofstream(path) << "1,0\n1\n";
  CHECK_THROWS_AS(load_dataset_csv(path), ParseError);
  std::filesystem::remove(path);
}

TEST_CASE("sample_output") {
  const DecoderModel m = random_decoder(Likelihood::kGaussian, 2);
  Rng rng(1);
  const Vector params = decode_forward(m, Vector::Zero(2)).params;
  CHECK(sample_output(m, params, rng, true) == params);
  CHECK(sample_output(m, params, rng, false) != params);
  const DecoderModel b = zero_bernoulli(2, 2000);
  const Vector bits = sample_output(b, Vector::Constant(2000, 0.5), rng, false);
  CHECK(((bits.array() == 0) || (bits.array() == 1)).all());
  CHECK(bits.mean() == doctest::Approx(0.5).epsilon(0.1));
}
