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
#include "xcoding/metrics.hpp"
#include "xcoding/samplers.hpp"
#include "xcoding/target.hpp"
#include "xcoding/toydata.hpp"

#include <doctest.h>

#include "oracles.hpp"

#include <algorithm>
#include <cmath>

using namespace xcoding;

namespace {

GmmTarget unit_gaussian(int d) { return GmmTarget({{1.0, Vector::Zero(d), Matrix::Identity(d, d)}}); }

DecoderModel flat_bernoulli(int D, double logit) {
  Network net(make_spec(2, {}, D, Activation::kRelu, Activation::kSigmoid));
  net.layers()[0].weight.setZero();
  net.layers()[0].bias.setConstant(logit);
  return DecoderModel(net, Likelihood::kBernoulli);
}

double oracle_tv(const Matrix& p, const Matrix& q) { return 0.5 * (p - q).cwiseAbs().sum(); }

}  // namespace

TEST_CASE("hmc with a tiny step accepts almost everything") {
  HmcConfig cfg;
  cfg.step_size = 1e-3;
  cfg.burn_in = 0;
  cfg.n_samples = 1000;
  const HmcResult r = hmc_sample(unit_gaussian(2), cfg);
  CHECK(r.accept_rates[0] >= 0.99);
  CHECK(r.samples.cols() == 1000);
  CHECK(r.final_states.size() == 1);
}

TEST_CASE("hmc moments on a unit gaussian") {
  HmcConfig cfg;
  cfg.step_size = 0.3;
  cfg.burn_in = 200;
  cfg.n_samples = 5000;
  cfg.n_chains = 4;
  cfg.seed = 3;
  const HmcResult r = hmc_sample(unit_gaussian(2), cfg);
  REQUIRE(r.samples.cols() == 20000);
  for (int i = 0; i < 2; ++i) {
    const Vector x = r.samples.row(i);
    const double mean = x.mean();
    const double var = (x.array() - mean).square().mean();
    // chains are autocorrelated; allow a few effective-sample-size worth of slack
    CHECK(std::abs(mean) <= 3 * std::sqrt(3.0 / 20000));
    CHECK(std::abs(var - 1) <= 0.1);
  }
}

TEST_CASE("hmc chains continue from saved states") {
  HmcConfig cfg;
  cfg.burn_in = 50;
  cfg.n_samples = 0;
  cfg.n_chains = 2;
  const HmcResult warm = hmc_sample(unit_gaussian(3), cfg);
  REQUIRE(warm.final_states.size() == 2);
  HmcConfig next = cfg;
  next.burn_in = 0;
  next.n_samples = 5;
  next.initial_states = warm.final_states;
  const HmcResult a = hmc_sample(unit_gaussian(3), next);
  const HmcResult b = hmc_sample(unit_gaussian(3), next);
  CHECK(a.samples == b.samples);
  next.initial_states.pop_back();
  CHECK_THROWS_AS(hmc_sample(unit_gaussian(3), next), ConfigError);
}

TEST_CASE("hmc on a two-mode gmm") {
  const GmmTarget gmm = make_two_mode_gmm(2, 4.0);
  HmcConfig bad;
  bad.step_size = 50;
  bad.burn_in = 0;
  bad.n_samples = 500;
  CHECK(hmc_sample(gmm, bad).accept_rates[0] < 0.05);
}

TEST_CASE("tuning sweep extremes") {
  HmcConfig base;
  base.n_chains = 5;
  base.burn_in = 200;
  const SweepTable t = hmc_tuning_sweep(unit_gaussian(2), {1e-4, 1e3}, base);
  CHECK(t.rows.size() == 10);
  REQUIRE(t.summary.size() == 2);
  CHECK(t.summary[0].median >= 0.99);
  CHECK(t.summary[1].median <= 0.05);
  CHECK(sweep_csv(t).rfind("eps,chain,accept_rate\n", 0) == 0);
}

TEST_CASE("rejection sampling") {
  Rng rng(1);
  const DecoderModel half = flat_bernoulli(3, 0.0);
  const RejectionResult prior = rejection_sample(half, EvidenceMask(), 100, 1000, rng);
  CHECK(prior.complete);
  CHECK(prior.tries == 100);

  const RejectionResult one = rejection_sample(half, EvidenceMask({0}, {1}), 4000, 1000000, rng);
  CHECK(one.complete);
  CHECK(one.acceptance_rate() == doctest::Approx(0.5).epsilon(0.06));

  const RejectionResult starved = rejection_sample(flat_bernoulli(3, -12), EvidenceMask({0, 1, 2}, {1, 1, 1}), 10, 5000, rng);
  CHECK_FALSE(starved.complete);
  CHECK_FALSE(starved.warning.empty());

  Network lin(make_spec(2, {}, 2, Activation::kRelu, Activation::kIdentity));
  CHECK_THROWS_AS(rejection_sample(DecoderModel(lin, Likelihood::kGaussian), EvidenceMask(), 5, 10, rng), ConfigError);
}

TEST_CASE("rejection samples match the grid posterior") {
  const DecoderModel model = make_toy_bernoulli(6, 3);
  const EvidenceMask ev({0, 2, 4}, {1, 0, 1});
  Rng rng(2);
  const RejectionResult rs = rejection_sample(model, ev, 100000, 100000000, rng);
  REQUIRE(rs.complete);
  const GridPosterior grid = grid_posterior(model, ev, GridSpec::square(5.0, 50));
  CHECK(divergence_vs_grid(rs.samples, grid).tv <= 0.05);
}

TEST_CASE("grid posterior") {
  const DecoderModel model = make_toy_bernoulli(6, 5);
  const GridPosterior prior = grid_posterior(model, EvidenceMask(), GridSpec::square(5.0, 200));
  CHECK(prior.prob.sum() == doctest::Approx(1.0));
  const oracle::Grid normal = oracle::grid([](const Vector& z) { return -0.5 * z.squaredNorm(); }, 200, 5.0);
  CHECK(oracle_tv(prior.prob, normal.prob()) <= 0.01);
  CHECK(std::abs(prior.log_evidence) <= 1e-3);

  const EvidenceMask ev({1, 3, 5}, {1, 1, 0});
  const GridPosterior g = grid_posterior(model, ev, GridSpec::square(5.0, 100));
  const oracle::Grid ref = oracle::grid([&](const Vector& z) { return oracle::log_joint(model, z, ev); }, 100, 5.0);
  CHECK(g.log_evidence == doctest::Approx(ref.log_evidence).epsilon(1e-10));
  CHECK(oracle_tv(g.prob, ref.prob()) <= 1e-10);
  const GridPosterior fine = grid_posterior(model, ev, GridSpec::square(5.0, 200));
  CHECK(std::abs(fine.log_evidence - g.log_evidence) <= 1e-3);

  GridSpec bad;
  bad.resolution = {10, 10};
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = GridSpec{};
  bad.upper[0] = bad.lower[0];
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  CHECK_THROWS_AS(grid_posterior(unit_gaussian(3), GridSpec::square(5.0, 50)), ConfigError);
}

TEST_CASE("grid posterior matches the conjugate closed form") {
  Rng rng(6);
  const ConjugateModel m = make_random_conjugate_model(2, 4, 1.0, rng);
  const EvidenceMask ev({0, 1, 2, 3}, {0.5, -0.2, 1.0, 0.3});
  const GridPosterior g = grid_posterior(m.model, ev, GridSpec::square(8.0, 400));
  const oracle::Gaussian truth = oracle::linear_gaussian_posterior(m.a, m.c, m.sigma, ev.indices(), ev.values());
  CHECK(std::abs(g.log_evidence - truth.log_evidence) <= 1e-3);
}

TEST_CASE("evidence forcing one mode concentrates the grid") {
  // logits of pixels 0 and 1 are 8 z1, so observing both on puts the mass at z1 > 0.
  Network net(make_spec(2, {}, 2, Activation::kRelu, Activation::kSigmoid));
  net.layers()[0].weight << 8, 0, 8, 0;
  net.layers()[0].bias.setZero();
  const GridPosterior g = grid_posterior(DecoderModel(net, Likelihood::kBernoulli), EvidenceMask({0, 1}, {1, 1}),
                                         GridSpec::square(5.0, 100));
  CHECK(g.prob.bottomRows(50).sum() >= 0.95);
}

TEST_CASE("sample_grid draws follow the table") {
  const GridPosterior g = grid_posterior(make_toy_bernoulli(6, 1), EvidenceMask({0}, {1}), GridSpec::square(5.0, 50));
  Rng rng(3);
  const Matrix z = sample_grid(g, 100000, rng);
  CHECK(divergence_vs_grid(z, g).tv <= 0.05);
}

TEST_CASE("rezende alternation") {
  Rng rng(1);
  const DecoderModel dec = make_toy_bernoulli(6, 2);
  const EncoderModel enc(Network::glorot(make_spec(6, {5}, 4, Activation::kTanh, Activation::kIdentity), rng));
  Vector x(6);
  x << 1, 0, 1, 1, 0, 0;
  const EvidenceMask full = EvidenceMask::from_vector(x, {0, 1, 2, 3, 4, 5});
  const AlternationResult one = rezende_alternation(dec, enc, full, 1, 4000, rng);
  for (Eigen::Index c = 0; c < 4000; ++c) REQUIRE(one.final_t.col(c) == x);
  const EncoderModel::Posterior q = enc.encode(x);
  const Vector zbar = one.final_z.rowwise().mean();
  for (int i = 0; i < 2; ++i) CHECK(std::abs(zbar[i] - q.mean[i]) <= 4 * std::exp(q.log_std[i]) / std::sqrt(4000.0));
  for (Eigen::Index c = 0; c < 5; ++c) CHECK(one.final_means.col(c).isApprox(decode_forward(dec, one.final_z.col(c)).params));

  const EvidenceMask part({0, 1}, {1, 0});
  const AlternationResult zero = rezende_alternation(dec, enc, part, 0, 3, rng);
  CHECK(zero.final_t == zero.mean_t);
  CHECK((zero.final_t.row(0).array() == 1).all());
  CHECK_THROWS_AS(rezende_alternation(dec, enc, part, -1, 3, rng), ConfigError);
}
