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
#include "xcoding/toydata.hpp"
#include "xcoding/xcoder.hpp"

#include <doctest.h>

#include "oracles.hpp"

#include <cmath>

using namespace xcoding;

TEST_CASE("query marginal from per-sample log-likelihoods") {
  Vector one(1);
  one << -2.5;
  CHECK(query_marginal_from_logliks(one).log_marginal == doctest::Approx(-2.5));
  Vector two(2);
  two << -1, -3;
  CHECK(query_marginal_from_logliks(two).log_marginal == doctest::Approx(-1.56622).epsilon(1e-5));
  CHECK_THROWS_AS(query_marginal_from_logliks(Vector()), ConfigError);
}

TEST_CASE("query marginal on the conjugate model") {
  Rng rng(4);
  const ConjugateModel m = make_random_conjugate_model(2, 5, 0.7, rng);
  const Vector t = m.a * standard_normal(rng, 2) + m.c + 0.7 * standard_normal(rng, 5);
  const EvidenceMask ev = EvidenceMask::from_vector(t, {0, 1, 3});
  const oracle::Gaussian post = oracle::linear_gaussian_posterior(m.a, m.c, m.sigma, ev.indices(), ev.values());
  const Matrix l = Eigen::LLT<Matrix>(post.cov).matrixL();
  Matrix z = l * standard_normal(rng, 2, 20000);
  z.colwise() += post.mean;
  const QueryEval q = query_marginal_loglik(m.model, z, ev, t);
  // closed-form predictive for the query dims {2, 4}
  const std::vector<int> query = {2, 4};
  Matrix aq(2, 2);
  Vector cq(2), yq(2);
  for (int k = 0; k < 2; ++k) {
    aq.row(k) = m.a.row(query[k]);
    cq[k] = m.c[query[k]];
    yq[k] = t[query[k]];
  }
  const double exact = oracle::mvn_logpdf(yq, aq * post.mean + cq, aq * post.cov * aq.transpose() + 0.49 * Matrix::Identity(2, 2));
  CHECK(exact == doctest::Approx(conjugate_log_predictive(m, ev, t)).epsilon(1e-10));
  // resampling standard error of the log of a mean of likelihoods (delta method)
  const Vector w = (q.per_sample.array() - q.log_marginal).exp();
  const double se = std::sqrt((w.array() - 1).square().mean() / w.size());
  CHECK(std::abs(q.log_marginal - exact) <= 3 * se + 1e-9);
}

TEST_CASE("divergence_vs_grid extremes") {
  GridSpec spec = GridSpec::square(1.0, 50);
  GridPosterior uniform{spec, Matrix::Constant(50, 50, 1.0 / 2500), 0.0};
  Matrix same(2, 10);
  for (int j = 0; j < 10; ++j) same.col(j) << 0.01, 0.01;
  const Divergence d = divergence_vs_grid(same, uniform);
  CHECK(d.tv == doctest::Approx(1.0 - 1.0 / 2500).epsilon(1e-12));

  // one sample per cell reproduces the uniform table
  Matrix every(2, 2500);
  for (int i = 0; i < 50; ++i)
    for (int j = 0; j < 50; ++j) every.col(i * 50 + j) << spec.center(0, i), spec.center(1, j);
  CHECK(divergence_vs_grid(every, uniform).tv == doctest::Approx(0.0));

  Matrix outside = Matrix::Constant(2, 10, 9.0);
  CHECK_THROWS_AS(divergence_vs_grid(outside, uniform), NumericalError);
  long clipped = 0;
  histogram_on_grid(outside, spec, &clipped);
  CHECK(clipped == 10);
}

TEST_CASE("gvi histogram matches the analytic gaussian") {
  Rng rng(8);
  GviParams p{Matrix(2, 2), Vector(2)};
  p.weight << 1.0, 0.0, 0.6, 0.8;
  p.bias << 0.5, -0.3;
  const int n = 100000;
  Matrix z(2, n);
  for (int j = 0; j < n; ++j) z.col(j) = gvi_apply(p, standard_normal(rng, 2)).z;
  const Matrix cov = p.weight * p.weight.transpose();
  const oracle::Grid g = oracle::grid([&](const Vector& x) { return oracle::mvn_logpdf(x, p.bias, cov); }, 50, 5.0);
  const GridPosterior table{GridSpec::square(5.0, 50), g.prob(), g.log_evidence};
  CHECK(divergence_vs_grid(z, table).tv <= 0.05);
}

TEST_CASE("mmd") {
  Rng rng(1);
  const Matrix x = standard_normal(rng, 1, 500);
  Matrix y = standard_normal(rng, 1, 500);
  CHECK(mmd(x, x).mmd2 == 0.0);
  CHECK(mmd(x, y).mmd2 == mmd(y, x).mmd2);
  y.array() += 10;
  CHECK(mmd(x, y).mmd2 >= 0.5);
  CHECK(mmd(x, y, 1.0).bandwidth == 1.0);

  Matrix pooled(1, 3);
  pooled << 0, 1, 3;
  CHECK(median_pairwise_distance(pooled) == doctest::Approx(2.0));
  CHECK_THROWS_AS(mmd(x, standard_normal(rng, 2, 5)), ConfigError);
}

TEST_CASE("timing") {
  auto [value, seconds] = timed([] { return 3; });
  CHECK(value == 3);
  CHECK(seconds >= 0);
  CHECK(seconds < 1e-3);
  TimingLog log;
  log.time("a", [] {});
  const double s = log.time("a", [] {
    double acc = 0;
    for (int i = 0; i < 100000; ++i) acc += std::sqrt(static_cast<double>(i));
    return acc;
  });
  CHECK(s > 0);
  CHECK(log.rows().size() == 2);
  CHECK(std::isfinite(log.total("a")));
  CHECK(log.total("a") >= 0);
  CHECK(log.total("missing") == 0);
}

TEST_CASE("metrics csv") {
  MetricsRow full{"gvi", 3, -1.5, -2.25, 0.125, 0.5, 1.0, 2.0};
  MetricsRow sparse;
  sparse.method = "rs";
  const std::string csv = metrics_csv({full, sparse});
  CHECK(csv ==
        "method,mask_id,celbo,query_loglik,tv,kl,opt_seconds,predict_seconds\n"
        "gvi,3,-1.5,-2.25,0.125,0.5,1,2\n"
        "rs,0,,,,,,\n");
}
