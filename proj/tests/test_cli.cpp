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

#include "xcoding/cli.hpp"
#include "xcoding/error.hpp"
#include "xcoding/textfmt.hpp"
#include "xcoding/toydata.hpp"

#include <doctest.h>

#include "oracles.hpp"

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace xcoding;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "xcoding_cli_tests" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::vector<std::vector<std::string>> read_csv(const fs::path& path) {
  std::ifstream in(path);
  REQUIRE(in.good());
  std::vector<std::vector<std::string>> rows;
  std::string line;
  while (std::getline(in, line)) {
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    rows.push_back(cells);
  }
  return rows;
}

int column(const std::vector<std::string>& header, const std::string& name) {
  for (std::size_t i = 0; i < header.size(); ++i)
    if (header[i] == name) return static_cast<int>(i);
  FAIL("missing column " << name);
  return -1;
}

}  // namespace

TEST_CASE("resolve_mask") {
  CHECK(cli::resolve_mask("3,1,2", 6) == std::vector<int>{1, 2, 3});
  CHECK(cli::resolve_mask("none", 6).empty());
  CHECK(cli::resolve_mask("rows:0-1,cols:1-2", 16) == std::vector<int>{1, 2, 5, 6});
  const auto r = cli::resolve_mask("random:0.5:9", 64);
  CHECK(r.size() == 32);
  CHECK(r == cli::resolve_mask("random:0.5:9", 64));
  CHECK(r != cli::resolve_mask("random:0.5:10", 64));
  CHECK_THROWS_AS(cli::resolve_mask("1,1", 6), ConfigError);
  CHECK_THROWS_AS(cli::resolve_mask("7", 6), ConfigError);
  CHECK_THROWS_AS(cli::resolve_mask("rows:0-9,cols:0-1", 16), ConfigError);
  CHECK_THROWS_AS(cli::resolve_mask("rows:0-1,cols:0-1", 6), ConfigError);
  CHECK_THROWS_AS(cli::resolve_mask("random:1.5:1", 6), ConfigError);
}

TEST_CASE("merge_config keeps command-line values") {
  const std::vector<std::string> args = {"infer", "--seed", "4", "--config", "c.ini"};
  const auto merged = cli::merge_config(args, "# comment\nseed = 9\nmethod = \"nf\"\nmeans-only = true\nno-timing = false\n");
  const std::vector<std::string> expect = {"infer", "--seed", "4", "--config", "c.ini", "--method", "nf", "--means-only"};
  CHECK(merged == expect);
  CHECK_THROWS_AS(cli::merge_config(args, "just words\n"), ParseError);
}

TEST_CASE("render_pgm") {
  const EvidenceMask ev({0, 5}, {1, 0});
  const Matrix t = Matrix::Constant(16, 3, 0.5);
  const std::string pgm = cli::render_pgm(t, ev, 4);
  std::istringstream in(pgm);
  std::string magic;
  int w = 0, h = 0, maxval = 0;
  in >> magic >> w >> h >> maxval;
  CHECK(magic == "P2");
  CHECK(w == 4 * 5 + 1);
  CHECK(h == 4 + 2);
  CHECK(maxval == 255);
  std::vector<int> px;
  int v;
  while (in >> v) px.push_back(v);
  CHECK(px.size() == static_cast<std::size_t>(w * h));
  CHECK(px[static_cast<std::size_t>(1 * w + 1)] == 255);  // tile 0, pixel 0 observed on
  CHECK(px[static_cast<std::size_t>(2 * w + 2)] == 0);    // tile 0, pixel 5 observed off
  CHECK(cli::image_side(64) == 8);
  CHECK(cli::image_side(6) == 0);
}

TEST_CASE("usage errors exit 2") {
  const fs::path dir = scratch("usage");
  CHECK(cli::run({}) == cli::kExitUsage);
  CHECK(cli::run({"no-such-command"}) == cli::kExitUsage);
  CHECK(cli::run({"train-vae", "--dataset", (dir / "missing.csv").string(), "--out", dir.string()}) == cli::kExitUsage);

  const std::string model = (dir / "toy.txt").string();
  REQUIRE(cli::run({"make-model", "--kind", "toy", "--output-dim", "6", "--seed", "1", "--out", model}) == 0);
  CHECK(cli::run({"compare", "--model", model, "--masks", "0", "--out", dir.string()}) == cli::kExitUsage);
  CHECK(cli::run({"infer", "--model", model, "--method", "magic", "--out", dir.string()}) == cli::kExitUsage);

  const std::string wide = (dir / "wide.txt").string();
  REQUIRE(cli::run({"make-model", "--kind", "conjugate", "--latent-dim", "5", "--output-dim", "8", "--out", wide}) == 0);
  CHECK(cli::run({"infer", "--model", wide, "--method", "fcn", "--mask", "0,1", "--out", dir.string()}) ==
        cli::kExitUsage);
  CHECK(cli::run({"infer", "--model", model, "--config", (dir / "nothing.ini").string()}) == cli::kExitUsage);
}

TEST_CASE("infer gvi on a conjugate model") {
  const fs::path dir = scratch("conjugate");
  const std::string model = (dir / "model.txt").string();
  REQUIRE(cli::run({"make-model", "--kind", "conjugate", "--latent-dim", "2", "--output-dim", "6", "--sigma", "0.5",
                    "--seed", "3", "--out", model}) == 0);
  const ModelBundle bundle = load_model(model);
  const std::string values = "0.4,-0.3,1.1";
  REQUIRE(cli::run({"infer", "--model", model, "--method", "gvi", "--mask", "0,2,4", "--evidence-values", values,
                    "--restarts", "1", "--samples", "50", "--no-timing", "--out", (dir / "out").string()}) == 0);
  const auto rows = read_csv(dir / "out" / "metrics.csv");
  REQUIRE(rows.size() == 2);
  const double celbo = std::stod(rows[1][static_cast<std::size_t>(column(rows[0], "celbo"))]);
  const auto& layer = bundle.decoder.network().layers()[0];
  const oracle::Gaussian truth = oracle::linear_gaussian_posterior(layer.weight, layer.bias, bundle.decoder.sigma(),
                                                                   {0, 2, 4}, {0.4, -0.3, 1.1});
  CHECK(std::abs(celbo - truth.log_evidence) <= 1e-2);
  CHECK(rows[1][static_cast<std::size_t>(column(rows[0], "opt_seconds"))].empty());
  for (const char* f : {"z_samples.csv", "t_samples.csv", "trace.csv", "xcoder.txt", "report.txt"}) {
    CHECK(fs::exists(dir / "out" / f));
  }
  CHECK(read_csv(dir / "out" / "z_samples.csv").size() == 50);
  CHECK(load_xcoder((dir / "out" / "xcoder.txt").string()).kind() == XCoderKind::kGvi);
}

TEST_CASE("infer rs on a bernoulli toy reports tv against the grid") {
  const fs::path dir = scratch("rs");
  const std::string model = (dir / "toy.txt").string();
  REQUIRE(cli::run({"make-model", "--kind", "toy", "--output-dim", "6", "--seed", "2", "--out", model}) == 0);
  REQUIRE(cli::run({"infer", "--model", model, "--method", "rs", "--mask", "0,1,2", "--samples", "100000",
                    "--grid-res", "50", "--seed", "5", "--out", dir.string()}) == 0);
  const auto rows = read_csv(dir / "metrics.csv");
  const double tv = std::stod(rows[1][static_cast<std::size_t>(column(rows[0], "tv"))]);
  CHECK(tv <= 0.05);
  CHECK(std::isfinite(std::stod(rows[1][static_cast<std::size_t>(column(rows[0], "query_loglik"))])));
  CHECK(std::stod(rows[1][static_cast<std::size_t>(column(rows[0], "predict_seconds"))]) >= 0);
}

TEST_CASE("compare writes one row per method and mask") {
  const fs::path dir = scratch("compare");
  const std::string model = (dir / "toy.txt").string();
  REQUIRE(cli::run({"make-model", "--kind", "toy", "--output-dim", "6", "--seed", "4", "--out", model}) == 0);
  const std::vector<std::string> args = {"compare", "--model", model, "--methods", "gvi,nf", "--masks", "5",
                                         "--restarts", "1", "--flow-depth", "3", "--samples", "100",
                                         "--no-timing", "--seed", "2"};
  auto with_out = [&](const std::string& sub) {
    auto a = args;
    a.push_back("--out");
    a.push_back((dir / sub).string());
    return a;
  };
  REQUIRE(cli::run(with_out("a")) == 0);
  const auto rows = read_csv(dir / "a" / "metrics.csv");
  REQUIRE(rows.size() == 11);
  const int c = column(rows[0], "celbo");
  for (std::size_t i = 1; i < rows.size(); ++i) CHECK(std::isfinite(std::stod(rows[i][static_cast<std::size_t>(c)])));
  REQUIRE(cli::run(with_out("b")) == 0);
  CHECK(textfmt::read_file((dir / "a" / "metrics.csv").string()) == textfmt::read_file((dir / "b" / "metrics.csv").string()));
}

TEST_CASE("sweep-hmc cardinality and extremes") {
  const fs::path dir = scratch("sweep");
  REQUIRE(cli::run({"sweep-hmc", "--target", "unit-gaussian", "--eps-list", "0.0001,0.5,1000", "--hmc-burnin", "200",
                    "--out", dir.string()}) == 0);
  const auto rows = read_csv(dir / "acceptance.csv");
  CHECK(rows.size() == 91);
  const auto summary = read_csv(dir / "acceptance_summary.csv");
  REQUIRE(summary.size() == 4);
  const int med = column(summary[0], "median");
  CHECK(std::stod(summary[1][static_cast<std::size_t>(med)]) >= 0.99);
  CHECK(std::stod(summary[3][static_cast<std::size_t>(med)]) <= 0.05);
}

TEST_CASE("gmm-check on a single standard normal") {
  const fs::path dir = scratch("gmm");
  REQUIRE(cli::run({"gmm-check", "--gmm-weights", "1", "--gmm-means", "0,0", "--gmm-vars", "1,1", "--methods", "gvi",
                    "--samples", "2000", "--restarts", "1", "--out", dir.string()}) == 0);
  const auto rows = read_csv(dir / "mmd.csv");
  REQUIRE(rows.size() == 3);
  CHECK(rows[1][0] == "exact");
  CHECK(std::stod(rows[1][1]) <= 0.005);
  CHECK(rows[2][0] == "gvi");
  CHECK(std::stod(rows[2][1]) <= 0.01);
  CHECK(cli::run({"gmm-check", "--gmm-weights", "1,1", "--gmm-means", "0,0", "--gmm-vars", "1,1", "--out",
                  dir.string()}) == cli::kExitUsage);
}

TEST_CASE("train-vae writes a loadable model") {
  const fs::path dir = scratch("train");
  const std::string data = (dir / "bars.csv").string();
  REQUIRE(cli::run({"make-data", "--n", "300", "--seed", "1", "--out", data}) == 0);
  REQUIRE(cli::run({"train-vae", "--dataset", data, "--epochs", "3", "--seed", "2", "--out", (dir / "a").string()}) == 0);
  REQUIRE(cli::run({"train-vae", "--dataset", data, "--epochs", "3", "--seed", "2", "--out", (dir / "b").string()}) == 0);
  const ModelBundle b = load_model((dir / "a" / "model.txt").string());
  CHECK(b.decoder.latent_dim() == 2);
  CHECK(b.decoder.network().spec().sizes == std::vector<int>{2, 64, 64});
  CHECK(b.encoder.has_value());
  CHECK(textfmt::read_file((dir / "a" / "model.txt").string()) == textfmt::read_file((dir / "b" / "model.txt").string()));
  CHECK(read_csv(dir / "a" / "elbo_trace.csv").size() == 4);
}

TEST_CASE("the installed binary runs") {
  const fs::path dir = scratch("binary");
  const std::string cmd = std::string(XCODING_CLI_PATH) + " make-data --n 3 --out " + (dir / "d.csv").string();
  CHECK(std::system(cmd.c_str()) == 0);
  CHECK(load_dataset_csv((dir / "d.csv").string()).cols() == 3);
}
