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
#include "xcoding/xcoder.hpp"

#include <CLI11.hpp>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <iostream>
#include <numeric>
#include <set>
#include <sstream>

namespace xcoding::cli {

namespace fs = std::filesystem;

namespace {

std::vector<std::string> split(const std::string& text, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, sep)) {
    const auto b = item.find_first_not_of(" \t");
    const auto e = item.find_last_not_of(" \t");
    out.push_back(b == std::string::npos ? "" : item.substr(b, e - b + 1));
  }
  return out;
}

int to_int(const std::string& s) {
  std::size_t used = 0;
  int v = 0;
  try {
    v = std::stoi(s, &used);
  } catch (const std::exception&) {
    throw ConfigError("expected an integer, got '" + s + "'");
  }
  if (used != s.size()) throw ConfigError("expected an integer, got '" + s + "'");
  return v;
}

double to_double(const std::string& s) {
  std::size_t used = 0;
  double v = 0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    throw ConfigError("expected a number, got '" + s + "'");
  }
  if (used != s.size()) throw ConfigError("expected a number, got '" + s + "'");
  return v;
}

std::vector<double> to_doubles(const std::string& s) {
  std::vector<double> out;
  for (const auto& item : split(s, ',')) out.push_back(to_double(item));
  return out;
}

std::pair<int, int> parse_range(const std::string& text) {
  const auto parts = split(text, '-');
  if (parts.size() != 2) throw ConfigError("expected a range a-b, got '" + text + "'");
  return {to_int(parts[0]), to_int(parts[1])};
}

}  // namespace

int image_side(int output_dim) {
  const int side = static_cast<int>(std::lround(std::sqrt(static_cast<double>(output_dim))));
  return side * side == output_dim ? side : 0;
}

std::vector<int> resolve_mask(const std::string& spec, int output_dim) {
  if (spec.empty() || spec == "none") return {};
  std::vector<int> idx;
  if (spec.rfind("random:", 0) == 0) {
    const auto parts = split(spec, ':');
    if (parts.size() != 3) throw ConfigError("mask 'random:<fraction>:<seed>' expected, got '" + spec + "'");
    const double fraction = to_double(parts[1]);
    if (!(fraction > 0 && fraction < 1)) throw ConfigError("mask fraction must lie in (0, 1)");
    Rng rng(static_cast<std::uint64_t>(std::stoull(parts[2])));
    std::vector<int> all(static_cast<std::size_t>(output_dim));
    std::iota(all.begin(), all.end(), 0);
    const auto count = static_cast<std::size_t>(std::lround(fraction * output_dim));
    // Partial Fisher-Yates.
    for (std::size_t i = 0; i < count; ++i) std::swap(all[i], all[i + rng.index(all.size() - i)]);
    idx.assign(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(count));
  } else if (spec.rfind("rows:", 0) == 0) {
    const int side = image_side(output_dim);
    if (side == 0) throw ConfigError("rectangle masks need a square image output");
    const auto parts = split(spec, ',');
    if (parts.size() != 2 || parts[1].rfind("cols:", 0) != 0) {
      throw ConfigError("mask 'rows:a-b,cols:c-d' expected, got '" + spec + "'");
    }
    const auto [r0, r1] = parse_range(parts[0].substr(5));
    const auto [c0, c1] = parse_range(parts[1].substr(5));
    if (r0 < 0 || c0 < 0 || r1 >= side || c1 >= side || r0 > r1 || c0 > c1) {
      throw ConfigError("rectangle mask outside the " + std::to_string(side) + "x" + std::to_string(side) + " image");
    }
    for (int r = r0; r <= r1; ++r)
      for (int c = c0; c <= c1; ++c) idx.push_back(r * side + c);
  } else {
    for (const auto& item : split(spec, ',')) {
      const int i = to_int(item);
      if (i < 0 || i >= output_dim) throw ConfigError("mask index " + item + " out of range");
      idx.push_back(i);
    }
  }
  std::sort(idx.begin(), idx.end());
  if (std::adjacent_find(idx.begin(), idx.end()) != idx.end()) throw ConfigError("mask repeats an index");
  return idx;
}

std::vector<std::string> merge_config(const std::vector<std::string>& args, const std::string& config_text) {
  std::set<std::string> given;
  for (const auto& a : args) {
    if (a.rfind("--", 0) == 0) given.insert(a.substr(2, a.find('=') == std::string::npos ? std::string::npos : a.find('=') - 2));
  }
  std::vector<std::string> out = args;
  std::istringstream in(config_text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto b = line.find_first_not_of(" \t\r");
    if (b == std::string::npos || line[b] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ParseError("config line is not 'key = value'", line_no);
    auto trim = [](std::string s) {
      const auto lo = s.find_first_not_of(" \t\r\"");
      const auto hi = s.find_last_not_of(" \t\r\"");
      return lo == std::string::npos ? std::string() : s.substr(lo, hi - lo + 1);
    };
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty() || key == "config" || given.count(key)) continue;
    if (value == "true") {
      out.push_back("--" + key);
    } else if (value != "false") {
      out.push_back("--" + key);
      out.push_back(value);
    }
  }
  return out;
}

std::string samples_csv(const Matrix& columns) {
  std::string out;
  for (Eigen::Index j = 0; j < columns.cols(); ++j) {
    for (Eigen::Index i = 0; i < columns.rows(); ++i) {
      if (i) out += ',';
      out += textfmt::format_double(columns(i, j));
    }
    out += '\n';
  }
  return out;
}

std::string render_pgm(const Matrix& t_samples, const EvidenceMask& ev, int side, int max_tiles) {
  const int n_tiles = 1 + static_cast<int>(std::min<Eigen::Index>(t_samples.cols(), max_tiles));
  const int cols = std::min(n_tiles, 5);
  const int rows = (n_tiles + cols - 1) / cols;
  const int width = cols * (side + 1) + 1;
  const int height = rows * (side + 1) + 1;
  std::vector<int> pixels(static_cast<std::size_t>(width) * height, 128);
  std::vector<int> observed(static_cast<std::size_t>(side) * side, -1);
  for (std::size_t k = 0; k < ev.size(); ++k) observed[static_cast<std::size_t>(ev.indices()[k])] = ev.values()[k] > 0.5 ? 1 : 0;
  auto query_level = [](double v) { return 32 + static_cast<int>(std::lround(std::clamp(v, 0.0, 1.0) * 191.0)); };
  for (int tile = 0; tile < n_tiles; ++tile) {
    const int oy = (tile / cols) * (side + 1) + 1;
    const int ox = (tile % cols) * (side + 1) + 1;
    for (int r = 0; r < side; ++r) {
      for (int c = 0; c < side; ++c) {
        const int pos = r * side + c;
        int level;
        if (observed[static_cast<std::size_t>(pos)] >= 0) {
          level = observed[static_cast<std::size_t>(pos)] ? 255 : 0;
        } else if (tile == 0) {
          level = 128;
        } else {
          level = query_level(t_samples(pos, tile - 1));
        }
        pixels[static_cast<std::size_t>(oy + r) * width + ox + c] = level;
      }
    }
  }
  std::string out = "P2\n" + std::to_string(width) + " " + std::to_string(height) + "\n255\n";
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      if (x) out += ' ';
      out += std::to_string(pixels[static_cast<std::size_t>(y) * width + x]);
    }
    out += '\n';
  }
  return out;
}

// ---------------------------------------------------------------------------

MethodOutcome run_method(const ModelBundle& bundle, const EvidenceMask& ev, const Vector& truth,
                         const std::string& method, const MethodSettings& settings, int mask_id,
                         const GridPosterior* grid) {
  const DecoderModel& model = bundle.decoder;
  MethodOutcome out;
  out.row.method = method;
  out.row.mask_id = mask_id;
  const Rng root = Rng(settings.seed).derive(method).derive(static_cast<std::uint64_t>(mask_id));
  TimingLog timing;

  if (method == "gvi" || method == "nf" || method == "fcn") {
    const XCoderKind kind = parse_xcoder_kind(method);
    if (kind == XCoderKind::kFcn && model.latent_dim() > kFcnMaxDim) {
      throw ConfigError("fcn needs the full Jacobian via one gradient call per output; latent dimension " +
                        std::to_string(model.latent_dim()) + " exceeds " + std::to_string(kFcnMaxDim));
    }
    CelboConfig cfg = settings.celbo;
    cfg.seed = root.derive("optimize").seed();
    out.fit = timing.time("optimize", [&] { return optimize_xcoder(model, ev, kind, cfg); });
    Rng predict_rng = root.derive("predict");
    QuerySamples q = timing.time(
        "predict", [&] { return predict_query(model, out.fit->xcoder, ev, settings.samples, predict_rng, settings.means_only); });
    out.z = std::move(q.z);
    out.t = std::move(q.t);
    out.row.celbo = out.fit->final.value;
    if (!out.fit->xcoder.bound_valid()) out.warnings.push_back("bound_valid=false: FCN cross-coder is not guaranteed invertible");
  } else if (method == "hmc") {
    const PosteriorTarget target = posterior_target(model, ev);
    HmcConfig burn = settings.hmc;
    burn.seed = root.derive("burn-in").seed();
    burn.n_samples = 0;
    const HmcResult warm = timing.time("optimize", [&] { return hmc_sample(target, burn); });
    HmcConfig draw = settings.hmc;
    draw.seed = root.derive("draw").seed();
    draw.burn_in = 0;
    draw.n_samples = (settings.samples + draw.n_chains - 1) / draw.n_chains;
    draw.initial_states = warm.final_states;
    const HmcResult res = timing.time("predict", [&] { return hmc_sample(target, draw); });
    out.z = res.samples.leftCols(settings.samples);
    Rng decode_rng = root.derive("decode");
    out.t = timing.time("predict", [&] { return decode_query(model, out.z, ev, decode_rng, settings.means_only); });
  } else if (method == "rs") {
    Rng rng = root.derive("rs");
    RejectionResult res =
        timing.time("predict", [&] { return rejection_sample(model, ev, settings.samples, settings.rs_max_tries, rng); });
    if (!res.complete) out.warnings.push_back(res.warning);
    out.z = std::move(res.samples);
    Rng decode_rng = root.derive("decode");
    out.t = timing.time("predict", [&] { return decode_query(model, out.z, ev, decode_rng, settings.means_only); });
  } else if (method == "rezende") {
    if (!bundle.encoder) throw ConfigError("rezende needs a model file with an [encoder] section");
    Rng rng = root.derive("rezende");
    AlternationResult res = timing.time("predict", [&] {
      return rezende_alternation(model, *bundle.encoder, ev, settings.rezende_iters, std::max(1, settings.samples), rng);
    });
    out.z = std::move(res.final_z);
    out.t = settings.means_only ? std::move(res.final_means) : std::move(res.final_t);
    if (settings.means_only) {
      for (Eigen::Index j = 0; j < out.t.cols(); ++j)
        for (std::size_t k = 0; k < ev.size(); ++k) out.t(ev.indices()[k], j) = ev.values()[k];
    }
  } else {
    throw ConfigError("unknown method '" + method + "' (expected gvi, nf, fcn, hmc, rs or rezende)");
  }

  if (out.z.cols() > 0) out.row.query_loglik = query_marginal_loglik(model, out.z, ev, truth).log_marginal;
  if (grid && out.z.cols() > 0) {
    try {
      const Divergence div = divergence_vs_grid(out.z, *grid);
      out.row.tv = div.tv;
      out.row.kl = div.kl;
    } catch (const NumericalError& e) {
      out.warnings.push_back(e.what());
    }
  }
  if (settings.timing) {
    out.row.opt_seconds = timing.total("optimize");
    out.row.predict_seconds = timing.total("predict");
  }
  return out;
}

// ---------------------------------------------------------------------------

namespace {

struct CommonOptions {
  std::string model_path;
  std::string dataset;
  std::string dataset_format = "csv";
  int dataset_dim = 0;
  int row = 0;
  std::string mask = "none";
  std::string evidence_values;
  std::string out = ".";
  std::uint64_t seed = 0;
  // method settings as raw flag values
  int samples = kDefaultQuerySamples;
  int flow_depth = kDefaultFlowDepth;
  int mc_samples = 64;
  std::string optimizer = "lbfgs";
  int restarts = 3;
  int max_iters = 2000;
  double lr = 1e-2;
  int lbfgs_batch = 1000;
  int final_batch = 10000;
  int fcn_hidden = 32;
  double hmc_eps = 0.05;
  int hmc_leapfrog = 10;
  int hmc_burnin = 1000;
  int hmc_chains = 1;
  int grid_res = 200;
  std::string grid_bounds = "-5,5";
  long rs_max_tries = 10'000'000;
  int rezende_iters = 50;
  bool no_timing = false;
  bool means_only = false;
};

void add_data_options(CLI::App* sub, CommonOptions& o) {
  sub->add_option("--dataset", o.dataset, "Dataset file (one datum per row)");
  sub->add_option("--dataset-format", o.dataset_format, "csv or binary")->check(CLI::IsMember({"csv", "binary"}));
  sub->add_option("--dataset-dim", o.dataset_dim, "Values per datum for binary datasets");
}

void add_method_options(CLI::App* sub, CommonOptions& o) {
  sub->add_option("--samples", o.samples, "Predicted samples");
  sub->add_option("--flow-depth", o.flow_depth, "Planar flow depth k");
  sub->add_option("--mc-samples", o.mc_samples, "Per-step eps batch for adam");
  sub->add_option("--optimizer", o.optimizer, "lbfgs or adam")->check(CLI::IsMember({"lbfgs", "adam"}));
  sub->add_option("--restarts", o.restarts, "Independent cross-coder fits");
  sub->add_option("--max-iters", o.max_iters, "Optimizer iterations");
  sub->add_option("--lr", o.lr, "Adam learning rate");
  sub->add_option("--lbfgs-batch", o.lbfgs_batch, "Fixed eps batch for lbfgs");
  sub->add_option("--final-batch", o.final_batch, "Eps batch for the reported C-ELBO");
  sub->add_option("--fcn-hidden", o.fcn_hidden, "Hidden units of the FCN cross-coder");
  sub->add_option("--hmc-eps", o.hmc_eps, "HMC leapfrog step size");
  sub->add_option("--hmc-leapfrog", o.hmc_leapfrog, "HMC leapfrog steps");
  sub->add_option("--hmc-burnin", o.hmc_burnin, "HMC burn-in iterations");
  sub->add_option("--hmc-chains", o.hmc_chains, "HMC chains");
  sub->add_option("--grid-res", o.grid_res, "Grid resolution per axis (2-latent models)");
  sub->add_option("--grid-bounds", o.grid_bounds, "Grid bounds lo,hi on both axes");
  sub->add_option("--rs-max-tries", o.rs_max_tries, "Rejection sampling proposal budget");
  sub->add_option("--rezende-iters", o.rezende_iters, "Alternation iterations");
  sub->add_flag("--no-timing", o.no_timing, "Leave timing columns empty (byte-stable output)");
  sub->add_flag("--means-only", o.means_only, "Emit decoded means instead of sampled query values");
}

MethodSettings make_settings(const CommonOptions& o) {
  MethodSettings s;
  s.celbo.mc_samples = o.mc_samples;
  s.celbo.max_iters = o.max_iters;
  s.celbo.optimizer = parse_optimizer(o.optimizer);
  s.celbo.restarts = o.restarts;
  s.celbo.learning_rate = o.lr;
  s.celbo.lbfgs_batch = o.lbfgs_batch;
  s.celbo.final_batch = o.final_batch;
  s.celbo.flow_depth = o.flow_depth;
  s.celbo.fcn_hidden = o.fcn_hidden;
  s.celbo.validate();
  s.hmc.step_size = o.hmc_eps;
  s.hmc.leapfrog_steps = o.hmc_leapfrog;
  s.hmc.burn_in = o.hmc_burnin;
  s.hmc.n_chains = o.hmc_chains;
  s.hmc.validate();
  s.rs_max_tries = o.rs_max_tries;
  s.rezende_iters = o.rezende_iters;
  if (o.samples < 0) throw ConfigError("--samples must be non-negative");
  s.samples = o.samples;
  s.means_only = o.means_only;
  const auto bounds = to_doubles(o.grid_bounds);
  if (bounds.size() != 2) throw ConfigError("--grid-bounds expects lo,hi");
  s.grid.lower = {bounds[0], bounds[0]};
  s.grid.upper = {bounds[1], bounds[1]};
  s.grid.resolution = {o.grid_res, o.grid_res};
  s.grid.validate();
  s.timing = !o.no_timing;
  s.seed = o.seed;
  return s;
}

Matrix load_dataset(const CommonOptions& o) {
  if (o.dataset.empty()) throw ConfigError("--dataset is required");
  if (!fs::exists(o.dataset)) throw ConfigError("dataset '" + o.dataset + "' not found");
  return o.dataset_format == "binary" ? load_dataset_binary(o.dataset, o.dataset_dim) : load_dataset_csv(o.dataset);
}

// The full output vector the evidence is taken from: a dataset row, or a
// draw from the model when no dataset is given.
Vector truth_vector(const ModelBundle& bundle, const CommonOptions& o, int row, std::uint64_t stream) {
  if (!o.dataset.empty()) {
    const Matrix data = load_dataset(o);
    if (data.rows() != bundle.decoder.output_dim()) throw ConfigError("dataset dimension does not match the model");
    return data.col(row % data.cols());
  }
  Rng rng = Rng(o.seed).derive("truth").derive(stream);
  const Vector z = standard_normal(rng, bundle.decoder.latent_dim());
  return sample_output(bundle.decoder, decode_forward(bundle.decoder, z).params, rng, false);
}

EvidenceMask make_evidence(const ModelBundle& bundle, const std::string& spec, const Vector& truth,
                           const std::string& values) {
  std::vector<int> idx = resolve_mask(spec, bundle.decoder.output_dim());
  EvidenceMask ev;
  if (!values.empty()) {
    const auto v = to_doubles(values);
    if (v.size() != idx.size()) throw ConfigError("--evidence-values must give one value per mask index");
    ev = EvidenceMask(idx, v);
  } else {
    ev = EvidenceMask::from_vector(truth, idx);
  }
  ev.validate(bundle.decoder);
  return ev;
}

std::optional<GridPosterior> maybe_grid(const ModelBundle& bundle, const EvidenceMask& ev, const MethodSettings& s,
                                        std::vector<std::string>& warnings) {
  if (bundle.decoder.latent_dim() != 2) return std::nullopt;
  try {
    return grid_posterior(bundle.decoder, ev, s.grid);
  } catch (const NumericalError& e) {
    warnings.push_back(e.what());
    return std::nullopt;
  }
}

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw ConfigError("cannot create output directory '" + dir + "'");
}

std::string join(const std::string& dir, const std::string& file) { return (fs::path(dir) / file).string(); }

void write_report(const std::string& dir, const std::string& command, const std::string& config_echo,
                  const std::vector<MetricsRow>& rows, const std::vector<std::string>& manifest,
                  const std::vector<std::string>& warnings) {
  std::string out = "command=" + command + "\n[config]\n" + config_echo;
  out += "[metrics]\n" + metrics_csv(rows);
  out += "[warnings]\n";
  for (const auto& w : warnings) out += w + "\n";
  out += "[manifest]\n";
  for (const auto& f : manifest) {
    if (!fs::exists(join(dir, f))) throw Error("manifest file '" + f + "' was not written");
    out += f + "\n";
  }
  textfmt::write_file(join(dir, "report.txt"), out);
}

// ---------------------------------------------------------------------------

int cmd_make_data(const std::string& kind, int n, std::uint64_t seed, const std::string& out) {
  if (kind != "bars") throw ConfigError("unknown dataset kind '" + kind + "'");
  save_dataset_csv(out, make_bars(n, seed));
  return kExitOk;
}

int cmd_make_model(const std::string& kind, std::uint64_t seed, int latent, int output, double sigma,
                   const std::string& out) {
  if (kind == "conjugate") {
    Rng rng(seed);
    save_model(out, make_random_conjugate_model(latent, output, sigma, rng).model);
  } else if (kind == "bimodal") {
    const BimodalModel m = make_bimodal_model(seed);
    save_model(out, m.model);
    std::cout << "mask=";
    for (std::size_t k = 0; k < m.evidence.size(); ++k) std::cout << (k ? "," : "") << m.evidence.indices()[k];
    std::cout << "\nevidence-values=";
    for (std::size_t k = 0; k < m.evidence.size(); ++k) std::cout << (k ? "," : "") << m.evidence.values()[k];
    std::cout << "\n";
  } else if (kind == "toy") {
    save_model(out, make_toy_bernoulli(output, seed));
  } else {
    throw ConfigError("unknown model kind '" + kind + "'");
  }
  return kExitOk;
}

int cmd_train_vae(const CommonOptions& o, TrainConfig cfg, const std::string& hidden, const std::string& act,
                  const std::string& likelihood) {
  const Matrix data = load_dataset(o);
  cfg.hidden.clear();
  for (const auto& h : split(hidden, ',')) cfg.hidden.push_back(to_int(h));
  cfg.hidden_act = parse_activation(act);
  cfg.likelihood = parse_likelihood(likelihood);
  cfg.seed = o.seed;
  if (cfg.likelihood == Likelihood::kBernoulli && ((data.array() != 0.0) && (data.array() != 1.0)).any()) {
    throw ConfigError("bernoulli training needs a binary dataset");
  }
  const TrainResult res = train_vae(data, cfg);
  ensure_dir(o.out);
  save_model(join(o.out, "model.txt"), res.decoder, &res.encoder);
  std::string trace = "epoch,elbo\n";
  for (std::size_t e = 0; e < res.elbo_trace.size(); ++e) {
    trace += std::to_string(e) + "," + textfmt::format_double(res.elbo_trace[e]) + "\n";
  }
  textfmt::write_file(join(o.out, "elbo_trace.csv"), trace);
  return kExitOk;
}

int cmd_infer(const CommonOptions& o, const std::string& method, const std::string& config_echo) {
  if (o.model_path.empty()) throw ConfigError("--model is required");
  const ModelBundle bundle = load_model(o.model_path);
  const MethodSettings settings = make_settings(o);
  const Vector truth = truth_vector(bundle, o, o.row, 0);
  const EvidenceMask ev = make_evidence(bundle, o.mask, truth, o.evidence_values);
  std::vector<std::string> warnings;
  const auto grid = maybe_grid(bundle, ev, settings, warnings);
  MethodOutcome res = run_method(bundle, ev, truth, method, settings, 0, grid ? &*grid : nullptr);
  warnings.insert(warnings.end(), res.warnings.begin(), res.warnings.end());

  ensure_dir(o.out);
  std::vector<std::string> manifest = {"z_samples.csv", "t_samples.csv", "metrics.csv", "truth.csv"};
  textfmt::write_file(join(o.out, "z_samples.csv"), samples_csv(res.z));
  textfmt::write_file(join(o.out, "t_samples.csv"), samples_csv(res.t));
  textfmt::write_file(join(o.out, "metrics.csv"), metrics_csv({res.row}));
  textfmt::write_file(join(o.out, "truth.csv"), samples_csv(Matrix(truth)));
  if (res.fit) {
    textfmt::write_file(join(o.out, "trace.csv"), trace_csv(res.fit->trace));
    save_xcoder(join(o.out, "xcoder.txt"), res.fit->xcoder);
    manifest.push_back("trace.csv");
    manifest.push_back("xcoder.txt");
  }
  if (const int side = image_side(bundle.decoder.output_dim()); side > 0) {
    textfmt::write_file(join(o.out, "samples.pgm"), render_pgm(res.t, ev, side));
    manifest.push_back("samples.pgm");
  }
  for (const auto& w : warnings) std::cerr << "warning: " << w << "\n";
  write_report(o.out, "infer", config_echo, {res.row}, manifest, warnings);
  return kExitOk;
}

int cmd_compare(const CommonOptions& o, const std::string& methods, int masks, double fraction,
                const std::string& config_echo) {
  if (o.model_path.empty()) throw ConfigError("--model is required");
  if (masks < 1) throw ConfigError("--masks must be at least 1");
  if (!(fraction > 0 && fraction < 1)) throw ConfigError("--fraction must lie in (0, 1)");
  const ModelBundle bundle = load_model(o.model_path);
  const MethodSettings settings = make_settings(o);
  const auto method_list = split(methods, ',');
  if (method_list.empty()) throw ConfigError("--methods is empty");
  std::vector<MetricsRow> rows;
  std::vector<std::string> warnings;
  for (int m = 0; m < masks; ++m) {
    const Vector truth = truth_vector(bundle, o, o.row + m, static_cast<std::uint64_t>(m));
    const std::string spec =
        "random:" + textfmt::format_double(fraction) + ":" + std::to_string(mix_seed(o.seed, static_cast<std::uint64_t>(m)) >> 1);
    const EvidenceMask ev = make_evidence(bundle, spec, truth, "");
    const auto grid = maybe_grid(bundle, ev, settings, warnings);
    for (const auto& method : method_list) {
      try {
        MethodOutcome res = run_method(bundle, ev, truth, method, settings, m, grid ? &*grid : nullptr);
        for (const auto& w : res.warnings) warnings.push_back(method + "/" + std::to_string(m) + ": " + w);
        rows.push_back(res.row);
      } catch (const NumericalError& e) {
        MetricsRow failed;
        failed.method = method;
        failed.mask_id = m;
        failed.celbo = std::numeric_limits<double>::quiet_NaN();
        rows.push_back(failed);
        warnings.push_back(method + "/" + std::to_string(m) + " failed: " + e.what());
      }
    }
  }
  ensure_dir(o.out);
  textfmt::write_file(join(o.out, "metrics.csv"), metrics_csv(rows));
  for (const auto& w : warnings) std::cerr << "warning: " << w << "\n";
  write_report(o.out, "compare", config_echo, rows, {"metrics.csv"}, warnings);
  return kExitOk;
}

int cmd_sweep_hmc(const CommonOptions& o, const std::string& eps_list, const std::string& target_kind, int dim,
                  const std::string& config_echo) {
  const auto eps = to_doubles(eps_list);
  if (eps.empty()) throw ConfigError("--eps-list is empty");
  HmcConfig base;
  base.leapfrog_steps = o.hmc_leapfrog;
  base.burn_in = o.hmc_burnin;
  base.n_chains = o.hmc_chains;
  base.seed = o.seed;
  SweepTable table;
  if (target_kind == "posterior") {
    if (o.model_path.empty()) throw ConfigError("--model is required for a posterior sweep");
    const ModelBundle bundle = load_model(o.model_path);
    const Vector truth = truth_vector(bundle, o, o.row, 0);
    const EvidenceMask ev = make_evidence(bundle, o.mask, truth, o.evidence_values);
    table = hmc_tuning_sweep(posterior_target(bundle.decoder, ev), eps, base);
  } else if (target_kind == "unit-gaussian") {
    table = hmc_tuning_sweep(GmmTarget({{1.0, Vector::Zero(dim), Matrix::Identity(dim, dim)}}), eps, base);
  } else {
    throw ConfigError("unknown sweep target '" + target_kind + "'");
  }
  ensure_dir(o.out);
  textfmt::write_file(join(o.out, "acceptance.csv"), sweep_csv(table));
  std::string summary = "eps,min,q1,median,q3,max\n";
  for (const auto& q : table.summary) {
    summary += textfmt::format_double(q.step_size) + "," + textfmt::format_double(q.min) + "," +
               textfmt::format_double(q.q1) + "," + textfmt::format_double(q.median) + "," +
               textfmt::format_double(q.q3) + "," + textfmt::format_double(q.max) + "\n";
  }
  textfmt::write_file(join(o.out, "acceptance_summary.csv"), summary);
  write_report(o.out, "sweep-hmc", config_echo, {}, {"acceptance.csv", "acceptance_summary.csv"}, {});
  return kExitOk;
}

GmmTarget parse_gmm(const std::string& weights, const std::string& means, const std::string& vars) {
  const auto w = to_doubles(weights);
  const auto mean_groups = split(means, ';');
  const auto var_groups = split(vars, ';');
  if (mean_groups.size() != w.size() || var_groups.size() != w.size()) {
    throw ConfigError("GMM weights, means and variances must list the same number of components");
  }
  std::vector<GmmComponent> comps;
  for (std::size_t k = 0; k < w.size(); ++k) {
    const auto mu = to_doubles(mean_groups[k]);
    const auto var = to_doubles(var_groups[k]);
    if (mu.size() != var.size()) throw ConfigError("GMM mean and variance dimensions differ");
    Vector m = Eigen::Map<const Vector>(mu.data(), static_cast<Eigen::Index>(mu.size()));
    Vector v = Eigen::Map<const Vector>(var.data(), static_cast<Eigen::Index>(var.size()));
    comps.push_back({w[k], m, v.asDiagonal()});
  }
  return GmmTarget(std::move(comps));
}

int cmd_gmm_check(const CommonOptions& o, const std::string& weights, const std::string& means,
                  const std::string& vars, const std::string& methods, int exact_n,
                  const std::string& config_echo) {
  const GmmTarget gmm = parse_gmm(weights, means, vars);
  const MethodSettings settings = make_settings(o);
  if (exact_n < 2) throw ConfigError("--exact must be at least 2");
  const Rng root(o.seed);
  Rng exact_rng = root.derive("exact");
  const Matrix exact = gmm.sample(exact_rng, exact_n);
  Rng null_rng = root.derive("null");
  const Matrix null_draws = gmm.sample(null_rng, settings.samples);

  ensure_dir(o.out);
  std::vector<std::string> manifest = {"exact_samples.csv", "mmd.csv"};
  textfmt::write_file(join(o.out, "exact_samples.csv"), samples_csv(exact));
  std::string table = "method,mmd2,bandwidth,celbo\n";
  const MmdResult null_mmd = mmd(null_draws, exact);
  table += "exact," + textfmt::format_double(null_mmd.mmd2) + "," + textfmt::format_double(null_mmd.bandwidth) + ",\n";
  for (const auto& method : split(methods, ',')) {
    Matrix z;
    std::string celbo;
    if (method == "hmc") {
      HmcConfig cfg = settings.hmc;
      cfg.seed = root.derive("hmc").seed();
      cfg.n_samples = (settings.samples + cfg.n_chains - 1) / cfg.n_chains;
      z = hmc_sample(gmm, cfg).samples.leftCols(settings.samples);
    } else {
      const XCoderKind kind = parse_xcoder_kind(method);
      CelboConfig cfg = settings.celbo;
      cfg.seed = root.derive(method).seed();
      const FitReport fit = optimize_xcoder(gmm, kind, cfg);
      celbo = textfmt::format_double(fit.final.value);
      Rng draw = root.derive(method + "-draw");
      z.resize(gmm.dim(), settings.samples);
      for (int j = 0; j < settings.samples; ++j) z.col(j) = xcoder_apply(fit.xcoder, standard_normal(draw, gmm.dim())).z;
    }
    const MmdResult r = mmd(z, exact);
    table += method + "," + textfmt::format_double(r.mmd2) + "," + textfmt::format_double(r.bandwidth) + "," + celbo + "\n";
    textfmt::write_file(join(o.out, "samples_" + method + ".csv"), samples_csv(z));
    manifest.push_back("samples_" + method + ".csv");
  }
  textfmt::write_file(join(o.out, "mmd.csv"), table);
  write_report(o.out, "gmm-check", config_echo, {}, manifest, {});
  return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& raw_args) {
#if defined(__GLIBC__)
  // Keep batch-sized temporaries on the heap instead of fresh mmap pages.
  mallopt(M_MMAP_THRESHOLD, 64 << 20);
  mallopt(M_TRIM_THRESHOLD, 256 << 20);
#endif
  std::vector<std::string> args = raw_args;
  try {
    for (std::size_t i = 0; i + 1 < args.size(); ++i) {
      if (args[i] == "--config") {
        args = merge_config(args, textfmt::read_file(args[i + 1]));
        break;
      }
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  }

  CLI::App app{"Conditional inference on VAE decoders by cross-coding"};
  app.require_subcommand(1);
  app.option_defaults()->always_capture_default();
  CommonOptions o;
  std::string config_path;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--seed", o.seed, "Master seed");
    sub->add_option("--out", o.out, "Output directory");
    sub->add_option("--config", config_path, "key = value file; command-line flags take precedence");
  };

  // make-data
  auto* make_data = app.add_subcommand("make-data", "Generate a synthetic dataset CSV");
  std::string data_kind = "bars";
  int data_n = 2000;
  std::string data_out;
  make_data->add_option("--kind", data_kind, "Dataset kind (bars)");
  make_data->add_option("--n", data_n, "Number of items");
  make_data->add_option("--seed", o.seed, "Seed");
  make_data->add_option("--out", data_out, "Output CSV path")->required();

  // make-model
  auto* make_model = app.add_subcommand("make-model", "Write a constructed model file");
  std::string model_kind = "conjugate";
  int latent = 2;
  int output = 6;
  double sigma = 1.0;
  std::string model_out;
  make_model->add_option("--kind", model_kind, "conjugate, bimodal or toy");
  make_model->add_option("--latent-dim", latent, "Latent dimension (conjugate)");
  make_model->add_option("--output-dim", output, "Output dimension");
  make_model->add_option("--sigma", sigma, "Noise scale (conjugate)");
  make_model->add_option("--seed", o.seed, "Seed");
  make_model->add_option("--out", model_out, "Output model path")->required();

  // train-vae
  auto* train = app.add_subcommand("train-vae", "Train a VAE and write model.txt and elbo_trace.csv");
  TrainConfig tcfg;
  std::string hidden = "64";
  std::string act = "relu";
  std::string likelihood = "bernoulli";
  add_common(train);
  add_data_options(train, o);
  train->add_option("--latent-dim", tcfg.latent_dim, "Latent dimension");
  train->add_option("--hidden", hidden, "Comma-separated hidden widths");
  train->add_option("--activation", act, "Hidden activation");
  train->add_option("--likelihood", likelihood, "bernoulli or gaussian");
  train->add_option("--sigma", tcfg.sigma, "Gaussian noise scale");
  train->add_option("--epochs", tcfg.epochs, "Training epochs");
  train->add_option("--batch-size", tcfg.batch_size, "Minibatch size");
  train->add_option("--learning-rate", tcfg.learning_rate, "Adam learning rate");

  // infer
  auto* infer = app.add_subcommand("infer", "Run one inference method for one evidence mask");
  std::string method = "gvi";
  add_common(infer);
  add_data_options(infer, o);
  add_method_options(infer, o);
  infer->add_option("--model", o.model_path, "Model file");
  infer->add_option("--method", method, "gvi, nf, fcn, hmc, rs or rezende");
  infer->add_option("--mask", o.mask, "Mask spec");
  infer->add_option("--row", o.row, "Dataset row holding the true output");
  infer->add_option("--evidence-values", o.evidence_values, "Explicit observed values, one per mask index");

  // compare
  auto* compare = app.add_subcommand("compare", "Metrics over methods x random masks");
  std::string methods = "gvi,nf";
  int masks = 50;
  double fraction = 0.5;
  add_common(compare);
  add_data_options(compare, o);
  add_method_options(compare, o);
  compare->add_option("--model", o.model_path, "Model file");
  compare->add_option("--methods", methods, "Comma-separated methods");
  compare->add_option("--masks", masks, "Number of random masks");
  compare->add_option("--fraction", fraction, "Observed fraction per mask");
  compare->add_option("--row", o.row, "First dataset row");

  // sweep-hmc
  auto* sweep = app.add_subcommand("sweep-hmc", "HMC acceptance rates across step sizes");
  std::string eps_list = "0.001,0.01,0.05,0.1,0.5,1";
  std::string target_kind = "posterior";
  int sweep_dim = 2;
  int sweep_chains = 30;
  int sweep_burnin = 10000;
  add_common(sweep);
  add_data_options(sweep, o);
  sweep->add_option("--model", o.model_path, "Model file");
  sweep->add_option("--mask", o.mask, "Mask spec");
  sweep->add_option("--row", o.row, "Dataset row holding the true output");
  sweep->add_option("--evidence-values", o.evidence_values, "Explicit observed values");
  sweep->add_option("--eps-list", eps_list, "Comma-separated step sizes");
  sweep->add_option("--target", target_kind, "posterior or unit-gaussian");
  sweep->add_option("--dim", sweep_dim, "Dimension of the unit-gaussian target");
  sweep->add_option("--hmc-leapfrog", o.hmc_leapfrog, "Leapfrog steps");
  sweep->add_option("--hmc-burnin", sweep_burnin, "Iterations per chain");
  sweep->add_option("--hmc-chains", sweep_chains, "Chains per step size");

  // gmm-check
  auto* gmm = app.add_subcommand("gmm-check", "Fit methods to an analytic GMM and report MMD");
  std::string gmm_weights = "0.5,0.5";
  std::string gmm_means = "-4,0;4,0";
  std::string gmm_vars = "1,1;1,1";
  std::string gmm_methods = "gvi,nf,fcn,hmc";
  int exact_n = 10000;
  add_common(gmm);
  add_method_options(gmm, o);
  gmm->add_option("--gmm-weights", gmm_weights, "Component weights");
  gmm->add_option("--gmm-means", gmm_means, "Means, components separated by ';'");
  gmm->add_option("--gmm-vars", gmm_vars, "Diagonal variances, components separated by ';'");
  gmm->add_option("--methods", gmm_methods, "Methods to fit");
  gmm->add_option("--exact", exact_n, "Exact GMM draws used as reference");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    std::ostringstream err;
    const int code = app.exit(e, std::cout, err);
    std::cerr << err.str();
    return code == 0 ? kExitOk : kExitUsage;
  }

  auto echo = [](CLI::App* sub) { return sub->config_to_str(true, false); };
  try {
    if (*make_data) return cmd_make_data(data_kind, data_n, o.seed, data_out);
    if (*make_model) return cmd_make_model(model_kind, o.seed, latent, output, sigma, model_out);
    if (*train) return cmd_train_vae(o, tcfg, hidden, act, likelihood);
    if (*infer) return cmd_infer(o, method, echo(infer));
    if (*compare) return cmd_compare(o, methods, masks, fraction, echo(compare));
    if (*sweep) {
      o.hmc_chains = sweep_chains;
      o.hmc_burnin = sweep_burnin;
      return cmd_sweep_hmc(o, eps_list, target_kind, sweep_dim, echo(sweep));
    }
    if (*gmm) return cmd_gmm_check(o, gmm_weights, gmm_means, gmm_vars, gmm_methods, exact_n, echo(gmm));
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  }
  return kExitUsage;
}

}  // namespace xcoding::cli
