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
#include "xcoding/textfmt.hpp"

#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <sstream>

namespace xcoding::textfmt {

const std::string& Section::key(const std::string& k) const {
  auto it = keys.find(k);
  if (it == keys.end()) throw ParseError("section [" + name + "] is missing key '" + k + "'", line);
  return it->second;
}

const Section* Document::find(const std::string& n) const {
  for (const auto& s : sections)
    if (s.name == n) return &s;
  return nullptr;
}

std::vector<std::string> split_words(const std::string& text) {
  std::istringstream in(text);
  std::vector<std::string> words;
  std::string w;
  while (in >> w) words.push_back(w);
  return words;
}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

double parse_double(const std::string& word, int line) {
  const char* begin = word.c_str();
  char* end = nullptr;
  errno = 0;
  const double v = std::strtod(begin, &end);
  if (end == begin || *end != '\0' || errno == ERANGE || !std::isfinite(v)) {
    throw ParseError("bad number '" + word + "'", line);
  }
  return v;
}

}  // namespace

std::vector<int> parse_ints(const std::string& text, int line) {
  std::vector<int> out;
  for (const auto& w : split_words(text)) {
    char* end = nullptr;
    const long v = std::strtol(w.c_str(), &end, 10);
    if (end == w.c_str() || *end != '\0') throw ParseError("bad integer '" + w + "'", line);
    out.push_back(static_cast<int>(v));
  }
  return out;
}

Document parse(const std::string& text) {
  std::istringstream in(text);
  std::string raw;
  int line_no = 0;
  bool saw_header = false;
  Document doc;
  while (std::getline(in, raw)) {
    ++line_no;
    const std::string line = trim(raw);
    if (line.empty() || line[0] == '#') continue;
    if (!saw_header) {
      const auto words = split_words(line);
      if (words.size() != 2 || words[0] != kMagic) throw ParseError("missing XCVAE header", line_no);
      if (words[1] != std::to_string(kVersion)) {
        throw VersionError("unsupported format version '" + words[1] + "' (expected " +
                               std::to_string(kVersion) + ")",
                           line_no);
      }
      saw_header = true;
      continue;
    }
    if (line.front() == '[') {
      if (line.back() != ']') throw ParseError("unterminated section header", line_no);
      Section s;
      s.name = line.substr(1, line.size() - 2);
      s.line = line_no;
      doc.sections.push_back(std::move(s));
      continue;
    }
    if (doc.sections.empty()) throw ParseError("content before the first section", line_no);
    Section& s = doc.sections.back();
    const auto eq = line.find('=');
    if (eq != std::string::npos) {
      if (!s.rows.empty()) throw ParseError("key after data rows", line_no);
      s.keys[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
      continue;
    }
    std::vector<double> row;
    for (const auto& w : split_words(line)) row.push_back(parse_double(w, line_no));
    s.rows.push_back(std::move(row));
    s.row_lines.push_back(line_no);
  }
  if (!saw_header) throw ParseError("empty file: missing XCVAE header");
  return doc;
}

std::string format_double(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

std::string format_row(const Eigen::Ref<const Vector>& row) {
  std::string out;
  for (Eigen::Index i = 0; i < row.size(); ++i) {
    if (i) out += ' ';
    out += format_double(row[i]);
  }
  return out;
}

std::string header() { return std::string(kMagic) + " " + std::to_string(kVersion) + "\n"; }

void write_network(std::string& out, const Network& net) {
  out += "sizes=";
  for (std::size_t i = 0; i < net.spec().sizes.size(); ++i) {
    if (i) out += ' ';
    out += std::to_string(net.spec().sizes[i]);
  }
  out += "\nact=";
  for (std::size_t i = 0; i < net.spec().activations.size(); ++i) {
    if (i) out += ' ';
    out += to_string(net.spec().activations[i]);
  }
  out += '\n';
}

namespace {

void write_network_rows(std::string& out, const Network& net) {
  for (const auto& layer : net.layers()) {
    for (Eigen::Index i = 0; i < layer.weight.rows(); ++i) out += format_row(layer.weight.row(i).transpose()) + '\n';
    out += format_row(layer.bias) + '\n';
  }
}

}  // namespace

Network read_network(const Section& section, std::size_t* cursor) {
  NetworkSpec spec;
  const int line = section.line;
  spec.sizes = parse_ints(section.key("sizes"), line);
  for (const auto& w : split_words(section.key("act"))) {
    try {
      spec.activations.push_back(parse_activation(w));
    } catch (const ConfigError& e) {
      throw ParseError(e.what(), line);
    }
  }
  try {
    spec.validate();
  } catch (const ConfigError& e) {
    throw ParseError(std::string("[") + section.name + "] " + e.what(), line);
  }
  Network net(spec);
  auto next_row = [&](std::size_t expect) -> const std::vector<double>& {
    if (*cursor >= section.rows.size()) {
      throw ParseError("[" + section.name + "] ends early: expected more weight rows", line);
    }
    const auto& row = section.rows[*cursor];
    if (row.size() != expect) {
      throw ParseError("[" + section.name + "] row has " + std::to_string(row.size()) + " values, expected " +
                           std::to_string(expect),
                       section.row_lines[*cursor]);
    }
    ++*cursor;
    return row;
  };
  for (auto& layer : net.layers()) {
    for (Eigen::Index i = 0; i < layer.weight.rows(); ++i) {
      const auto& row = next_row(static_cast<std::size_t>(layer.weight.cols()));
      for (Eigen::Index j = 0; j < layer.weight.cols(); ++j) layer.weight(i, j) = row[static_cast<std::size_t>(j)];
    }
    const auto& bias = next_row(static_cast<std::size_t>(layer.bias.size()));
    for (Eigen::Index i = 0; i < layer.bias.size(); ++i) layer.bias[i] = bias[static_cast<std::size_t>(i)];
  }
  return net;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, const std::string& contents) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write '" + path + "'");
  out << contents;
  if (!out) throw ConfigError("write failed for '" + path + "'");
}

}  // namespace xcoding::textfmt

namespace xcoding {

std::string serialize_model(const DecoderModel& decoder, const EncoderModel* encoder) {
  using namespace textfmt;
  std::string out = header();
  out += "[decoder]\n";
  write_network(out, decoder.network());
  out += "likelihood=" + to_string(decoder.likelihood()) + "\n";
  out += "sigma=" + format_double(decoder.sigma()) + "\n";
  write_network_rows(out, decoder.network());
  if (encoder) {
    out += "[encoder]\n";
    write_network(out, encoder->network());
    write_network_rows(out, encoder->network());
  }
  return out;
}

ModelBundle parse_model(const std::string& text) {
  using namespace textfmt;
  const Document doc = parse(text);
  const Section* dec = doc.find("decoder");
  if (!dec) throw ParseError("model file has no [decoder] section");
  std::size_t cursor = 0;
  Network dec_net = read_network(*dec, &cursor);
  if (cursor != dec->rows.size()) throw ParseError("[decoder] has trailing rows", dec->row_lines[cursor]);
  Likelihood lik;
  double sigma;
  try {
    lik = parse_likelihood(dec->key("likelihood"));
    sigma = std::strtod(dec->key("sigma").c_str(), nullptr);
  } catch (const ConfigError& e) {
    throw ParseError(e.what(), dec->line);
  }
  std::optional<DecoderModel> decoder;
  try {
    decoder.emplace(std::move(dec_net), lik, sigma);
  } catch (const ConfigError& e) {
    throw ParseError(e.what(), dec->line);
  }
  ModelBundle bundle{std::move(*decoder), std::nullopt};
  if (const Section* enc = doc.find("encoder")) {
    cursor = 0;
    Network enc_net = read_network(*enc, &cursor);
    if (cursor != enc->rows.size()) throw ParseError("[encoder] has trailing rows", enc->row_lines[cursor]);
    if (enc_net.input_dim() != bundle.decoder.output_dim() ||
        enc_net.output_dim() != 2 * bundle.decoder.latent_dim()) {
      throw ParseError("encoder dimensions do not match the decoder", enc->line);
    }
    bundle.encoder.emplace(std::move(enc_net));
  }
  return bundle;
}

void save_model(const std::string& path, const DecoderModel& decoder, const EncoderModel* encoder) {
  textfmt::write_file(path, serialize_model(decoder, encoder));
}

ModelBundle load_model(const std::string& path) { return parse_model(textfmt::read_file(path)); }

Matrix load_dataset_csv(const std::string& path) {
  std::istringstream in(textfmt::read_file(path));
  std::vector<std::vector<double>> rows;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::vector<double> row;
    std::stringstream cells(line);
    std::string cell;
    while (std::getline(cells, cell, ',')) {
      char* end = nullptr;
      const double v = std::strtod(cell.c_str(), &end);
      while (end && (*end == ' ' || *end == '\r' || *end == '\t')) ++end;
      if (end == cell.c_str() || (end && *end != '\0')) throw ParseError("bad CSV value '" + cell + "'", line_no);
      row.push_back(v);
    }
    if (!rows.empty() && row.size() != rows.front().size()) {
      throw ParseError("CSV rows have inconsistent length", line_no);
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw ParseError("dataset '" + path + "' is empty");
  Matrix data(static_cast<Eigen::Index>(rows.front().size()), static_cast<Eigen::Index>(rows.size()));
  for (std::size_t j = 0; j < rows.size(); ++j)
    for (std::size_t i = 0; i < rows[j].size(); ++i)
      data(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[j][i];
  return data;
}

void save_dataset_csv(const std::string& path, const Matrix& data) {
  std::string out;
  for (Eigen::Index j = 0; j < data.cols(); ++j) {
    for (Eigen::Index i = 0; i < data.rows(); ++i) {
      if (i) out += ',';
      out += textfmt::format_double(data(i, j));
    }
    out += '\n';
  }
  textfmt::write_file(path, out);
}

Matrix load_dataset_binary(const std::string& path, int dim) {
  if (dim <= 0) throw ConfigError("binary dataset needs a positive dimension");
  const std::string bytes = textfmt::read_file(path);
  const std::size_t per = sizeof(double) * static_cast<std::size_t>(dim);
  if (bytes.empty() || bytes.size() % per != 0) {
    throw ParseError("binary dataset size is not a multiple of " + std::to_string(dim) + " float64 values");
  }
  const auto n = static_cast<Eigen::Index>(bytes.size() / per);
  Matrix data(dim, n);
  // Host order is assumed little-endian.
  std::memcpy(data.data(), bytes.data(), bytes.size());
  return data;
}

}  // namespace xcoding
