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

#include <map>
#include <string>
#include <vector>

namespace xcoding::textfmt {

// Line-oriented container shared by model and cross-coder files:
//
//   XCVAE 1
//   [section]
//   key=value
//   <whitespace-separated decimal row>
//   ...
inline constexpr const char* kMagic = "XCVAE";
inline constexpr int kVersion = 1;

struct Section {
  std::string name;
  int line = 0;
  std::map<std::string, std::string> keys;
  std::vector<std::vector<double>> rows;
  std::vector<int> row_lines;

  const std::string& key(const std::string& name) const;
  bool has(const std::string& name) const { return keys.count(name) > 0; }
};

struct Document {
  std::vector<Section> sections;
  const Section* find(const std::string& name) const;
};

Document parse(const std::string& text);

// 17 significant digits: round-trips every double.
std::string format_double(double x);
std::string format_row(const Eigen::Ref<const Vector>& row);
std::string header();

// Network weights as `sizes=`/`act=` keys plus W rows then the bias row per
// layer.
void write_network(std::string& out, const Network& net);
// Reads a network starting at `section.rows[*cursor]`.
Network read_network(const Section& section, std::size_t* cursor);

std::vector<int> parse_ints(const std::string& text, int line);
std::vector<std::string> split_words(const std::string& text);

std::string read_file(const std::string& path);
void write_file(const std::string& path, const std::string& contents);

}  // namespace xcoding::textfmt
