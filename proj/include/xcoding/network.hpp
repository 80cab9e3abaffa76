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

#include "xcoding/numkit.hpp"

#include <string>
#include <vector>

namespace xcoding {

enum class Activation { kRelu, kTanh, kIdentity, kSigmoid };

std::string to_string(Activation act);
Activation parse_activation(const std::string& name);

// Layer widths from input to output, one activation per weight layer.
struct NetworkSpec {
  std::vector<int> sizes;
  std::vector<Activation> activations;

  int input_dim() const { return sizes.front(); }
  int output_dim() const { return sizes.back(); }
  std::size_t num_layers() const { return activations.size(); }
  void validate() const;
};

// Hidden layers share `hidden_act`; the last layer uses `output_act`.
NetworkSpec make_spec(int input, const std::vector<int>& hidden, int output, Activation hidden_act,
                      Activation output_act);

struct DenseLayer {
  Matrix weight;  // out x in
  Vector bias;
};

// Per-layer activations of a batched forward pass. Column j of every matrix
// belongs to sample j.
struct Tape {
  std::vector<Matrix> inputs;  // inputs[l] feeds layer l
  std::vector<Matrix> pre;     // W x + b
  std::vector<Matrix> post;    // act(pre)
};

class Network {
 public:
  Network() = default;
  // Zero weights and biases.
  explicit Network(NetworkSpec spec);

  // Scaled-uniform (Glorot) weights, zero biases.
  static Network glorot(NetworkSpec spec, Rng& rng);

  const NetworkSpec& spec() const { return spec_; }
  int input_dim() const { return spec_.input_dim(); }
  int output_dim() const { return spec_.output_dim(); }
  const std::vector<DenseLayer>& layers() const { return layers_; }
  std::vector<DenseLayer>& layers() { return layers_; }

  // Batched forward: columns are samples. Throws NumericalError naming the
  // first layer that produces a non-finite value.
  Matrix forward(const Matrix& input, Tape* tape = nullptr) const;
  Vector forward(const Vector& input) const;

  // Reverse pass. `upstream` is dL/d(post) of the last layer, or dL/d(pre)
  // when `upstream_is_pre` is set (used for the sigmoid-Bernoulli pairing).
  // Accumulates parameter gradients into `param_grad` (flat, same layout as
  // params()) when non-null, and returns dL/d(input).
  Matrix backward(const Tape& tape, const Matrix& upstream, bool upstream_is_pre,
                  Vector* param_grad) const;

  Eigen::Index num_params() const;
  Vector params() const;
  void set_params(const Eigen::Ref<const Vector>& flat);

 private:
  NetworkSpec spec_;
  std::vector<DenseLayer> layers_;
};

// Elementwise activation and its derivative expressed via (pre, post).
Matrix activate(Activation act, const Matrix& pre);
Matrix activation_slope(Activation act, const Matrix& pre, const Matrix& post);

}  // namespace xcoding
