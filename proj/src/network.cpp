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

#include "xcoding/network.hpp"

#include "xcoding/error.hpp"

#include <cmath>

namespace xcoding {

std::string to_string(Activation act) {
  switch (act) {
    case Activation::kRelu: return "relu";
    case Activation::kTanh: return "tanh";
    case Activation::kIdentity: return "identity";
    case Activation::kSigmoid: return "sigmoid";
  }
  return "?";
}

Activation parse_activation(const std::string& name) {
  if (name == "relu") return Activation::kRelu;
  if (name == "tanh") return Activation::kTanh;
  if (name == "identity") return Activation::kIdentity;
  if (name == "sigmoid") return Activation::kSigmoid;
  throw ConfigError("unknown activation '" + name + "'");
}

void NetworkSpec::validate() const {
  if (sizes.size() < 2) throw ConfigError("network needs at least one layer");
  if (activations.size() + 1 != sizes.size()) {
    throw ConfigError("network has " + std::to_string(sizes.size() - 1) + " layers but " +
                      std::to_string(activations.size()) + " activations");
  }
  for (int s : sizes)
    if (s <= 0) throw ConfigError("network layer sizes must be positive");
}

NetworkSpec make_spec(int input, const std::vector<int>& hidden, int output, Activation hidden_act,
                      Activation output_act) {
  NetworkSpec spec;
  spec.sizes.push_back(input);
  for (int h : hidden) {
    spec.sizes.push_back(h);
    spec.activations.push_back(hidden_act);
  }
  spec.sizes.push_back(output);
  spec.activations.push_back(output_act);
  spec.validate();
  return spec;
}

Network::Network(NetworkSpec spec) : spec_(std::move(spec)) {
  spec_.validate();
  for (std::size_t l = 0; l < spec_.num_layers(); ++l) {
    layers_.push_back({Matrix::Zero(spec_.sizes[l + 1], spec_.sizes[l]), Vector::Zero(spec_.sizes[l + 1])});
  }
}

Network Network::glorot(NetworkSpec spec, Rng& rng) {
  Network net(std::move(spec));
  for (auto& layer : net.layers_) {
    const double limit = std::sqrt(6.0 / static_cast<double>(layer.weight.rows() + layer.weight.cols()));
    for (Eigen::Index i = 0; i < layer.weight.rows(); ++i)
      for (Eigen::Index j = 0; j < layer.weight.cols(); ++j)
        layer.weight(i, j) = limit * (2.0 * rng.uniform() - 1.0);
  }
  return net;
}

Matrix activate(Activation act, const Matrix& pre) {
  switch (act) {
    case Activation::kRelu: return pre.cwiseMax(0.0);
    case Activation::kTanh: return pre.array().tanh().matrix();
    case Activation::kIdentity: return pre;
    case Activation::kSigmoid: {
      const Eigen::ArrayXXd e = (-pre.array().abs()).exp();
      const Eigen::ArrayXXd r = (1.0 + e).inverse();
      return (pre.array() >= 0.0).select(r, e * r).matrix();
    }
  }
  return pre;
}

Matrix activation_slope(Activation act, const Matrix& pre, const Matrix& post) {
  switch (act) {
    case Activation::kRelu: return (pre.array() > 0.0).cast<double>().matrix();
    case Activation::kTanh: return (1.0 - post.array().square()).matrix();
    case Activation::kIdentity: return Matrix::Ones(pre.rows(), pre.cols());
    case Activation::kSigmoid: return (post.array() * (1.0 - post.array())).matrix();
  }
  return Matrix::Ones(pre.rows(), pre.cols());
}

Matrix Network::forward(const Matrix& input, Tape* tape) const {
  if (input.rows() != input_dim()) {
    throw ConfigError("network expects input of size " + std::to_string(input_dim()) + ", got " +
                      std::to_string(input.rows()));
  }
  if (tape) {
    tape->inputs.clear();
    tape->pre.clear();
    tape->post.clear();
  }
  Matrix x = input;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    Matrix pre = layers_[l].weight * x;
    pre.colwise() += layers_[l].bias;
    Matrix post = activate(spec_.activations[l], pre);
    if (!post.allFinite()) {
      throw NumericalError("non-finite activation in layer " + std::to_string(l));
    }
    if (tape) {
      tape->inputs.push_back(std::move(x));
      tape->pre.push_back(std::move(pre));
      tape->post.push_back(post);
    }
    x = std::move(post);
  }
  return x;
}

Vector Network::forward(const Vector& input) const { return forward(Matrix(input)).col(0); }

Matrix Network::backward(const Tape& tape, const Matrix& upstream, bool upstream_is_pre,
                         Vector* param_grad) const {
  if (param_grad && param_grad->size() != num_params()) *param_grad = Vector::Zero(num_params());
  // Parameter offsets of each layer inside the flat vector.
  std::vector<Eigen::Index> offset(layers_.size());
  Eigen::Index running = 0;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    offset[l] = running;
    running += layers_[l].weight.size() + layers_[l].bias.size();
  }

  Matrix grad = upstream;
  for (std::size_t li = layers_.size(); li-- > 0;) {
    Matrix grad_pre;
    if (li + 1 == layers_.size() && upstream_is_pre) {
      grad_pre = grad;
    } else {
      grad_pre = grad.cwiseProduct(activation_slope(spec_.activations[li], tape.pre[li], tape.post[li]));
    }
    const auto& layer = layers_[li];
    if (param_grad) {
      const Eigen::Index rows = layer.weight.rows();
      const Eigen::Index cols = layer.weight.cols();
      // Row-major layout of W, then b.
      Matrix gw = grad_pre * tape.inputs[li].transpose();
      for (Eigen::Index i = 0; i < rows; ++i)
        for (Eigen::Index j = 0; j < cols; ++j) (*param_grad)[offset[li] + i * cols + j] += gw(i, j);
      param_grad->segment(offset[li] + rows * cols, rows) += grad_pre.rowwise().sum();
    }
    grad = layer.weight.transpose() * grad_pre;
  }
  return grad;
}

Eigen::Index Network::num_params() const {
  Eigen::Index n = 0;
  for (const auto& layer : layers_) n += layer.weight.size() + layer.bias.size();
  return n;
}

Vector Network::params() const {
  Vector flat(num_params());
  Eigen::Index k = 0;
  for (const auto& layer : layers_) {
    for (Eigen::Index i = 0; i < layer.weight.rows(); ++i)
      for (Eigen::Index j = 0; j < layer.weight.cols(); ++j) flat[k++] = layer.weight(i, j);
    for (Eigen::Index i = 0; i < layer.bias.size(); ++i) flat[k++] = layer.bias[i];
  }
  return flat;
}

void Network::set_params(const Eigen::Ref<const Vector>& flat) {
  if (flat.size() != num_params()) throw ConfigError("network parameter vector has the wrong length");
  Eigen::Index k = 0;
  for (auto& layer : layers_) {
    for (Eigen::Index i = 0; i < layer.weight.rows(); ++i)
      for (Eigen::Index j = 0; j < layer.weight.cols(); ++j) layer.weight(i, j) = flat[k++];
    for (Eigen::Index i = 0; i < layer.bias.size(); ++i) layer.bias[i] = flat[k++];
  }
}

}  // namespace xcoding
