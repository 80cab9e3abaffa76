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

#include <functional>
#include <string>
#include <vector>

namespace xcoding {

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// Adam on a flat parameter vector; step() descends along `grad`.
class Adam {
 public:
  Adam(Eigen::Index n, AdamConfig config);
  void step(Vector& params, const Vector& grad);
  int steps() const { return t_; }

 private:
  AdamConfig config_;
  Vector m_;
  Vector v_;
  int t_ = 0;
};

struct LbfgsConfig {
  int max_iters = 200;
  int memory = 10;
  double grad_tol = 1e-7;
  // Stop when the decrease over one iteration falls below rel_tol * (1 + |f|).
  double rel_tol = 1e-12;
  int max_line_search = 40;
  double armijo = 1e-4;
  // Stop once the objective fell by less than window_tol over the last window steps.
  int window = 0;
  double window_tol = 0.0;
};

// Objective to minimize. Must fill `grad` when non-null. Infeasible points
// (e.g. a singular cross-coder) return +inf and are rejected by the line
// search.
using Objective = std::function<double(const Vector& x, Vector* grad)>;

struct LbfgsResult {
  Vector x;
  double value = 0.0;
  int iterations = 0;
  std::vector<double> trace;  // objective after every accepted step, trace[0] = start
  std::string stop_reason;
};

// Called after every accepted step with (iteration, objective). The accepted
// point is always the most recent objective evaluation.
using StepCallback = std::function<void(int, double)>;

LbfgsResult lbfgs_minimize(const Objective& objective, Vector x0, const LbfgsConfig& config,
                           const StepCallback& on_step = {});

}  // namespace xcoding
