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

#include "xcoding/optim.hpp"

#include "xcoding/error.hpp"

#include <cmath>
#include <deque>

namespace xcoding {

Adam::Adam(Eigen::Index n, AdamConfig config) : config_(config), m_(Vector::Zero(n)), v_(Vector::Zero(n)) {}

void Adam::step(Vector& params, const Vector& grad) {
  ++t_;
  m_ = config_.beta1 * m_ + (1.0 - config_.beta1) * grad;
  v_ = config_.beta2 * v_ + (1.0 - config_.beta2) * grad.cwiseProduct(grad);
  const double c1 = 1.0 - std::pow(config_.beta1, t_);
  const double c2 = 1.0 - std::pow(config_.beta2, t_);
  params.array() -= config_.learning_rate * (m_.array() / c1) / ((v_.array() / c2).sqrt() + config_.epsilon);
}

LbfgsResult lbfgs_minimize(const Objective& objective, Vector x0, const LbfgsConfig& config,
                           const StepCallback& on_step) {
  LbfgsResult result;
  Vector x = std::move(x0);
  Vector g(x.size());
  double f = objective(x, &g);
  if (!std::isfinite(f) || !g.allFinite()) throw NumericalError("lbfgs: objective not finite at the start point");
  result.trace.push_back(f);

  std::deque<Vector> s_hist;
  std::deque<Vector> y_hist;
  std::deque<double> rho_hist;

  result.stop_reason = "max_iters";
  for (int iter = 0; iter < config.max_iters; ++iter) {
    if (g.norm() <= config.grad_tol) {
      result.stop_reason = "grad_tol";
      break;
    }
    // Two-loop recursion.
    Vector q = g;
    std::vector<double> alpha(s_hist.size());
    for (std::size_t k = s_hist.size(); k-- > 0;) {
      alpha[k] = rho_hist[k] * s_hist[k].dot(q);
      q -= alpha[k] * y_hist[k];
    }
    if (!s_hist.empty()) {
      q *= s_hist.back().dot(y_hist.back()) / y_hist.back().squaredNorm();
    } else {
      q /= std::max(1.0, g.norm());
    }
    for (std::size_t k = 0; k < s_hist.size(); ++k) {
      const double beta = rho_hist[k] * y_hist[k].dot(q);
      q += (alpha[k] - beta) * s_hist[k];
    }
    Vector direction = -q;
    double slope = g.dot(direction);
    if (!(slope < 0)) {
      // Lost descent: restart from steepest descent.
      s_hist.clear();
      y_hist.clear();
      rho_hist.clear();
      direction = -g / std::max(1.0, g.norm());
      slope = g.dot(direction);
    }

    double step = 1.0;
    bool accepted = false;
    Vector x_new;
    Vector g_new(x.size());
    double f_new = f;
    for (int ls = 0; ls < config.max_line_search; ++ls) {
      x_new = x + step * direction;
      f_new = objective(x_new, &g_new);
      if (std::isfinite(f_new) && g_new.allFinite() && f_new <= f + config.armijo * step * slope) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) {
      result.stop_reason = "line_search";
      break;
    }

    Vector s = x_new - x;
    Vector y = g_new - g;
    const double sy = s.dot(y);
    if (sy > 1e-12 * s.norm() * y.norm()) {
      s_hist.push_back(std::move(s));
      y_hist.push_back(std::move(y));
      rho_hist.push_back(1.0 / sy);
      if (static_cast<int>(s_hist.size()) > config.memory) {
        s_hist.pop_front();
        y_hist.pop_front();
        rho_hist.pop_front();
      }
    }
    const double decrease = f - f_new;
    x = std::move(x_new);
    g = g_new;
    f = f_new;
    result.trace.push_back(f);
    result.iterations = iter + 1;
    if (on_step) on_step(result.iterations, f);
    if (decrease <= config.rel_tol * (1.0 + std::abs(f))) {
      result.stop_reason = "rel_tol";
      break;
    }
    const auto n = static_cast<int>(result.trace.size());
    if (config.window > 0 && n > config.window &&
        result.trace[static_cast<std::size_t>(n - 1 - config.window)] - f < config.window_tol) {
      result.stop_reason = "window_tol";
      break;
    }
  }
  result.x = std::move(x);
  result.value = f;
  return result;
}

}  // namespace xcoding
