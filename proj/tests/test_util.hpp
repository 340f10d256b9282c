#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "inv/nn.hpp"

// Test-only reference implementations, kept independent of the library's
// evaluation path on purpose.

namespace testutil {

// Straight-line MLP forward with double accumulation.
inline std::vector<std::vector<double>> naive_forward(const inv::MlpNetwork& net,
                                                      const std::vector<std::vector<double>>& x) {
  std::vector<std::vector<double>> cur = x;
  for (const auto& layer : net.layers) {
    std::vector<std::vector<double>> next(cur.size(),
                                          std::vector<double>(layer.out_dim(), 0.0));
    for (std::size_t row = 0; row < cur.size(); ++row) {
      for (int o = 0; o < layer.out_dim(); ++o) {
        double acc = layer.bias[o];
        for (int i = 0; i < layer.in_dim(); ++i) {
          acc += static_cast<double>(layer.weights(o, i)) * cur[row][i];
        }
        switch (layer.act) {
          case inv::Activation::kReLU:
            acc = acc > 0.0 ? acc : 0.0;
            break;
          case inv::Activation::kSigmoid:
            acc = 1.0 / (1.0 + std::exp(-acc));
            break;
          case inv::Activation::kNone:
            break;
        }
        next[row][o] = acc;
      }
    }
    cur = std::move(next);
  }
  return cur;
}

// MSE in double, plus the ReLU sign pattern seen during the evaluation so
// finite differences can skip parameters whose perturbation crosses a kink.
inline double naive_mse(const inv::MlpNetwork& net, const std::vector<std::vector<double>>& x,
                        const std::vector<std::vector<double>>& target,
                        std::vector<bool>* relu_signs = nullptr) {
  std::vector<std::vector<double>> cur = x;
  if (relu_signs) relu_signs->clear();
  for (const auto& layer : net.layers) {
    std::vector<std::vector<double>> next(cur.size(),
                                          std::vector<double>(layer.out_dim(), 0.0));
    for (std::size_t row = 0; row < cur.size(); ++row) {
      for (int o = 0; o < layer.out_dim(); ++o) {
        double acc = layer.bias[o];
        for (int i = 0; i < layer.in_dim(); ++i) {
          acc += static_cast<double>(layer.weights(o, i)) * cur[row][i];
        }
        switch (layer.act) {
          case inv::Activation::kReLU:
            if (relu_signs) relu_signs->push_back(acc > 0.0);
            acc = acc > 0.0 ? acc : 0.0;
            break;
          case inv::Activation::kSigmoid:
            acc = 1.0 / (1.0 + std::exp(-acc));
            break;
          case inv::Activation::kNone:
            break;
        }
        next[row][o] = acc;
      }
    }
    cur = std::move(next);
  }
  double sum = 0.0;
  std::size_t count = 0;
  for (std::size_t row = 0; row < cur.size(); ++row) {
    for (std::size_t c = 0; c < cur[row].size(); ++c) {
      const double d = cur[row][c] - target[row][c];
      sum += d * d;
      ++count;
    }
  }
  return sum / static_cast<double>(count);
}

struct GradCheckResult {
  int checked = 0;
  int skipped = 0;  // finite difference crossed a ReLU kink
  double max_rel_err = 0.0;
};

// Central finite differences (h on the parameter, loss evaluated in double)
// against the library's analytic gradients.
GradCheckResult finite_difference_check(const inv::MlpNetwork& net,
                                        const std::vector<std::vector<double>>& x,
                                        const std::vector<std::vector<double>>& target,
                                        const inv::Gradients& analytic, double h);

// Deterministic random small net + batch for gradient checks.
inv::MlpNetwork random_small_net(inv::Rng& rng, int* input_dim_out);

}  // namespace testutil
