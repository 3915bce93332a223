#pragma once

#include <cmath>
#include <vector>

#include "ccat/netcore.hpp"
#include "ccat/rng.hpp"

namespace ccat::test {

// Random dense net with nonzero biases; hidden layers ReLU, identity logits.
inline Network random_net(std::size_t d, const std::vector<std::size_t>& hidden, std::size_t k, Rng& rng,
                          double bias_scale = 0.3) {
  Network net = Network::mlp(d, hidden, k, rng);
  for (std::size_t l = 0; l < net.num_layers(); ++l) {
    auto& layer = net.mutable_layer(l);
    for (Eigen::Index i = 0; i < layer.biases.size(); ++i) layer.biases[i] = bias_scale * rng.uniform(-1.0, 1.0);
  }
  return net;
}

inline Vector random_point(std::size_t d, Rng& rng) {
  Vector x(static_cast<Eigen::Index>(d));
  for (Eigen::Index i = 0; i < x.size(); ++i) x[i] = rng.uniform();
  return x;
}

// Logits by explicit loops, independent of Eigen products.
inline std::vector<double> naive_logits(const Network& net, const std::vector<double>& x) {
  std::vector<double> a = x;
  for (const auto& layer : net.layers()) {
    std::vector<double> z(layer.out_dim(), 0.0);
    for (std::size_t o = 0; o < layer.out_dim(); ++o) {
      double s = layer.biases[static_cast<Eigen::Index>(o)];
      for (std::size_t i = 0; i < layer.in_dim(); ++i) {
        s += layer.weights(static_cast<Eigen::Index>(o), static_cast<Eigen::Index>(i)) * a[i];
      }
      z[o] = layer.activation == Activation::ReLU ? std::max(0.0, s) : s;
    }
    a = std::move(z);
  }
  return a;
}

// |a - b| relative to the larger magnitude, with `floor` guarding near-zero values.
inline double rel_err(double a, double b, double floor = 1e-3) {
  return std::abs(a - b) / std::max({floor, std::abs(a), std::abs(b)});
}

}  // namespace ccat::test
