#pragma once

#include <cstddef>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "ccat/rng.hpp"

namespace ccat {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

struct ShapeError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

enum class Activation { ReLU, Identity };

std::string to_string(Activation a);
Activation activation_from_string(const std::string& s);

struct DenseLayer {
  Matrix weights;  // out_dim x in_dim
  Vector biases;   // out_dim
  Activation activation = Activation::ReLU;

  std::size_t in_dim() const { return static_cast<std::size_t>(weights.cols()); }
  std::size_t out_dim() const { return static_cast<std::size_t>(weights.rows()); }
};

/// Dense feedforward classifier. Hidden layers use ReLU; the last layer
/// produces the K logits.
class Network {
 public:
  /// Throws ShapeError if the layer dimensions do not chain or an identity
  /// activation appears before the last layer.
  Network(std::size_t input_dim, std::vector<DenseLayer> layers);

  /// input -> hidden... -> K with ReLU hidden layers and identity logits.
  /// Weights are uniform in +-sqrt(6 / (fan_in + fan_out)), biases zero.
  static Network mlp(std::size_t input_dim, const std::vector<std::size_t>& hidden,
                     std::size_t num_classes, Rng& rng);

  std::size_t input_dim() const { return input_dim_; }
  std::size_t num_classes() const { return layers_.back().out_dim(); }
  std::size_t num_layers() const { return layers_.size(); }
  std::size_t parameter_count() const;

  const std::vector<DenseLayer>& layers() const { return layers_; }
  const DenseLayer& layer(std::size_t i) const { return layers_.at(i); }
  /// Parameter access for optimizers; callers must not change shapes.
  DenseLayer& mutable_layer(std::size_t i) { return layers_.at(i); }

  bool all_finite() const;

  friend bool operator==(const Network& a, const Network& b);

 private:
  void validate() const;

  std::size_t input_dim_;
  std::vector<DenseLayer> layers_;
};

/// Per-layer pre-activations and activations for a batch; row i belongs to
/// example i.
struct ForwardTrace {
  Matrix input;
  std::vector<Matrix> pre;
  std::vector<Matrix> post;

  const Matrix& logits() const { return post.back(); }
  std::size_t batch_size() const { return static_cast<std::size_t>(input.rows()); }
};

enum class GradWrt { Params, Input, Both };

struct Gradients {
  std::vector<Matrix> weights;
  std::vector<Vector> biases;
  /// B x d, empty unless requested.
  Matrix input;

  bool all_finite() const;
};

/// Each row is processed independently, so a row's logits do not depend on
/// the other rows of the batch.
ForwardTrace forward(const Network& net, const Matrix& batch);

/// Logits for a single example.
Vector logits(const Network& net, const Eigen::Ref<const Vector>& x);

/// Numerically stable softmax (max subtraction).
Vector softmax(const Eigen::Ref<const Vector>& logits);
Matrix softmax_rows(const Matrix& logits);

/// Smallest index attaining the maximum.
std::size_t argmax(const Eigen::Ref<const Vector>& v);

struct CrossEntropy {
  double value = 0.0;
  /// True when a zero probability carrying positive target weight was
  /// clamped to 1e-300 before taking the log.
  bool clamped = false;
};

inline constexpr double kLogClamp = 1e-300;

/// -sum_k target_k log probs_k. Both vectors must sum to 1 within 1e-9.
CrossEntropy cross_entropy_soft(const Eigen::Ref<const Vector>& probs,
                                const Eigen::Ref<const Vector>& target);

Vector one_hot(std::size_t label, std::size_t num_classes);

/// Gradients of the mean soft-target cross-entropy over the batch in `trace`.
/// `targets` is B x K.
Gradients backward(const Network& net, const ForwardTrace& trace, const Matrix& targets,
                   GradWrt wrt);

/// Backpropagates an arbitrary upstream gradient on the logits (B x K).
Gradients backward_from_logits(const Network& net, const ForwardTrace& trace,
                               const Matrix& logit_grad, GradWrt wrt);

/// Plain SGD: every parameter -= lr * gradient. Throws std::domain_error and
/// leaves the network untouched if any gradient entry is non-finite, and
/// std::invalid_argument for a negative or non-finite lr.
void sgd_step(Network& net, const Gradients& grads, double lr);

nlohmann::json to_json(const Network& net);
Network network_from_json(const nlohmann::json& doc);

/// `.json` paths use the JSON document, anything else the binary format.
/// Both round-trip doubles bit-exactly.
void save_network(const Network& net, const std::filesystem::path& path);
Network load_network(const std::filesystem::path& path);

std::string to_binary(const Network& net);
Network network_from_binary(const std::string& bytes);

}  // namespace ccat
