#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "ccat/attacks.hpp"
#include "ccat/data.hpp"
#include "ccat/netcore.hpp"

namespace ccat {

/// (1 - min(1, linf / epsilon))^rho. Throws unless epsilon > 0 and rho > 0.
double lambda_power(double delta_linf, double epsilon, double rho);
double lambda_power(const Eigen::Ref<const Vector>& delta, double epsilon, double rho);

struct TargetDistribution {
  Vector probs;
  double lambda = 1.0;
};

/// lambda * one_hot(y) + (1 - lambda) / K.
TargetDistribution make_target(std::size_t y, double lambda, std::size_t num_classes);

enum class TrainRegime { Normal, AT50, AT100, CCAT };

std::string to_string(TrainRegime r);
TrainRegime regime_from_string(const std::string& s);

/// Learning rate lr * decay^epoch; one SGD step per minibatch.
struct Schedule {
  std::size_t epochs = 10;
  std::size_t batch_size = 100;
  double lr = 0.1;
  double lr_decay = 0.95;

  double lr_at(std::size_t epoch) const;
  void validate() const;
};

struct CcatConfig {
  double epsilon = 0.3;  // L-inf training radius
  double rho = 10.0;
  /// PGD-Conf used on the adversarial half; its ball must be L-inf.
  AttackConfig attack;
  /// Randomly switch each example between zero and random attack init.
  bool mixed_init = true;

  /// Training defaults: PGD-Conf with T=40, gamma=0.005, beta=0.9, alpha=1.5.
  static CcatConfig defaults(double epsilon);
  void validate(std::size_t dim) const;
};

/// Everything needed by one training epoch besides the network and data.
struct EpochContext {
  std::size_t epoch = 0;
  std::size_t batch_size = 100;
  double lr = 0.1;
  std::uint64_t seed = 0;
};

struct EpochStats {
  std::size_t epoch = 0;
  double mean_clean_loss = 0.0;
  std::optional<double> mean_adv_loss;
  std::optional<double> mean_lambda;
  /// Clean accuracy on the training set after the epoch's last update.
  double train_accuracy = 0.0;
  double lr = 0.0;
};

/// One adversarial example seen by CCAT training.
struct LambdaLogEntry {
  std::size_t epoch = 0;
  std::size_t batch = 0;
  std::size_t example = 0;  // index into the training set
  double delta_linf = 0.0;
  double lambda = 0.0;
  /// Target mass on the true class and on every other class.
  double target_true = 0.0;
  double target_other = 0.0;
};

/// Shuffled minibatch SGD on clean cross-entropy.
EpochStats train_epoch_normal(Network& net, const Dataset& data, const EpochContext& ctx);

/// The first floor(fraction * B) examples of every shuffled batch are
/// replaced by PGD adversarial examples with one-hot targets. fraction = 0
/// performs exactly the same updates as train_epoch_normal.
EpochStats train_epoch_at(Network& net, const Dataset& data, double fraction, const AttackConfig& attack,
                          const EpochContext& ctx);

/// First floor(B/2) examples of each batch attacked with PGD-Conf and trained
/// toward make_target(y, lambda_power(delta)); the rest on one-hot targets.
EpochStats train_epoch_ccat(Network& net, const Dataset& data, const CcatConfig& cfg, const EpochContext& ctx,
                            std::vector<LambdaLogEntry>* lambda_log = nullptr);

struct TrainConfig {
  TrainRegime regime = TrainRegime::Normal;
  Schedule schedule;
  std::uint64_t seed = 0;
  /// Adversarial attack for AT50/AT100 (usually PGD-CE).
  AttackConfig at_attack;
  CcatConfig ccat;

  void validate(std::size_t dim) const;
};

struct TrainResult {
  std::vector<EpochStats> epochs;
  std::vector<LambdaLogEntry> lambda_log;
};

/// Runs all epochs of the configured regime. Epoch e uses lr * decay^e and
/// RNG streams keyed by (seed, e), so a run is fully determined by the seed.
TrainResult train(Network& net, const Dataset& data, const TrainConfig& cfg, bool log_lambda = false);

/// Fraction of rows whose argmax logit equals the label.
double accuracy(const Network& net, const Dataset& data);

}  // namespace ccat
