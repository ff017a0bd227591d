#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "pinet/autodiff.hpp"
#include "pinet/blocks.hpp"
#include "pinet/data.hpp"

namespace pinet::train {

enum class OptimizerKind { kSgdMomentum, kAdam };
enum class LossKind { kMse, kSoftmaxCrossEntropy };
enum class Schedule { kConstant, kStepDecay };

std::string to_string(OptimizerKind k);
std::string to_string(LossKind k);
std::string to_string(Schedule s);
OptimizerKind parse_optimizer(const std::string& name);
LossKind parse_loss(const std::string& name);
Schedule parse_schedule(const std::string& name);

struct TrainConfig {
  OptimizerKind optimizer = OptimizerKind::kSgdMomentum;
  double learning_rate = 0.1;
  double momentum = 0.9;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  /// L2 coefficient added to the gradient of non-bias parameters.
  double weight_decay = 1e-4;
  std::size_t batch_size = 32;
  std::size_t epochs = 10;
  std::uint64_t seed = 0;
  LossKind loss = LossKind::kSoftmaxCrossEntropy;
  /// Global gradient-norm clip threshold; nullopt disables clipping.
  std::optional<double> clip = 5.0;
  /// kStepDecay multiplies the rate by 0.1 at 50% and again at 75% of the epochs.
  Schedule schedule = Schedule::kStepDecay;
  /// Invoke the epoch callback's checkpoint hook every this many epochs (0 = never).
  std::size_t checkpoint_every = 0;

  /// Throws ConfigError naming the offending key.
  void validate() const;
  double learning_rate_at(std::size_t epoch) const;  // epoch is 0-based
};

/// Heavy-ball momentum: v <- mu v + g + lambda theta; theta <- theta - lr v.
struct SgdState {
  std::map<std::string, Tensor> velocity;
};

/// Adam with bias correction:
///   g' = g + lambda theta, m <- b1 m + (1-b1) g', v <- b2 v + (1-b2) g'^2,
///   theta <- theta - lr * m_hat / (sqrt(v_hat) + eps).
struct AdamState {
  std::map<std::string, Tensor> m;
  std::map<std::string, Tensor> v;
  std::size_t step = 0;
};

/// Updates every parameter that has a gradient. Bias-like parameters (beta,
/// b_n) get no weight decay.
void step_sgd_momentum(ParamMap& params, const ad::Gradients& grads, SgdState& state,
                       const TrainConfig& cfg, double learning_rate);
void step_adam(ParamMap& params, const ad::Gradients& grads, AdamState& state,
               const TrainConfig& cfg, double learning_rate);

/// Rescales gradients so their global norm is at most `threshold`.
/// Returns the norm before clipping.
double clip_gradients(ad::Gradients& grads, double threshold);

/// Mean-over-batch loss of `prediction` against `target`.
double compute_loss(const Tensor& prediction, const Tensor& target, LossKind loss);
/// Fraction of rows whose argmax agrees (ties resolve to the lowest index).
double accuracy(const Tensor& prediction, const Tensor& target);

struct Metrics {
  double loss = 0.0;
  std::optional<double> accuracy{};
};

/// Pure evaluation; never touches parameters.
Metrics evaluate(const ProductNet& model, const data::Dataset& data, LossKind loss);

struct EpochMetrics {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  std::optional<double> train_accuracy{};
  std::optional<double> test_loss{};
  std::optional<double> test_accuracy{};
  double param_norm = 0.0;
  /// Mean pre-clip global gradient norm over the epoch's steps.
  double grad_norm = 0.0;
  double learning_rate = 0.0;
  double wall_seconds = 0.0;
};

struct MetricsLog {
  std::vector<EpochMetrics> epochs;

  /// Deterministic columns only:
  ///   epoch,train_loss,train_accuracy,test_loss,test_accuracy,param_norm,grad_norm,learning_rate
  /// Missing values are written as empty cells. Wall-clock lives in timing_csv().
  std::string to_csv() const;
  /// epoch,wall_seconds
  std::string timing_csv() const;
};

class DivergenceError : public std::runtime_error {
 public:
  explicit DivergenceError(std::size_t epoch)
      : std::runtime_error("loss became non-finite in epoch " + std::to_string(epoch)),
        epoch_(epoch) {}
  std::size_t epoch() const noexcept { return epoch_; }

 private:
  std::size_t epoch_;
};

struct TrainResult {
  ProductNet model;
  MetricsLog log;
};

/// Called after each epoch with the 1-based epoch index and current model.
using EpochCallback = std::function<void(std::size_t, const ProductNet&)>;

/// Minibatch training. Shuffling, initialisation and updates are all driven
/// by cfg.seed, so identical inputs reproduce bit-identical results.
TrainResult train(ProductNet model, const data::Dataset& train_data, const data::Dataset* test_data,
                  const TrainConfig& cfg, const EpochCallback& on_epoch = {});

}  // namespace pinet::train
