#include "pinet/train.hpp"

#include <charconv>
#include <chrono>
#include <cmath>
#include <sstream>

#include "pinet/error.hpp"
#include "pinet/rng.hpp"

namespace pinet::train {

namespace {

constexpr const char* kInputLeaf = "input";
constexpr const char* kTargetLeaf = "target";

std::string fmt(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, end);
}

std::string fmt(const std::optional<double>& v) { return v ? fmt(*v) : std::string(); }

double decay_for(const std::string& name, const TrainConfig& cfg) {
  return is_bias_like(name) ? 0.0 : cfg.weight_decay;
}

double squared_norm(const ParamMap& params) {
  double s = 0.0;
  for (const auto& [name, t] : params)
    for (double v : t.data()) s += v * v;
  return s;
}

}  // namespace

std::string to_string(OptimizerKind k) {
  return k == OptimizerKind::kAdam ? "adam" : "sgd-momentum";
}

std::string to_string(LossKind k) {
  return k == LossKind::kMse ? "mse" : "softmax-cross-entropy";
}

std::string to_string(Schedule s) { return s == Schedule::kConstant ? "constant" : "step"; }

OptimizerKind parse_optimizer(const std::string& name) {
  if (name == "sgd-momentum") return OptimizerKind::kSgdMomentum;
  if (name == "adam") return OptimizerKind::kAdam;
  throw ConfigError("optimizer", "unknown optimizer '" + name + "' (sgd-momentum, adam)");
}

LossKind parse_loss(const std::string& name) {
  if (name == "mse") return LossKind::kMse;
  if (name == "softmax-cross-entropy") return LossKind::kSoftmaxCrossEntropy;
  throw ConfigError("loss", "unknown loss '" + name + "' (mse, softmax-cross-entropy)");
}

Schedule parse_schedule(const std::string& name) {
  if (name == "constant") return Schedule::kConstant;
  if (name == "step") return Schedule::kStepDecay;
  throw ConfigError("schedule", "unknown schedule '" + name + "' (constant, step)");
}

void TrainConfig::validate() const {
  auto positive = [](const char* key, double v) {
    if (!(v > 0.0) || !std::isfinite(v)) throw ConfigError(key, "must be a positive number");
  };
  positive("learning_rate", learning_rate);
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("momentum", "must lie in [0, 1)");
  if (!(beta1 >= 0.0 && beta1 < 1.0)) throw ConfigError("beta1", "must lie in [0, 1)");
  if (!(beta2 >= 0.0 && beta2 < 1.0)) throw ConfigError("beta2", "must lie in [0, 1)");
  positive("epsilon", epsilon);
  if (!(weight_decay >= 0.0)) throw ConfigError("weight_decay", "must be non-negative");
  if (batch_size == 0) throw ConfigError("batch_size", "must be at least 1");
  if (epochs == 0) throw ConfigError("epochs", "must be at least 1");
  if (clip) positive("clip", *clip);
}

double TrainConfig::learning_rate_at(std::size_t epoch) const {
  if (schedule == Schedule::kConstant) return learning_rate;
  double lr = learning_rate;
  if (2 * epoch >= epochs) lr *= 0.1;
  if (4 * epoch >= 3 * epochs) lr *= 0.1;
  return lr;
}

void step_sgd_momentum(ParamMap& params, const ad::Gradients& grads, SgdState& state,
                       const TrainConfig& cfg, double learning_rate) {
  for (const auto& [name, g] : grads.by_name) {
    Tensor& theta = params.at(name);
    auto [it, fresh] = state.velocity.try_emplace(name, zeros_like(theta));
    Tensor& v = it->second;
    const double lambda = decay_for(name, cfg);
    for (std::size_t i = 0; i < theta.size(); ++i) {
      v[i] = cfg.momentum * v[i] + g[i] + lambda * theta[i];
      theta[i] -= learning_rate * v[i];
    }
  }
}

void step_adam(ParamMap& params, const ad::Gradients& grads, AdamState& state,
               const TrainConfig& cfg, double learning_rate) {
  ++state.step;
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  for (const auto& [name, g] : grads.by_name) {
    Tensor& theta = params.at(name);
    Tensor& m = state.m.try_emplace(name, zeros_like(theta)).first->second;
    Tensor& v = state.v.try_emplace(name, zeros_like(theta)).first->second;
    const double lambda = decay_for(name, cfg);
    for (std::size_t i = 0; i < theta.size(); ++i) {
      const double gi = g[i] + lambda * theta[i];
      m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * gi;
      v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * gi * gi;
      theta[i] -= learning_rate * (m[i] / c1) / (std::sqrt(v[i] / c2) + cfg.epsilon);
    }
  }
}

double clip_gradients(ad::Gradients& grads, double threshold) {
  const double n = grads.global_norm();
  if (n > threshold) {
    const double s = threshold / n;
    for (auto& [name, g] : grads.by_name)
      for (double& v : g.data()) v *= s;
  }
  return n;
}

double compute_loss(const Tensor& prediction, const Tensor& target, LossKind loss) {
  if (prediction.shape() != target.shape()) {
    throw ShapeError("loss: prediction " + pinet::to_string(prediction.shape()) + " vs target " +
                     pinet::to_string(target.shape()));
  }
  if (loss == LossKind::kMse) {
    double s = 0.0;
    for (std::size_t i = 0; i < prediction.size(); ++i) {
      const double d = prediction[i] - target[i];
      s += d * d;
    }
    return s / static_cast<double>(prediction.size());
  }
  double total = 0.0;
  for (std::size_t r = 0; r < prediction.rows(); ++r) {
    double mx = prediction(r, 0);
    for (std::size_t j = 1; j < prediction.cols(); ++j) mx = std::max(mx, prediction(r, j));
    double z = 0.0;
    for (std::size_t j = 0; j < prediction.cols(); ++j) z += std::exp(prediction(r, j) - mx);
    const double lse = mx + std::log(z);
    for (std::size_t j = 0; j < prediction.cols(); ++j)
      total -= target(r, j) * (prediction(r, j) - lse);
  }
  return total / static_cast<double>(prediction.rows());
}

double accuracy(const Tensor& prediction, const Tensor& target) {
  if (prediction.shape() != target.shape() || prediction.rank() != 2) {
    throw ShapeError("accuracy: prediction " + pinet::to_string(prediction.shape()) + " vs target " +
                     pinet::to_string(target.shape()));
  }
  auto argmax = [](const Tensor& t, std::size_t r) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < t.cols(); ++j)
      if (t(r, j) > t(r, best)) best = j;
    return best;
  };
  std::size_t hits = 0;
  for (std::size_t r = 0; r < prediction.rows(); ++r)
    if (argmax(prediction, r) == argmax(target, r)) ++hits;
  return static_cast<double>(hits) / static_cast<double>(prediction.rows());
}

Metrics evaluate(const ProductNet& model, const data::Dataset& data, LossKind loss) {
  const Tensor pred = model.forward(data.features);
  Metrics m;
  m.loss = compute_loss(pred, data.labels, loss);
  if (data.classification) {
    if (pred.cols() == 1) {
      throw ShapeError("classification needs one output per class");
    }
    m.accuracy = accuracy(pred, data.labels);
  }
  return m;
}

std::string MetricsLog::to_csv() const {
  std::ostringstream os;
  os << "epoch,train_loss,train_accuracy,test_loss,test_accuracy,param_norm,grad_norm,"
        "learning_rate\n";
  for (const auto& e : epochs) {
    os << e.epoch << ',' << fmt(e.train_loss) << ',' << fmt(e.train_accuracy) << ','
       << fmt(e.test_loss) << ',' << fmt(e.test_accuracy) << ',' << fmt(e.param_norm) << ','
       << fmt(e.grad_norm) << ',' << fmt(e.learning_rate) << '\n';
  }
  return os.str();
}

std::string MetricsLog::timing_csv() const {
  std::ostringstream os;
  os << "epoch,wall_seconds\n";
  for (const auto& e : epochs) os << e.epoch << ',' << fmt(e.wall_seconds) << '\n';
  return os.str();
}

TrainResult train(ProductNet model, const data::Dataset& train_data, const data::Dataset* test_data,
                  const TrainConfig& cfg, const EpochCallback& on_epoch) {
  cfg.validate();
  if (model.empty()) throw ConfigError("model", "model has no blocks");
  if (train_data.input_dim() != model.input_dim()) {
    throw ConfigError("model", "model input_dim " + std::to_string(model.input_dim()) +
                                   " does not match data dimension " +
                                   std::to_string(train_data.input_dim()));
  }
  if (train_data.output_dim() != model.output_dim()) {
    throw ConfigError("model", "model output_dim " + std::to_string(model.output_dim()) +
                                   " does not match label dimension " +
                                   std::to_string(train_data.output_dim()));
  }

  ad::Graph graph;
  const ad::NodeId z = graph.input(kInputLeaf);
  const ad::NodeId y = graph.input(kTargetLeaf);
  const ad::NodeId out = model.build(graph, z);
  const ad::NodeId loss = cfg.loss == LossKind::kMse ? graph.mean_squared_error(out, y)
                                                     : graph.softmax_cross_entropy(out, y);

  // Parameters and the current minibatch share one binding map so the
  // optimiser updates the values the graph reads.
  ad::Bindings bindings = model.parameters();
  SgdState sgd;
  AdamState adam;
  TrainResult result;
  const std::size_t n = train_data.size();

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    const double lr = cfg.learning_rate_at(epoch - 1);
    Rng rng(Rng::derive(cfg.seed, epoch));
    const std::vector<std::size_t> order = rng.permutation(n);
    double grad_sum = 0.0;
    std::size_t steps = 0;
    for (std::size_t begin = 0; begin < n; begin += cfg.batch_size) {
      const std::size_t end = std::min(n, begin + cfg.batch_size);
      const std::span<const std::size_t> rows(order.data() + begin, end - begin);
      bindings[kInputLeaf] = take_rows(train_data.features, rows);
      bindings[kTargetLeaf] = take_rows(train_data.labels, rows);
      const double value = graph.forward(bindings, loss).item();
      if (!std::isfinite(value)) throw DivergenceError(epoch);
      ad::Gradients grads = graph.backward(loss);
      grad_sum += cfg.clip ? clip_gradients(grads, *cfg.clip) : grads.global_norm();
      ++steps;
      if (cfg.optimizer == OptimizerKind::kAdam) {
        step_adam(bindings, grads, adam, cfg, lr);
      } else {
        step_sgd_momentum(bindings, grads, sgd, cfg, lr);
      }
    }
    bindings.erase(kInputLeaf);
    bindings.erase(kTargetLeaf);
    model.set_parameters(bindings);

    EpochMetrics row;
    row.epoch = epoch;
    const Metrics tm = evaluate(model, train_data, cfg.loss);
    if (!std::isfinite(tm.loss)) throw DivergenceError(epoch);
    row.train_loss = tm.loss;
    row.train_accuracy = tm.accuracy;
    if (test_data != nullptr) {
      const Metrics te = evaluate(model, *test_data, cfg.loss);
      row.test_loss = te.loss;
      row.test_accuracy = te.accuracy;
    }
    row.param_norm = std::sqrt(squared_norm(bindings));
    row.grad_norm = grad_sum / static_cast<double>(steps);
    row.learning_rate = lr;
    row.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    result.log.epochs.push_back(row);
    if (on_epoch) on_epoch(epoch, model);
  }
  result.model = std::move(model);
  return result;
}

}  // namespace pinet::train
