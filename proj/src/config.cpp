#include "pinet/config.hpp"

#include <cmath>
#include <cstdlib>
#include <set>

#include "pinet/error.hpp"
#include "pinet/io.hpp"

namespace pinet::config {

namespace fs = std::filesystem;

namespace {

bool is_count(const json& v) {
  return v.is_number_unsigned() || (v.is_number_integer() && v.get<std::int64_t>() >= 0);
}

std::string join_key(const std::string& prefix, const std::string& key) {
  return prefix.empty() ? key : prefix + "." + key;
}

/// Typed, key-tracking view of one JSON object.
class Reader {
 public:
  Reader(const json& obj, std::string prefix, fs::path base_dir = {})
      : obj_(obj), prefix_(std::move(prefix)), base_dir_(std::move(base_dir)) {
    if (!obj_.is_object()) throw ConfigError(prefix_.empty() ? "<root>" : prefix_, "expected an object");
  }

  std::string key(const std::string& k) const { return join_key(prefix_, k); }

  const json* find(const std::string& k) {
    seen_.insert(k);
    const auto it = obj_.find(k);
    return it == obj_.end() ? nullptr : &*it;
  }

  bool has(const std::string& k) const { return obj_.contains(k); }

  void read(const std::string& k, double& out) {
    if (const json* v = find(k)) out = number(*v, k);
  }
  void read(const std::string& k, std::optional<double>& out) {
    if (const json* v = find(k)) out = v->is_null() ? std::nullopt : std::optional<double>(number(*v, k));
  }
  void read(const std::string& k, std::size_t& out) {
    if (const json* v = find(k)) out = count(*v, k);
  }
  void read(const std::string& k, std::optional<std::size_t>& out) {
    if (const json* v = find(k)) out = v->is_null() ? std::nullopt : std::optional<std::size_t>(count(*v, k));
  }
  void read(const std::string& k, bool& out) {
    if (const json* v = find(k)) {
      if (!v->is_boolean()) throw ConfigError(key(k), "expected true or false");
      out = v->get<bool>();
    }
  }
  void read(const std::string& k, std::string& out) {
    if (const json* v = find(k)) out = string(*v, k);
  }
  /// Relative paths resolve against the config file's directory.
  void read_path(const std::string& k, fs::path& out) {
    if (const json* v = find(k)) out = resolve(string(*v, k));
  }
  void read(const std::string& k, std::vector<std::size_t>& out) {
    if (const json* v = find(k)) {
      out.clear();
      for (const auto& e : array(*v, k)) out.push_back(count(e, k));
    }
  }
  void read(const std::string& k, std::vector<int>& out) {
    if (const json* v = find(k)) {
      out.clear();
      for (const auto& e : array(*v, k)) {
        if (!e.is_number_integer()) throw ConfigError(key(k), "expected an array of integers");
        out.push_back(e.get<int>());
      }
    }
  }
  void read(const std::string& k, std::vector<std::string>& out) {
    if (const json* v = find(k)) {
      out.clear();
      for (const auto& e : array(*v, k)) out.push_back(string(e, k));
    }
  }
  void read(const std::string& k, std::array<double, 3>& out) {
    if (const json* v = find(k)) {
      const auto& a = array(*v, k);
      if (a.size() != 3) throw ConfigError(key(k), "expected [train, val, test] fractions");
      for (std::size_t i = 0; i < 3; ++i) out[i] = number(a[i], k);
    }
  }
  void read_seed(const std::string& k, std::uint64_t& out) {
    if (const json* v = find(k)) {
      if (!is_count(*v)) throw ConfigError(key(k), "expected a non-negative integer");
      out = v->get<std::uint64_t>();
    }
  }

  /// Throws on the first key that no read() asked for.
  void finish() const {
    for (const auto& [k, v] : obj_.items())
      if (!seen_.contains(k)) throw ConfigError(key(k), "unknown key");
  }

  fs::path resolve(const fs::path& p) const {
    if (p.empty() || p.is_absolute() || base_dir_.empty()) return p;
    return (base_dir_ / p).lexically_normal();
  }

 private:
  double number(const json& v, const std::string& k) const {
    if (!v.is_number()) throw ConfigError(key(k), "expected a number");
    const double d = v.get<double>();
    if (!std::isfinite(d)) throw ConfigError(key(k), "must be finite");
    return d;
  }
  std::size_t count(const json& v, const std::string& k) const {
    if (!is_count(v)) throw ConfigError(key(k), "expected a non-negative integer");
    return v.get<std::size_t>();
  }
  std::string string(const json& v, const std::string& k) const {
    if (!v.is_string()) throw ConfigError(key(k), "expected a string");
    return v.get<std::string>();
  }
  const json& array(const json& v, const std::string& k) const {
    if (!v.is_array()) throw ConfigError(key(k), "expected an array");
    return v;
  }

  const json& obj_;
  std::string prefix_;
  fs::path base_dir_;
  std::set<std::string> seen_;
};

template <typename Parse>
auto parse_name(const std::string& key, const std::string& name, Parse parse) {
  try {
    return parse(name);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(key, e.what());
  }
}

/// Re-keys a ConfigError thrown by a component validator under `prefix`.
template <typename F>
void with_prefix(const std::string& prefix, F f) {
  try {
    f();
  } catch (const ConfigError& e) {
    const std::string what = e.what();
    const std::string tail = what.substr(std::min(what.size(), e.key().size() + 2));
    throw ConfigError(join_key(prefix, e.key()), tail);
  }
}

json path_json(const fs::path& p) { return p.empty() ? json(nullptr) : json(p.string()); }

json optional_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

DataConfig parse_data(const json& doc, const fs::path& base_dir) {
  DataConfig d;
  Reader r(doc, "data", base_dir);
  r.read("source", d.source);
  r.read("kind", d.kind);
  r.read("samples", d.samples);
  r.read("jitter", d.jitter);
  r.read("inner_radius", d.inner_radius);
  r.read("outer_radius", d.outer_radius);
  r.read("input_dim", d.input_dim);
  r.read("degree", d.degree);
  r.read("noise", d.noise);
  if (const json* p = r.find("polynomial"); p && !p->is_null()) {
    if (!p->is_object()) throw ConfigError("data.polynomial", "expected an object of monomial: coefficient");
    for (const auto& [m, c] : p->items()) {
      if (!c.is_number()) throw ConfigError("data.polynomial." + m, "expected a number");
      d.polynomial[m] = c.get<double>();
    }
  }
  r.read_path("train_images", d.train_images);
  r.read_path("train_labels", d.train_labels);
  r.read_path("test_images", d.test_images);
  r.read_path("test_labels", d.test_labels);
  r.read("classes", d.classes);
  r.read_path("train_file", d.train_file);
  r.read_path("test_file", d.test_file);
  r.read("label_columns", d.label_columns);
  r.read("num_classes", d.num_classes);
  r.read("split", d.split);
  r.finish();

  if (d.source == "synthetic") {
    const auto kind = parse_name("data.kind", d.kind, data::parse_synthetic_kind);
    if (d.samples == 0) throw ConfigError("data.samples", "must be at least 1");
    if (!(d.jitter >= 0.0)) throw ConfigError("data.jitter", "must be non-negative");
    if (!(d.noise >= 0.0)) throw ConfigError("data.noise", "must be non-negative");
    if (kind == data::SyntheticKind::kPolynomialRegression) {
      if (d.input_dim == 0) throw ConfigError("data.input_dim", "must be at least 1");
      explicit_polynomial(d);
    }
  } else if (d.source == "idx") {
    if (d.train_images.empty()) throw ConfigError("data.train_images", "required for idx data");
    if (d.train_labels.empty()) throw ConfigError("data.train_labels", "required for idx data");
    if (d.test_images.empty() != d.test_labels.empty())
      throw ConfigError("data.test_labels", "test_images and test_labels go together");
  } else if (d.source == "csv") {
    if (d.train_file.empty()) throw ConfigError("data.train_file", "required for csv data");
    if (d.label_columns.empty()) throw ConfigError("data.label_columns", "required for csv data");
  } else {
    throw ConfigError("data.source", "unknown source '" + d.source + "' (synthetic, idx, csv)");
  }
  double total = 0.0;
  for (double f : d.split) {
    if (!(f >= 0.0)) throw ConfigError("data.split", "fractions must be non-negative");
    total += f;
  }
  if (std::abs(total - 1.0) > 1e-9) throw ConfigError("data.split", "fractions must sum to 1");
  if (d.split[0] == 0.0) throw ConfigError("data.split", "training fraction must be positive");
  return d;
}

json data_json(const DataConfig& d) {
  json j{{"source", d.source}};
  if (d.source == "synthetic") {
    j["kind"] = d.kind;
    j["samples"] = d.samples;
    const auto kind = data::parse_synthetic_kind(d.kind);
    if (kind == data::SyntheticKind::kPolynomialRegression) {
      j["input_dim"] = d.input_dim;
      j["degree"] = d.degree;
      j["noise"] = d.noise;
      j["polynomial"] = d.polynomial.empty() ? json(nullptr) : json(d.polynomial);
    } else {
      j["jitter"] = d.jitter;
      if (kind == data::SyntheticKind::kCircles) {
        j["inner_radius"] = d.inner_radius;
        j["outer_radius"] = d.outer_radius;
      }
    }
  } else if (d.source == "idx") {
    j["train_images"] = path_json(d.train_images);
    j["train_labels"] = path_json(d.train_labels);
    j["test_images"] = path_json(d.test_images);
    j["test_labels"] = path_json(d.test_labels);
    j["classes"] = d.classes;
  } else {
    j["train_file"] = path_json(d.train_file);
    j["test_file"] = path_json(d.test_file);
    j["label_columns"] = d.label_columns;
    j["num_classes"] = d.num_classes ? json(*d.num_classes) : json(nullptr);
  }
  if (d.source != "idx") j["split"] = d.split;
  return j;
}

BlockConfig parse_block(const json& doc, const std::string& prefix) {
  BlockConfig b;
  PolyBlockSpec& s = b.spec;
  Reader r(doc, prefix);
  std::string variant, stabilizer = "none", activation = "none", init = "default";
  if (!r.has("variant")) throw ConfigError(r.key("variant"), "required");
  if (!r.has("order")) throw ConfigError(r.key("order"), "required");
  if (!r.has("input_dim")) throw ConfigError(r.key("input_dim"), "required");
  r.read("variant", variant);
  s.variant = parse_name(r.key("variant"), variant, parse_variant);
  const bool residual = s.variant == Variant::kHighOrderResidual;
  if (!residual && !r.has("rank")) throw ConfigError(r.key("rank"), "required");
  if (!residual && !r.has("output_dim")) throw ConfigError(r.key("output_dim"), "required");
  r.read("order", s.order);
  r.read("rank", s.rank);
  r.read("input_dim", s.input_dim);
  s.output_dim = s.input_dim;
  r.read("output_dim", s.output_dim);
  r.read("bias_dim", s.bias_dim);
  r.read("stabilizer", stabilizer);
  r.read("activation", activation);
  r.read("init", init);
  r.finish();
  s.stabilizer = parse_name(r.key("stabilizer"), stabilizer, parse_stabilizer);
  s.activation = parse_name(r.key("activation"), activation, parse_activation);
  b.init = parse_name(r.key("init"), init, [](const std::string& n) { return parse_init_scheme(n); });
  if (s.order == 0) throw ConfigError(r.key("order"), "must be at least 1");
  if (s.input_dim == 0) throw ConfigError(r.key("input_dim"), "must be at least 1");
  if (s.output_dim == 0) throw ConfigError(r.key("output_dim"), "must be at least 1");
  if (!residual && s.rank == 0) throw ConfigError(r.key("rank"), "must be at least 1");
  if (residual && s.output_dim != s.input_dim)
    throw ConfigError(r.key("output_dim"), "high-order-residual needs output_dim == input_dim");
  return b;
}

json block_json(const BlockConfig& b) {
  const PolyBlockSpec& s = b.spec;
  return json{{"variant", to_string(s.variant)},         {"order", s.order},
              {"rank", s.rank},                          {"input_dim", s.input_dim},
              {"output_dim", s.output_dim},              {"bias_dim", s.bias_dim},
              {"stabilizer", to_string(s.stabilizer)},   {"activation", to_string(s.activation)},
              {"init", to_string(b.init)}};
}

train::TrainConfig parse_train(const json& doc) {
  train::TrainConfig t;
  Reader r(doc, "train");
  std::string optimizer = train::to_string(t.optimizer), loss = train::to_string(t.loss),
              schedule = train::to_string(t.schedule);
  r.read("optimizer", optimizer);
  r.read("learning_rate", t.learning_rate);
  r.read("momentum", t.momentum);
  r.read("beta1", t.beta1);
  r.read("beta2", t.beta2);
  r.read("epsilon", t.epsilon);
  r.read("weight_decay", t.weight_decay);
  r.read("batch_size", t.batch_size);
  r.read("epochs", t.epochs);
  r.read("loss", loss);
  r.read("clip", t.clip);
  r.read("schedule", schedule);
  r.read("checkpoint_every", t.checkpoint_every);
  r.finish();
  with_prefix("train", [&] {
    t.optimizer = train::parse_optimizer(optimizer);
    t.loss = train::parse_loss(loss);
    t.schedule = train::parse_schedule(schedule);
    t.validate();
  });
  return t;
}

json train_json(const train::TrainConfig& t) {
  return json{{"optimizer", train::to_string(t.optimizer)},
              {"learning_rate", t.learning_rate},
              {"momentum", t.momentum},
              {"beta1", t.beta1},
              {"beta2", t.beta2},
              {"epsilon", t.epsilon},
              {"weight_decay", t.weight_decay},
              {"batch_size", t.batch_size},
              {"epochs", t.epochs},
              {"loss", train::to_string(t.loss)},
              {"clip", optional_json(t.clip)},
              {"schedule", train::to_string(t.schedule)},
              {"checkpoint_every", t.checkpoint_every}};
}

ExpectConfig parse_expect(const json& doc) {
  ExpectConfig e;
  Reader r(doc, "expect");
  r.read("train_accuracy_min", e.train_accuracy_min);
  r.read("train_accuracy_max", e.train_accuracy_max);
  r.read("test_accuracy_min", e.test_accuracy_min);
  r.read("test_accuracy_max", e.test_accuracy_max);
  r.read("train_loss_max", e.train_loss_max);
  r.read("test_loss_max", e.test_loss_max);
  r.read("pinned_test_accuracy", e.pinned_test_accuracy);
  r.read("pin_tolerance", e.pin_tolerance);
  r.finish();
  if (!(e.pin_tolerance >= 0.0)) throw ConfigError("expect.pin_tolerance", "must be non-negative");
  return e;
}

json expect_json(const ExpectConfig& e) {
  return json{{"train_accuracy_min", optional_json(e.train_accuracy_min)},
              {"train_accuracy_max", optional_json(e.train_accuracy_max)},
              {"test_accuracy_min", optional_json(e.test_accuracy_min)},
              {"test_accuracy_max", optional_json(e.test_accuracy_max)},
              {"train_loss_max", optional_json(e.train_loss_max)},
              {"test_loss_max", optional_json(e.test_loss_max)},
              {"pinned_test_accuracy", optional_json(e.pinned_test_accuracy)},
              {"pin_tolerance", e.pin_tolerance}};
}

}  // namespace

json load_json(const fs::path& path) {
  const std::string text = read_text_file(path);
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string(), std::string("invalid JSON: ") + e.what());
  }
}

void apply_overrides(json& doc, const std::vector<std::string>& overrides) {
  for (const auto& item : overrides) {
    const auto eq = item.find('=');
    if (eq == std::string::npos || eq == 0) throw ConfigError(item, "override must look like key=value");
    const std::string key = item.substr(0, eq);
    const std::string text = item.substr(eq + 1);
    json value = json::parse(text, nullptr, false);
    if (value.is_discarded()) value = text;
    json* node = &doc;
    std::size_t start = 0;
    while (true) {
      const auto dot = key.find('.', start);
      const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
      if (part.empty()) throw ConfigError(key, "empty path segment in override");
      if (!node->is_object()) throw ConfigError(key, "override path crosses a non-object");
      if (dot == std::string::npos) {
        (*node)[part] = value;
        break;
      }
      if (!node->contains(part)) (*node)[part] = json::object();
      node = &(*node)[part];
      start = dot + 1;
    }
  }
}

std::optional<oracle::DensePoly> explicit_polynomial(const DataConfig& cfg) {
  if (cfg.polynomial.empty()) return std::nullopt;
  oracle::DensePoly p(cfg.input_dim, 1, cfg.degree);
  for (const auto& [text, c] : cfg.polynomial) {
    oracle::MultiIndex m;
    try {
      m = oracle::parse_monomial(text, cfg.input_dim);
    } catch (const std::invalid_argument& e) {
      throw ConfigError("data.polynomial." + text, e.what());
    }
    if (m.degree() > cfg.degree)
      throw ConfigError("data.polynomial." + text, "degree exceeds data.degree");
    p.set_coefficient(0, m, p.coefficient(0, m) + c);
  }
  return p;
}

RunConfig parse_run_config(const json& doc, const fs::path& base_dir) {
  RunConfig cfg;
  Reader r(doc, "", base_dir);
  r.read_seed("seed", cfg.seed);
  std::string out = cfg.output_dir.string();
  r.read("output_dir", out);
  cfg.output_dir = out;
  if (cfg.output_dir.empty()) throw ConfigError("output_dir", "must not be empty");
  const json* data = r.find("data");
  if (!data) throw ConfigError("data", "required");
  cfg.data = parse_data(*data, base_dir);
  const json* model = r.find("model");
  if (!model) throw ConfigError("model", "required");
  const json* blocks = model->is_object() && model->contains("blocks") ? &(*model)["blocks"] : nullptr;
  if (model->is_object()) {
    for (const auto& [k, v] : model->items())
      if (k != "blocks") throw ConfigError("model." + k, "unknown key");
  }
  if (!blocks || !blocks->is_array() || blocks->empty())
    throw ConfigError("model.blocks", "expected a non-empty array of blocks");
  for (std::size_t i = 0; i < blocks->size(); ++i) {
    const std::string prefix = "model.blocks[" + std::to_string(i) + "]";
    cfg.model.push_back(parse_block((*blocks)[i], prefix));
    if (i > 0 && cfg.model[i].spec.input_dim != cfg.model[i - 1].spec.output_dim) {
      throw ConfigError(prefix + ".input_dim",
                        "must equal the previous block's output_dim " +
                            std::to_string(cfg.model[i - 1].spec.output_dim));
    }
  }
  if (const json* t = r.find("train")) cfg.train = parse_train(*t);
  cfg.train.seed = cfg.seed;
  if (const json* e = r.find("expect")) cfg.expect = parse_expect(*e);
  r.read("witness_points", cfg.witness_points);
  r.finish();
  return cfg;
}

json to_json(const RunConfig& cfg) {
  json blocks = json::array();
  for (const auto& b : cfg.model) blocks.push_back(block_json(b));
  return json{{"seed", cfg.seed},
              {"output_dir", cfg.output_dir.string()},
              {"data", data_json(cfg.data)},
              {"model", {{"blocks", blocks}}},
              {"train", train_json(cfg.train)},
              {"expect", expect_json(cfg.expect)},
              {"witness_points", cfg.witness_points}};
}

VerifyConfig parse_verify_config(const json& doc, const fs::path& base_dir) {
  VerifyConfig cfg;
  Reader r(doc, "", base_dir);
  r.read_seed("seed", cfg.seed);
  std::string out = cfg.output_dir.string();
  r.read("output_dir", out);
  cfg.output_dir = out;
  if (cfg.output_dir.empty()) throw ConfigError("output_dir", "must not be empty");

  if (const json* g = r.find("oracle_grid")) {
    Reader s(*g, "oracle_grid");
    auto& o = cfg.oracle_grid;
    s.read("enabled", cfg.oracle_grid_enabled);
    if (const json* v = s.find("variants")) {
      if (!v->is_array()) throw ConfigError("oracle_grid.variants", "expected an array");
      o.variants.clear();
      for (const auto& e : *v) {
        if (!e.is_string()) throw ConfigError("oracle_grid.variants", "expected variant names");
        o.variants.push_back(parse_name("oracle_grid.variants", e.get<std::string>(), parse_variant));
      }
    }
    s.read("input_dims", o.input_dims);
    s.read("ranks", o.ranks);
    s.read("output_dims", o.output_dims);
    s.read("bias_dims", o.bias_dims);
    s.read("orders", o.orders);
    s.read("seeds", o.seeds);
    s.read("holdout_points", o.holdout_points);
    s.read("tolerance", o.tolerance);
    s.finish();
    for (const auto* list : {&o.input_dims, &o.ranks, &o.output_dims, &o.bias_dims, &o.orders})
      for (std::size_t v : *list)
        if (v == 0) throw ConfigError("oracle_grid", "dimensions, ranks and orders must be positive");
    if (!(o.tolerance > 0.0)) throw ConfigError("oracle_grid.tolerance", "must be positive");
    if (o.holdout_points == 0) throw ConfigError("oracle_grid.holdout_points", "must be at least 1");
  }
  if (const json* g = r.find("degree_law")) {
    Reader s(*g, "degree_law");
    auto& d = cfg.degree_law;
    s.read("enabled", cfg.degree_law_enabled);
    s.read("max_blocks", d.max_blocks);
    s.read("block_degrees", d.block_degrees);
    s.read("max_total_degree", d.max_total_degree);
    s.read("seeds", d.seeds);
    s.finish();
    for (std::size_t v : d.block_degrees)
      if (v == 0) throw ConfigError("degree_law.block_degrees", "degrees must be positive");
  }
  if (const json* g = r.find("grad_check")) {
    Reader s(*g, "grad_check");
    auto& c = cfg.grad_check;
    s.read("enabled", cfg.grad_check_enabled);
    s.read("instances", c.instances);
    s.read("step", c.step);
    s.read("tolerance", c.tolerance);
    s.read("absolute_floor", c.absolute_floor);
    s.finish();
    if (!(c.step > 0.0)) throw ConfigError("grad_check.step", "must be positive");
    if (!(c.tolerance > 0.0)) throw ConfigError("grad_check.tolerance", "must be positive");
    if (!(c.absolute_floor >= 0.0)) throw ConfigError("grad_check.absolute_floor", "must be non-negative");
  }
  if (const json* c = r.find("checkpoint"); c && !c->is_null()) {
    if (!c->is_string()) throw ConfigError("checkpoint", "expected a path");
    cfg.checkpoint = r.resolve(c->get<std::string>());
  }
  if (const json* g = r.find("checkpoint_checks")) {
    Reader s(*g, "checkpoint_checks");
    auto& c = cfg.checkpoint_checks;
    s.read("witness_tolerance", c.witness_tolerance);
    s.read("fit_tolerance", c.fit_tolerance);
    s.read("max_basis", c.max_basis);
    s.finish();
  }
  r.finish();
  return cfg;
}

json to_json(const VerifyConfig& cfg) {
  json variants = json::array();
  for (Variant v : cfg.oracle_grid.variants) variants.push_back(to_string(v));
  const auto& o = cfg.oracle_grid;
  const auto& d = cfg.degree_law;
  const auto& g = cfg.grad_check;
  const auto& c = cfg.checkpoint_checks;
  return json{{"seed", cfg.seed},
              {"output_dir", cfg.output_dir.string()},
              {"oracle_grid",
               {{"enabled", cfg.oracle_grid_enabled},
                {"variants", variants},
                {"input_dims", o.input_dims},
                {"ranks", o.ranks},
                {"output_dims", o.output_dims},
                {"bias_dims", o.bias_dims},
                {"orders", o.orders},
                {"seeds", o.seeds},
                {"holdout_points", o.holdout_points},
                {"tolerance", o.tolerance}}},
              {"degree_law",
               {{"enabled", cfg.degree_law_enabled},
                {"max_blocks", d.max_blocks},
                {"block_degrees", d.block_degrees},
                {"max_total_degree", d.max_total_degree},
                {"seeds", d.seeds}}},
              {"grad_check",
               {{"enabled", cfg.grad_check_enabled},
                {"instances", g.instances},
                {"step", g.step},
                {"tolerance", g.tolerance},
                {"absolute_floor", g.absolute_floor}}},
              {"checkpoint", cfg.checkpoint ? json(cfg.checkpoint->string()) : json(nullptr)},
              {"checkpoint_checks",
               {{"witness_tolerance", c.witness_tolerance},
                {"fit_tolerance", c.fit_tolerance},
                {"max_basis", c.max_basis}}}};
}

fs::path resolve_output_dir(const fs::path& dir) {
  if (dir.is_absolute()) return dir.lexically_normal();
  const char* root = std::getenv(kOutputRootEnv);
  const fs::path base = root && *root ? fs::absolute(root) : fs::current_path();
  return (base / dir).lexically_normal();
}

LoadedData load_data(const RunConfig& cfg) {
  const DataConfig& d = cfg.data;
  data::Dataset all;
  if (d.source == "idx") {
    LoadedData out{.train = data::load_idx_dataset(d.train_images, d.train_labels, d.classes)};
    if (!d.test_images.empty())
      out.test = data::load_idx_dataset(d.test_images, d.test_labels, d.classes);
    return out;
  }
  if (d.source == "csv") {
    const data::CsvSchema schema{.label_columns = d.label_columns, .num_classes = d.num_classes};
    if (!d.test_file.empty()) {
      return {.train = data::load_csv(d.train_file, schema), .test = data::load_csv(d.test_file, schema)};
    }
    all = data::load_csv(d.train_file, schema);
  } else {
    data::SyntheticParams params{.jitter = d.jitter,
                                 .inner_radius = d.inner_radius,
                                 .outer_radius = d.outer_radius,
                                 .input_dim = d.input_dim,
                                 .degree = d.degree,
                                 .noise = d.noise,
                                 .polynomial = explicit_polynomial(d)};
    all = data::make_synthetic(data::parse_synthetic_kind(d.kind), d.samples, cfg.seed, params);
  }
  if (d.split[0] == 1.0) return {.train = std::move(all)};
  auto parts = data::split(all, d.split, cfg.seed);
  return {.train = std::move(parts.train), .test = std::move(parts.test)};
}

ProductNet build_model(const RunConfig& cfg) {
  ProductNet net;
  for (std::size_t i = 0; i < cfg.model.size(); ++i) {
    const auto& b = cfg.model[i];
    net.append({b.spec, init_params(b.spec, cfg.seed + i, b.init)});
  }
  return net;
}

}  // namespace pinet::config
