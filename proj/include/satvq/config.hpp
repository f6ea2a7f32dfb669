#pragma once

// Run configuration: named presets plus a strict JSON form (unknown keys are
// errors) that round-trips exactly.

#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "satvq/pipeline.hpp"
#include "satvq/rpm.hpp"

namespace satvq::config {

/// Raised for unknown keys, bad values or unknown preset names.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct RunConfig {
  std::string preset = "desk";
  std::uint64_t seed = 7;
  std::uint64_t data_seed = 7;
  std::uint64_t eval_seed = 1;

  // data
  int side = 24;
  int contexts = 8;
  std::string rules = "constant+progression";
  std::array<int, rpm::kAttributes> cardinality{5, 4, 6};

  // model
  std::string variant = "vq+satnet";
  int codebook_size = 8;
  int latent_dim = 32;
  int clauses = 128;
  int embed_dim = 0;
  int aux = 0;
  int train_sweeps = 40;
  int eval_sweeps = 100;
  double tol = 1e-6;
  double beta = 0.25;
  int head_width = 64;

  // training
  int epochs = 60;
  int batch_size = 32;
  double learning_rate = 3e-4;
  int save_every = 1;
  double time_budget_minutes = 28;  // 0 = no limit

  friend bool operator==(const RunConfig&, const RunConfig&) = default;
};

inline const std::vector<std::string>& preset_names() {
  static const std::vector<std::string> names{"micro", "desk", "paper-scale"};
  return names;
}

inline RunConfig preset(const std::string& name) {
  RunConfig c;
  c.preset = name;
  if (name == "desk") return c;
  if (name == "micro") {
    c.side = 6;
    c.contexts = 3;
    c.rules = "all";
    c.codebook_size = 3;
    c.latent_dim = 4;
    c.clauses = 16;
    c.train_sweeps = 10;
    c.eval_sweeps = 10;
    c.head_width = 8;
    c.epochs = 1;
    c.batch_size = 8;
    c.time_budget_minutes = 0;
    return c;
  }
  if (name == "paper-scale") {
    c.side = 80;
    c.rules = "all";
    c.latent_dim = 192;
    c.clauses = 500;
    c.time_budget_minutes = 0;
    return c;
  }
  throw ConfigError("unknown preset '" + name + "' (expected micro, desk or paper-scale)");
}

inline nets::Architecture architecture(const RunConfig& c) {
  nets::Architecture a;
  if (c.preset == "micro")
    a = nets::micro_architecture();
  else if (c.preset == "paper-scale")
    a = nets::full_scale_architecture();
  else
    a = nets::desk_architecture();
  if (a.side != c.side) throw ConfigError("side " + std::to_string(c.side) + " does not match the " + c.preset +
                                          " architecture (" + std::to_string(a.side) + ")");
  a.encoder.back().channels = c.latent_dim;
  return a;
}

inline rpm::GenConfig generator(const RunConfig& c) {
  rpm::GenConfig g;
  g.cardinality = c.cardinality;
  if (c.rules == "all") return g;
  g.allowed = {false, false, false, false};
  std::size_t start = 0;
  while (start <= c.rules.size()) {
    const auto end = std::min(c.rules.find('+', start), c.rules.size());
    const std::string name = c.rules.substr(start, end - start);
    bool found = false;
    for (int k = 0; k < 4; ++k)
      if (name == rpm::kRuleNames[k]) {
        g.allowed[k] = true;
        found = true;
      }
    if (!found) throw ConfigError("unknown rule family '" + name + "' in rules");
    start = end + 1;
  }
  return g;
}

inline pipeline::ModelConfig model_config(const RunConfig& c) {
  pipeline::ModelConfig m;
  m.arch = architecture(c);
  m.contexts = c.contexts;
  m.codebook_size = c.codebook_size;
  m.clauses = c.clauses;
  m.embed_dim = c.embed_dim;
  m.aux = c.aux;
  m.train_sweeps = c.train_sweeps;
  m.eval_sweeps = c.eval_sweeps;
  m.tol = c.tol;
  m.beta = c.beta;
  m.head_width = c.head_width;
  try {
    m.variant = pipeline::parse_variant(c.variant);
  } catch (const ContractError& e) {
    throw ConfigError(e.what());
  }
  return m;
}

inline void validate(const RunConfig& c) {
  auto need = [](bool ok, const std::string& what) {
    if (!ok) throw ConfigError(what);
  };
  preset(c.preset);
  need(c.contexts >= 1 && c.contexts <= 8, "contexts must be in [1, 8]");
  need(c.codebook_size >= 2, "codebook_size must be >= 2");
  need(c.latent_dim >= 1, "latent_dim must be >= 1");
  need(c.clauses >= 1, "clauses must be >= 1");
  need(c.embed_dim >= 0 && c.aux >= 0, "embed_dim and aux must be >= 0");
  need(c.train_sweeps >= 1 && c.eval_sweeps >= 1, "sweep budgets must be >= 1");
  need(c.beta >= 0, "beta must be >= 0");
  need(c.head_width >= 1, "head_width must be >= 1");
  need(c.epochs >= 0, "epochs must be >= 0");
  need(c.batch_size >= 1, "batch_size must be >= 1");
  need(c.learning_rate >= 0, "learning_rate must be >= 0");
  need(c.save_every >= 1, "save_every must be >= 1");
  need(c.time_budget_minutes >= 0, "time_budget_minutes must be >= 0");
  for (int k : c.cardinality) need(k >= 2, "cardinalities must be >= 2");
  generator(c);
  const auto m = model_config(c);
  if (m.variant.reasoner == pipeline::ReasonerKind::satnet) {
    need(m.variant.encoder == pipeline::EncoderKind::vq, "the satnet reasoner needs the vq encoder");
    need(c.embed_dim == 0 || c.embed_dim >= maxsat::min_embedding_dim(m.layer_variables()),
         "embed_dim below the minimum rank for the layer");
  }
}

inline nlohmann::ordered_json to_json(const RunConfig& c) {
  nlohmann::ordered_json j;
  j["preset"] = c.preset;
  j["seed"] = c.seed;
  j["data_seed"] = c.data_seed;
  j["eval_seed"] = c.eval_seed;
  j["side"] = c.side;
  j["contexts"] = c.contexts;
  j["rules"] = c.rules;
  j["cardinality"] = c.cardinality;
  j["variant"] = c.variant;
  j["codebook_size"] = c.codebook_size;
  j["latent_dim"] = c.latent_dim;
  j["clauses"] = c.clauses;
  j["embed_dim"] = c.embed_dim;
  j["aux"] = c.aux;
  j["train_sweeps"] = c.train_sweeps;
  j["eval_sweeps"] = c.eval_sweeps;
  j["tol"] = c.tol;
  j["beta"] = c.beta;
  j["head_width"] = c.head_width;
  j["epochs"] = c.epochs;
  j["batch_size"] = c.batch_size;
  j["learning_rate"] = c.learning_rate;
  j["save_every"] = c.save_every;
  j["time_budget_minutes"] = c.time_budget_minutes;
  return j;
}

/// Starts from the named preset (key "preset", default desk) and applies
/// every other key. Unknown keys and type mismatches are errors.
inline RunConfig from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  RunConfig c = preset(j.contains("preset") ? j.at("preset").get<std::string>() : "desk");
  const auto known = to_json(c);
  for (const auto& [key, value] : j.items()) {
    if (!known.contains(key)) throw ConfigError("unknown config key '" + key + "'");
    (void)value;
  }
  auto get = [&](const char* key, auto& field) {
    if (!j.contains(key)) return;
    try {
      field = j.at(key).get<std::remove_reference_t<decltype(field)>>();
    } catch (const nlohmann::json::exception&) {
      throw ConfigError(std::string("config key '") + key + "' has the wrong type");
    }
  };
  get("seed", c.seed);
  get("data_seed", c.data_seed);
  get("eval_seed", c.eval_seed);
  get("side", c.side);
  get("contexts", c.contexts);
  get("rules", c.rules);
  get("cardinality", c.cardinality);
  get("variant", c.variant);
  get("codebook_size", c.codebook_size);
  get("latent_dim", c.latent_dim);
  get("clauses", c.clauses);
  get("embed_dim", c.embed_dim);
  get("aux", c.aux);
  get("train_sweeps", c.train_sweeps);
  get("eval_sweeps", c.eval_sweeps);
  get("tol", c.tol);
  get("beta", c.beta);
  get("head_width", c.head_width);
  get("epochs", c.epochs);
  get("batch_size", c.batch_size);
  get("learning_rate", c.learning_rate);
  get("save_every", c.save_every);
  get("time_budget_minutes", c.time_budget_minutes);
  validate(c);
  return c;
}

inline RunConfig parse(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  return from_json(j);
}

inline std::string serialize(const RunConfig& c) { return to_json(c).dump(2) + "\n"; }

}  // namespace satvq::config
