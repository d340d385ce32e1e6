#pragma once

// RunConfig: the flat JSON document every subcommand reads.
//
//   {
//     "dims": [3, 4, 1],        input, hidden..., output sizes
//     "k": 2,                   activation degree
//     "p": 2, "q": 2,           dual exponents; numbers or "inf", one may be omitted
//     "B": 1.0,                 input radius
//     "M": [0.5, 2.0],          per-layer budgets (default: canonical boundary)
//     "Gamma": 1.0,             optional lower product
//     "m": 32, "seed": 0, "draws": 200,
//     "steps": 500, "step_size": 0.05, "decay": 0.999, "restarts": 8,
//     "gamma_loss": 1.0, "c": 1.0,
//     "sweep_d": [...], "sweep_k": [...], "sweep_m": [...],
//     "sweep_Mprod": 2.0, "sweep_Gamma": 1.0, "sweep_estimate": false,
//     "verify_nets": 100, "verify_samples": 10000, "verify_matrices": 500,
//     "verify_degrees": [2, 3],
//     "kmax": 10, "out": "path"
//   }

#include <cstddef>
#include <cstdint>
#include <fstream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "polyrad/linalg.hpp"
#include "polyrad/polynet.hpp"
#include "polyrad/rademacher.hpp"

namespace polyrad::cli {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct RunConfig {
  ClassSpec spec;
  bool exponents_given = false;
  bool degree_given = false;
  std::size_t samples = 32;  // m
  std::uint64_t seed = 0;
  std::size_t draws = 200;
  OptimizerConfig optimizer;
  double gamma_loss = 1.0;
  double constant_c = 1.0;

  std::vector<std::size_t> sweep_depths;
  std::vector<int> sweep_degrees;
  std::vector<std::size_t> sweep_samples;
  std::optional<double> sweep_budget_product;
  std::optional<double> sweep_gamma;
  bool sweep_estimate = false;

  std::size_t verify_nets = 100;
  std::size_t verify_samples = 10000;
  std::size_t verify_matrices = 500;
  std::vector<int> verify_degrees{2, 3};

  int kmax = 10;
  std::string out;
};

inline RunConfig default_run_config() {
  RunConfig cfg;
  cfg.spec.dims = {3, 4, 1};
  cfg.spec.degree = 2;
  cfg.spec.input_radius = 1.0;
  cfg.spec.budgets = canonical_budgets(2, 2, 1.0);
  return cfg;
}

namespace detail {

inline const std::vector<std::string>& known_keys() {
  static const std::vector<std::string> keys{
      "dims", "k", "p", "q", "B", "M", "Gamma", "m", "seed", "draws", "steps", "step_size", "decay", "restarts",
      "gamma_loss", "c", "sweep_d", "sweep_k", "sweep_m", "sweep_Mprod", "sweep_Gamma", "sweep_estimate",
      "verify_nets", "verify_samples", "verify_matrices", "verify_degrees", "kmax", "out"};
  return keys;
}

[[noreturn]] inline void field_error(const std::string& key, const std::string& what) {
  throw ConfigError("field '" + key + "': " + what);
}

inline double get_number(const nlohmann::json& j, const std::string& key) {
  if (!j.at(key).is_number()) field_error(key, "expected a number");
  return j.at(key).get<double>();
}

inline std::uint64_t get_count(const nlohmann::json& j, const std::string& key) {
  const auto& v = j.at(key);
  if (!v.is_number_integer() || v.get<std::int64_t>() < 0) field_error(key, "expected a nonnegative integer");
  return v.get<std::uint64_t>();
}

inline Exponent get_exponent(const nlohmann::json& j, const std::string& key) {
  const auto& v = j.at(key);
  if (v.is_string()) {
    const auto s = v.get<std::string>();
    if (s == "inf" || s == "infinity" || s == "Infinity") return Exponent::infinity();
    field_error(key, "expected a number >= 1 or \"inf\", got \"" + s + "\"");
  }
  if (!v.is_number()) field_error(key, "expected a number >= 1 or \"inf\"");
  try {
    return Exponent(v.get<double>());
  } catch (const std::invalid_argument& e) {
    field_error(key, e.what());
  }
}

template <typename T>
std::vector<T> get_int_list(const nlohmann::json& j, const std::string& key) {
  const auto& v = j.at(key);
  if (!v.is_array()) field_error(key, "expected an array of integers");
  std::vector<T> out;
  for (const auto& e : v) {
    if (!e.is_number_integer()) field_error(key, "expected an array of integers");
    out.push_back(e.get<T>());
  }
  return out;
}

inline std::vector<double> get_number_list(const nlohmann::json& j, const std::string& key) {
  const auto& v = j.at(key);
  if (!v.is_array()) field_error(key, "expected an array of numbers");
  std::vector<double> out;
  for (const auto& e : v) {
    if (!e.is_number()) field_error(key, "expected an array of numbers");
    out.push_back(e.get<double>());
  }
  return out;
}

inline std::pair<std::size_t, std::size_t> line_column(const std::string& text, std::size_t byte) {
  std::size_t line = 1;
  std::size_t col = 1;
  for (std::size_t i = 0; i < byte && i < text.size(); ++i) {
    if (text[i] == '\n') {
      ++line;
      col = 1;
    } else {
      ++col;
    }
  }
  return {line, col};
}

}  // namespace detail

// Builds a RunConfig from a parsed document. Throws ConfigError naming the
// offending field, including class invariants (budgets, dual exponents).
inline RunConfig parse_run_config(const nlohmann::json& j) {
  using namespace detail;
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  for (const auto& [key, _] : j.items()) {
    if (std::ranges::find(known_keys(), key) == known_keys().end()) field_error(key, "unknown key");
  }

  RunConfig cfg = default_run_config();
  ClassSpec& spec = cfg.spec;
  if (j.contains("dims")) spec.dims = get_int_list<std::size_t>(j, "dims");
  if (j.contains("k")) {
    spec.degree = static_cast<int>(get_count(j, "k"));
    cfg.degree_given = true;
    cfg.verify_degrees = {spec.degree};
  }
  if (j.contains("p") && j.contains("q")) {
    spec.p = get_exponent(j, "p");
    spec.q = get_exponent(j, "q");
  } else if (j.contains("p")) {
    spec.p = get_exponent(j, "p");
    spec.q = spec.p.dual();
  } else if (j.contains("q")) {
    spec.q = get_exponent(j, "q");
    spec.p = spec.q.dual();
  }
  cfg.exponents_given = j.contains("p") || j.contains("q");
  if (j.contains("B")) spec.input_radius = get_number(j, "B");
  if (j.contains("M")) {
    spec.budgets = get_number_list(j, "M");
    // Explicit budgets may leave the canonical class; bounds still work,
    // estimation refuses.
    try {
      spec.validate();
    } catch (const std::invalid_argument&) {
      spec.canonical = false;
    }
  } else {
    spec.budgets = canonical_budgets(spec.depth(), spec.degree, spec.input_radius);
  }
  if (j.contains("Gamma")) spec.gamma = get_number(j, "Gamma");

  if (j.contains("m")) cfg.samples = get_count(j, "m");
  if (j.contains("seed")) cfg.seed = get_count(j, "seed");
  if (j.contains("draws")) cfg.draws = get_count(j, "draws");
  if (j.contains("steps")) cfg.optimizer.steps = get_count(j, "steps");
  if (j.contains("step_size")) cfg.optimizer.step_size = get_number(j, "step_size");
  if (j.contains("decay")) cfg.optimizer.decay = get_number(j, "decay");
  if (j.contains("restarts")) cfg.optimizer.restarts = get_count(j, "restarts");
  if (j.contains("gamma_loss")) cfg.gamma_loss = get_number(j, "gamma_loss");
  if (j.contains("c")) cfg.constant_c = get_number(j, "c");

  if (j.contains("sweep_d")) cfg.sweep_depths = get_int_list<std::size_t>(j, "sweep_d");
  if (j.contains("sweep_k")) cfg.sweep_degrees = get_int_list<int>(j, "sweep_k");
  if (j.contains("sweep_m")) cfg.sweep_samples = get_int_list<std::size_t>(j, "sweep_m");
  if (j.contains("sweep_Mprod")) cfg.sweep_budget_product = get_number(j, "sweep_Mprod");
  if (j.contains("sweep_Gamma")) cfg.sweep_gamma = get_number(j, "sweep_Gamma");
  if (j.contains("sweep_estimate")) {
    if (!j.at("sweep_estimate").is_boolean()) field_error("sweep_estimate", "expected true or false");
    cfg.sweep_estimate = j.at("sweep_estimate").get<bool>();
  }

  if (j.contains("verify_nets")) cfg.verify_nets = get_count(j, "verify_nets");
  if (j.contains("verify_samples")) cfg.verify_samples = get_count(j, "verify_samples");
  if (j.contains("verify_matrices")) cfg.verify_matrices = get_count(j, "verify_matrices");
  if (j.contains("verify_degrees")) cfg.verify_degrees = get_int_list<int>(j, "verify_degrees");
  if (j.contains("kmax")) cfg.kmax = static_cast<int>(get_count(j, "kmax"));
  if (j.contains("out")) {
    if (!j.at("out").is_string()) field_error("out", "expected a path string");
    cfg.out = j.at("out").get<std::string>();
  }

  try {
    spec.validate();
    cfg.optimizer.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("invalid class: ") + e.what());
  }
  if (cfg.samples == 0) field_error("m", "must be >= 1");
  if (cfg.draws == 0) field_error("draws", "must be >= 1");
  if (!(cfg.gamma_loss > 0.0)) field_error("gamma_loss", "must be positive");
  for (int k : cfg.verify_degrees) {
    if (k < 2) field_error("verify_degrees", "degrees must be >= 2");
  }
  if (cfg.verify_degrees.empty()) field_error("verify_degrees", "must not be empty");
  return cfg;
}

inline RunConfig parse_run_config_text(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    const auto [line, col] = detail::line_column(text, e.byte == 0 ? 0 : e.byte - 1);
    throw ConfigError("malformed JSON at line " + std::to_string(line) + ", column " + std::to_string(col) + ": " +
                      e.what());
  }
  return parse_run_config(j);
}

inline RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_run_config_text(ss.str());
}

}  // namespace polyrad::cli
