#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <string>

#include <nlohmann/json.hpp>

#include "lfp/dataset.hpp"
#include "lfp/error.hpp"
#include "lfp/grid.hpp"
#include "lfp/io.hpp"
#include "lfp/neural.hpp"
#include "lfp/policy.hpp"
#include "lfp/predictors.hpp"
#include "lfp/render.hpp"

namespace lfp {

inline constexpr int kConfigSchemaVersion = 1;

// Everything a run depends on besides its input files.
struct RunConfig {
  int schema_version = kConfigSchemaVersion;
  TaskId task = TaskId::MoveToPos;
  std::uint64_t seed = 1;
  std::filesystem::path out_dir = "out";
  PolicyMode mode = PolicyMode::SequenceFed;
  PredictorKind expert_kind = PredictorKind::Neural;
  PredictorKind action_kind = PredictorKind::Neural;
  int jobs = 0; // 0: one per logical processor
  RenderConfig render;
  std::optional<DemoPlan> plan; // default plan of `task` when absent
  nn::TrainConfig train;

  DemoPlan effective_plan() const { return plan ? *plan : default_demo_plan(task); }

  void validate() const {
    if (schema_version != kConfigSchemaVersion)
      throw ConfigError("unsupported config schema_version " + std::to_string(schema_version));
    if (jobs < 0)
      throw ConfigError("jobs must be non-negative");
    render.validate();
    train.validate();
    if (plan) {
      if (plan->task != task)
        throw ConfigError("plan task does not match run task");
      try {
        validate_plan(*plan);
      } catch (const Error& e) {
        throw ConfigError(std::string("demo plan: ") + e.what());
      }
    }
    if (render.width() % train.downsample != 0 || render.height() % train.downsample != 0)
      throw ConfigError("train.downsample must divide the frame size");
  }

  friend bool operator==(const RunConfig&, const RunConfig&) = default;
};

inline nlohmann::json to_json(const nn::TrainConfig& t) {
  return {{"sequence_length", t.sequence_length},
          {"batch_size", t.batch_size},
          {"sequences_per_epoch", t.sequences_per_epoch},
          {"max_epochs", t.max_epochs},
          {"patience", t.patience},
          {"target_val_mse", t.target_val_mse},
          {"downsample", t.downsample},
          {"lr", t.adam.lr},
          {"beta1", t.adam.beta1},
          {"beta2", t.adam.beta2},
          {"epsilon", t.adam.epsilon}};
}

inline nlohmann::json to_json(const RunConfig& c) {
  nlohmann::json j = {{"schema_version", c.schema_version},
                      {"task", std::string(to_string(c.task))},
                      {"seed", c.seed},
                      {"out_dir", c.out_dir.generic_string()},
                      {"mode", std::string(to_string(c.mode))},
                      {"predictors",
                       {{"expert", std::string(to_string(c.expert_kind))},
                        {"actions", std::string(to_string(c.action_kind))}}},
                      {"jobs", c.jobs},
                      {"render", to_json(c.render)},
                      {"train", to_json(c.train)}};
  if (c.plan)
    j["plan"] = to_json(*c.plan);
  return j;
}

namespace detail {

inline void reject_unknown_keys(const nlohmann::json& j, const std::set<std::string>& known, const std::string& where) {
  for (const auto& [k, v] : j.items())
    if (!known.contains(k))
      throw ConfigError("unknown key '" + k + "' in " + where);
}

template <typename T>
T typed(const nlohmann::json& j, const char* key, const std::string& where) {
  const auto& v = j.at(key);
  bool ok = false;
  if constexpr (std::is_same_v<T, bool>)
    ok = v.is_boolean();
  else if constexpr (std::is_same_v<T, std::string>)
    ok = v.is_string();
  else if constexpr (std::is_integral_v<T>)
    ok = v.is_number_integer() && (std::is_signed_v<T> || v.is_number_unsigned());
  else
    ok = v.is_number();
  if (!ok)
    throw ConfigError(where + "." + key + " has the wrong type");
  return v.get<T>();
}

} // namespace detail

inline nn::TrainConfig train_config_from_json(const nlohmann::json& j) {
  if (!j.is_object())
    throw ConfigError("train must be an object");
  detail::reject_unknown_keys(j,
                              {"sequence_length", "batch_size", "sequences_per_epoch", "max_epochs", "patience",
                               "target_val_mse", "downsample", "lr", "beta1", "beta2", "epsilon"},
                              "train");
  nn::TrainConfig t;
  auto int_field = [&](const char* k, int& dst) {
    if (j.contains(k))
      dst = detail::typed<int>(j, k, "train");
  };
  auto real_field = [&](const char* k, double& dst) {
    if (j.contains(k))
      dst = detail::typed<double>(j, k, "train");
  };
  int_field("sequence_length", t.sequence_length);
  int_field("batch_size", t.batch_size);
  int_field("sequences_per_epoch", t.sequences_per_epoch);
  int_field("max_epochs", t.max_epochs);
  int_field("patience", t.patience);
  real_field("target_val_mse", t.target_val_mse);
  int_field("downsample", t.downsample);
  real_field("lr", t.adam.lr);
  real_field("beta1", t.adam.beta1);
  real_field("beta2", t.adam.beta2);
  real_field("epsilon", t.adam.epsilon);
  return t;
}

// Missing keys keep defaults; unknown keys and bad values are ConfigErrors.
inline RunConfig run_config_from_json(const nlohmann::json& j) {
  if (!j.is_object())
    throw ConfigError("config must be a JSON object");
  detail::reject_unknown_keys(
      j, {"schema_version", "task", "seed", "out_dir", "mode", "predictors", "jobs", "render", "plan", "train"},
      "config");
  RunConfig c;
  try {
    if (!j.contains("schema_version"))
      throw ConfigError("config lacks schema_version");
    c.schema_version = detail::typed<int>(j, "schema_version", "config");
    if (j.contains("task"))
      c.task = parse_task(detail::typed<std::string>(j, "task", "config"));
    if (j.contains("seed"))
      c.seed = detail::typed<std::uint64_t>(j, "seed", "config");
    if (j.contains("out_dir"))
      c.out_dir = detail::typed<std::string>(j, "out_dir", "config");
    if (j.contains("mode"))
      c.mode = parse_mode(detail::typed<std::string>(j, "mode", "config"));
    if (j.contains("jobs"))
      c.jobs = detail::typed<int>(j, "jobs", "config");
    if (j.contains("predictors")) {
      const auto& p = j["predictors"];
      if (!p.is_object())
        throw ConfigError("predictors must be an object");
      detail::reject_unknown_keys(p, {"expert", "actions"}, "predictors");
      if (p.contains("expert"))
        c.expert_kind = parse_predictor_kind(detail::typed<std::string>(p, "expert", "predictors"));
      if (p.contains("actions"))
        c.action_kind = parse_predictor_kind(detail::typed<std::string>(p, "actions", "predictors"));
    }
    if (j.contains("render"))
      c.render = render_config_from_json(j["render"]);
    if (j.contains("plan"))
      c.plan = demo_plan_from_json(j["plan"]);
    if (j.contains("train"))
      c.train = train_config_from_json(j["train"]);
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw ConfigError(e.what());
  }
  c.validate();
  return c;
}

inline RunConfig load_run_config(const std::filesystem::path& path) {
  std::string text;
  try {
    text = read_text(path);
  } catch (const IoError& e) {
    throw ConfigError(e.what());
  }
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return run_config_from_json(j);
}

} // namespace lfp
