#pragma once

#include <array>
#include <filesystem>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "lfp/config.hpp"
#include "lfp/dataset.hpp"
#include "lfp/error.hpp"
#include "lfp/io.hpp"
#include "lfp/neural.hpp"
#include "lfp/predictors.hpp"

namespace lfp {

// Network names, expert first then canonical action order.
inline const std::array<std::string, 5>& model_names() {
  static const std::array<std::string, 5> names = {"expert", "up", "down", "left", "right"};
  return names;
}

inline std::filesystem::path weight_path(const std::filesystem::path& dir, const std::string& name) {
  return dir / (name + ".lfpw");
}
inline std::filesystem::path log_path(const std::filesystem::path& dir, const std::string& name) {
  return dir / (name + "_log.csv");
}
inline std::filesystem::path motion_field_path(const std::filesystem::path& dir) { return dir / "motion_field.json"; }

struct TrainedModel {
  std::string name;
  int epochs = 0;
  int best_epoch = 0;
  double best_val_mse = 0;
};

// Training demos and validation demos for one network. Primitive sweeps are
// too few to hold one out, so each primitive validates on its own sweeps.
struct TrainingSplit {
  std::vector<Demonstration> train;
  std::vector<Demonstration> validation;
};

inline TrainingSplit expert_split(const Dataset& ds, TaskId task) {
  return {ds.select(task, DemoRole::Train), ds.select(task, DemoRole::Validation)};
}

inline TrainingSplit primitive_split(const Dataset& ds, Action a) {
  auto demos = ds.select(a);
  return {demos, demos};
}

inline nn::Architecture architecture_for(const RunConfig& cfg) {
  nn::Architecture arch;
  arch.width = cfg.render.width() / cfg.train.downsample;
  arch.height = cfg.render.height() / cfg.train.downsample;
  arch.validate();
  return arch;
}

using TrainProgress = std::function<void(const TrainedModel&)>;

// Trains whatever the configured predictor kinds need and writes it to `out`:
// one weight file and log per neural network, a motion field for the
// analytic expert. Oracles and analytic primitives need nothing.
inline std::vector<TrainedModel> train_models(const Dataset& ds, const RunConfig& cfg,
                                              const std::filesystem::path& out, const TrainProgress& progress = {}) {
  cfg.validate();
  ensure_directory(out);
  std::vector<TrainedModel> done;

  if (cfg.expert_kind == PredictorKind::Analytic) {
    const auto field = build_motion_field(ds.select(cfg.task));
    write_text(motion_field_path(out), to_json(field, cfg.task).dump(2) + "\n");
  }

  auto train_one = [&](std::size_t k, const TrainingSplit& split) {
    if (split.train.empty() || split.validation.empty())
      throw ConfigError("dataset has no demonstrations for '" + model_names()[k] + "'");
    nn::TrainConfig tc = cfg.train;
    tc.seed = cfg.seed + k;
    const auto result = nn::train<float>(split.train, split.validation, tc);
    const auto& name = model_names()[k];
    nn::save_weights(result.net, weight_path(out, name));
    write_text(log_path(out, name), nn::training_log_csv(result.log));
    TrainedModel m{name, static_cast<int>(result.log.size()), result.best_epoch, result.best_val_mse};
    if (progress)
      progress(m);
    done.push_back(m);
  };
  if (cfg.expert_kind == PredictorKind::Neural)
    train_one(0, expert_split(ds, cfg.task));
  if (cfg.action_kind == PredictorKind::Neural)
    for (Action a : kActions)
      train_one(1 + action_index(a), primitive_split(ds, a));
  return done;
}

inline std::shared_ptr<const nn::ConvRecurrentNet> load_network(const std::filesystem::path& dir,
                                                                const std::string& name,
                                                                const nn::Architecture& arch) {
  return std::make_shared<const nn::ConvRecurrentNet>(nn::load_weights<float>(weight_path(dir, name), arch));
}

inline MotionField load_motion_field(const std::filesystem::path& dir, TaskId task) {
  try {
    const auto j = nlohmann::json::parse(read_text(motion_field_path(dir)));
    if (j.value("task", std::string()) != to_string(task))
      throw ModelLoadError("motion field was built for another task");
    return motion_field_from_json(j);
  } catch (const ModelLoadError&) {
    throw;
  } catch (const std::exception& e) {
    throw ModelLoadError("motion field: " + std::string(e.what()));
  }
}

// Predictor set described by `cfg`, reading trained models from `dir` where
// the kinds need them.
inline PredictorSet load_predictors(const RunConfig& cfg, const std::filesystem::path& dir) {
  cfg.validate();
  const TaskSpec task(cfg.task);
  PredictorSet set;
  std::shared_ptr<const oracle::StateIndex> index;
  auto oracle_index = [&] {
    if (!index)
      index = std::make_shared<const oracle::StateIndex>(cfg.render);
    return index;
  };
  switch (cfg.expert_kind) {
  case PredictorKind::Oracle:
    set.expert = std::make_shared<oracle::OracleExpertPredictor>(task, oracle_index());
    break;
  case PredictorKind::Analytic:
    set.expert = std::make_shared<AnalyticExpertPredictor>(load_motion_field(dir, cfg.task), cfg.render);
    break;
  case PredictorKind::Neural:
    set.expert = std::make_shared<nn::NeuralExpertPredictor>(load_network(dir, "expert", architecture_for(cfg)));
    break;
  }
  for (Action a : kActions) {
    auto& slot = set.actions[action_index(a)];
    switch (cfg.action_kind) {
    case PredictorKind::Oracle: slot = std::make_shared<oracle::OracleActionPredictor>(a, oracle_index()); break;
    case PredictorKind::Analytic: slot = std::make_shared<AnalyticActionPredictor>(a, cfg.render); break;
    case PredictorKind::Neural:
      slot = std::make_shared<nn::NeuralActionPredictor>(
          load_network(dir, model_names()[1 + action_index(a)], architecture_for(cfg)));
      break;
    }
  }
  return set;
}

} // namespace lfp
