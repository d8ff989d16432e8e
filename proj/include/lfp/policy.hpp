#pragma once

#include <algorithm>
#include <array>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "lfp/error.hpp"
#include "lfp/grid.hpp"
#include "lfp/predictors.hpp"
#include "lfp/render.hpp"

namespace lfp {

enum class PolicyMode : std::uint8_t { SingleImage, SequenceFed };

constexpr std::string_view to_string(PolicyMode m) {
  return m == PolicyMode::SingleImage ? "single-image" : "sequence-fed";
}

inline PolicyMode parse_mode(std::string_view s) {
  if (s == "single-image" || s == "single")
    return PolicyMode::SingleImage;
  if (s == "sequence-fed" || s == "sequence")
    return PolicyMode::SequenceFed;
  throw FormatError("unknown policy mode '" + std::string(s) + "'");
}

using ActionErrors = std::array<double, 4>; // canonical action order

struct Selection {
  Action action = Action::Up;
  ActionErrors errors{};
};

// argmin over actions of MSE(expert prediction, action prediction). The first
// strict minimum in canonical order wins.
inline Selection select_action(const Frame& expert_pred, const std::array<Frame, 4>& action_preds) {
  Selection s;
  double best = 0;
  for (Action a : kActions) {
    const double e = frame_mse(expert_pred, action_preds[action_index(a)]);
    s.errors[action_index(a)] = e;
    if (a == kActions.front() || e < best) {
      best = e;
      s.action = a;
    }
  }
  return s;
}

// Same decision rule on precomputed errors.
inline Action argmin_action(const ActionErrors& errors) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < errors.size(); ++i)
    if (errors[i] < errors[best])
      best = i;
  return kActions[best];
}

// Brings all predictions to the coarsest resolution among them.
inline void to_common_resolution(Frame& expert_pred, std::array<Frame, 4>& action_preds) {
  int w = expert_pred.width();
  int h = expert_pred.height();
  for (const Frame& f : action_preds)
    if (f.width() < w) {
      w = f.width();
      h = f.height();
    }
  expert_pred = to_resolution(expert_pred, w, h);
  for (Frame& f : action_preds)
    f = to_resolution(f, w, h);
}

enum class Outcome : std::uint8_t { ReachedGoal, Timeout };

constexpr std::string_view to_string(Outcome o) { return o == Outcome::ReachedGoal ? "reached_goal" : "timeout"; }

struct Trajectory {
  GridPos start{0, 0};
  std::vector<GridPos> visited; // starts with `start`
  std::vector<Action> actions;
  std::vector<ActionErrors> errors;
  std::vector<Frame> expert_predictions;
  Outcome outcome = Outcome::Timeout;

  int steps() const { return static_cast<int>(actions.size()); }
  bool succeeded() const { return outcome == Outcome::ReachedGoal; }

  friend bool operator==(const Trajectory&, const Trajectory&) = default;
};

// Raised when a predictor fails mid-episode; the message carries the step.
class EpisodeError : public Error {
public:
  EpisodeError(int step, const std::string& what)
      : Error("episode step " + std::to_string(step) + ": " + what), step_(step) {}
  int step() const { return step_; }

private:
  int step_;
};

inline constexpr int kStepBudgetSlack = 30;

inline int default_step_budget(const TaskSpec& task, GridPos start) {
  return task.ground_truth_path_length(start) + kStepBudgetSlack;
}

// Closed-loop control: observe, predict the demonstrator's next frame,
// predict each primitive's outcome, execute the closest. Ends when the
// start's goal cell is reached or after max_steps actions.
//
// The simulator renders the agent's own (armless) view; predictors only ever
// see those frames. SequenceFed passes every visited frame to the expert
// predictor, SingleImage only the current one.
inline Trajectory run_episode(const TaskSpec& task, GridPos start, const PredictorSet& predictors, PolicyMode mode,
                              int max_steps, const RenderConfig& cfg) {
  predictors.check();
  if (max_steps < 1)
    throw DomainError("max_steps must be at least 1");
  if (task.is_goal(start))
    throw DomainError("start equals goal");
  const GridPos goal = task.goal_for(start);

  Trajectory traj;
  traj.start = start;
  traj.visited.push_back(start);
  std::vector<Frame> history;
  GridPos pos = start;
  for (int k = 0; k < max_steps; ++k) {
    Frame current = render(pos, cfg, false);
    Frame expert_pred;
    std::array<Frame, 4> action_preds;
    try {
      if (mode == PolicyMode::SequenceFed) {
        history.push_back(current);
        expert_pred = predictors.expert->predict(history);
      } else {
        expert_pred = predictors.expert->predict(std::span<const Frame>(&current, 1));
      }
      for (Action a : kActions)
        action_preds[action_index(a)] = predictors.action(a).predict(current);

      to_common_resolution(expert_pred, action_preds);
    } catch (const EpisodeError&) {
      throw;
    } catch (const std::exception& e) {
      throw EpisodeError(k, e.what());
    }

    const Selection sel = select_action(expert_pred, action_preds);
    pos = step(pos, sel.action);
    traj.actions.push_back(sel.action);
    traj.errors.push_back(sel.errors);
    traj.expert_predictions.push_back(std::move(expert_pred));
    traj.visited.push_back(pos);
    if (pos == goal) {
      traj.outcome = Outcome::ReachedGoal;
      return traj;
    }
  }
  traj.outcome = Outcome::Timeout;
  return traj;
}

inline Trajectory run_episode(const TaskSpec& task, GridPos start, const PredictorSet& predictors, PolicyMode mode,
                              const RenderConfig& cfg) {
  return run_episode(task, start, predictors, mode, default_step_budget(task, start), cfg);
}

// Extra steps beyond the expert's path; none for timeouts.
inline std::optional<int> deviation(const Trajectory& traj, const TaskSpec& task) {
  if (!traj.succeeded())
    return std::nullopt;
  return traj.steps() - task.ground_truth_path_length(traj.start);
}

} // namespace lfp
