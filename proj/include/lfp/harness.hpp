#pragma once

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <functional>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "lfp/dataset.hpp"
#include "lfp/error.hpp"
#include "lfp/grid.hpp"
#include "lfp/io.hpp"
#include "lfp/policy.hpp"
#include "lfp/predictors.hpp"
#include "lfp/render.hpp"

namespace lfp {

enum class FailureType : std::uint8_t { TypeA, TypeB, Other };

constexpr std::string_view to_string(FailureType t) {
  switch (t) {
  case FailureType::TypeA: return "A";
  case FailureType::TypeB: return "B";
  case FailureType::Other: return "other";
  }
  return "?";
}

struct EpisodeRecord {
  GridPos start{0, 0};
  Outcome outcome = Outcome::Timeout;
  int steps = 0;
  std::optional<int> deviation;
  Action first_action = Action::Up;
  bool first_correct = false;
  std::optional<FailureType> failure_type; // PushPull failures only

  bool succeeded() const { return outcome == Outcome::ReachedGoal; }
  friend bool operator==(const EpisodeRecord&, const EpisodeRecord&) = default;
};

struct FailureCounts {
  int type_a = 0;
  int type_b = 0;
  int other = 0;
  int total() const { return type_a + type_b + other; }
  friend bool operator==(const FailureCounts&, const FailureCounts&) = default;
};

// Percentages are in [0, 100]; an empty class yields 0.
struct Aggregates {
  int trajectories = 0;
  int successes = 0;
  double success_pct = 0;
  double failure_pct = 0;
  int no_deviation = 0;
  double no_deviation_of_successes_pct = 0;
  double no_deviation_of_all_pct = 0;
  // Over successful trajectories that deviated at all.
  int deviating = 0;
  std::optional<double> deviation_median;
  std::optional<int> deviation_max;
  std::optional<int> deviation_min;
  double first_correct_pct = 0;
  // Within each outcome class, share with a correct / incorrect first step.
  double success_first_correct_pct = 0;
  double success_first_incorrect_pct = 0;
  double failure_first_correct_pct = 0;
  double failure_first_incorrect_pct = 0;
  FailureCounts failures;

  friend bool operator==(const Aggregates&, const Aggregates&) = default;
};

struct EvalReport {
  TaskId task = TaskId::PushPull;
  PolicyMode mode = PolicyMode::SequenceFed;
  std::vector<EpisodeRecord> records; // ordered by (y, x) of start
  Aggregates aggregates;

  friend bool operator==(const EvalReport&, const EvalReport&) = default;
};

namespace detail {

inline double pct(int num, int den) { return den == 0 ? 0.0 : 100.0 * num / den; }

} // namespace detail

inline std::optional<FailureType> classify_failure(const TaskSpec& task, const Trajectory& traj) {
  if (task.id() != TaskId::PushPull || traj.succeeded())
    return std::nullopt;
  const auto truth = task.expert_action(traj.start);
  const Action first = traj.actions.front();
  if (first == truth)
    return FailureType::Other;
  if (first == Action::Right)
    return FailureType::TypeA;
  if (first == Action::Up)
    return FailureType::TypeB;
  return FailureType::Other;
}

inline EpisodeRecord make_record(const TaskSpec& task, const Trajectory& traj) {
  EpisodeRecord r;
  r.start = traj.start;
  r.outcome = traj.outcome;
  r.steps = traj.steps();
  r.deviation = deviation(traj, task);
  r.first_action = traj.actions.front();
  r.first_correct = task.expert_action(traj.start) == r.first_action;
  r.failure_type = classify_failure(task, traj);
  return r;
}

inline Aggregates compute_aggregates(const std::vector<EpisodeRecord>& records) {
  Aggregates a;
  a.trajectories = static_cast<int>(records.size());
  std::vector<int> devs;
  int first_correct = 0, s_correct = 0, f_correct = 0;
  for (const auto& r : records) {
    if (r.first_correct)
      ++first_correct;
    if (r.succeeded()) {
      ++a.successes;
      if (r.first_correct)
        ++s_correct;
      if (r.deviation == 0)
        ++a.no_deviation;
      else
        devs.push_back(*r.deviation);
    } else {
      if (r.first_correct)
        ++f_correct;
      switch (r.failure_type.value_or(FailureType::Other)) {
      case FailureType::TypeA: ++a.failures.type_a; break;
      case FailureType::TypeB: ++a.failures.type_b; break;
      case FailureType::Other: ++a.failures.other; break;
      }
    }
  }
  const int failed = a.trajectories - a.successes;
  a.success_pct = detail::pct(a.successes, a.trajectories);
  a.failure_pct = detail::pct(failed, a.trajectories);
  a.no_deviation_of_successes_pct = detail::pct(a.no_deviation, a.successes);
  a.no_deviation_of_all_pct = detail::pct(a.no_deviation, a.trajectories);
  a.deviating = static_cast<int>(devs.size());
  if (!devs.empty()) {
    std::sort(devs.begin(), devs.end());
    const std::size_t n = devs.size();
    a.deviation_median = n % 2 ? devs[n / 2] : (devs[n / 2 - 1] + devs[n / 2]) / 2.0;
    a.deviation_min = devs.front();
    a.deviation_max = devs.back();
  }
  a.first_correct_pct = detail::pct(first_correct, a.trajectories);
  a.success_first_correct_pct = detail::pct(s_correct, a.successes);
  a.success_first_incorrect_pct = a.successes ? 100.0 - a.success_first_correct_pct : 0.0;
  a.failure_first_correct_pct = detail::pct(f_correct, failed);
  a.failure_first_incorrect_pct = failed ? 100.0 - a.failure_first_correct_pct : 0.0;
  return a;
}

inline int default_jobs() {
  const unsigned n = std::thread::hardware_concurrency();
  return n == 0 ? 1 : static_cast<int>(n);
}

// Runs one episode per start. Results come back ordered by (y, x) whatever
// the order of `starts` or the number of workers.
inline EvalReport sweep_starts(const TaskSpec& task, std::vector<GridPos> starts, const PredictorSet& predictors,
                               PolicyMode mode, const RenderConfig& cfg, int jobs = 1) {
  predictors.check();
  std::sort(starts.begin(), starts.end());
  std::vector<std::optional<EpisodeRecord>> out(starts.size());
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mu;
  auto worker = [&] {
    for (std::size_t i = next++; i < starts.size(); i = next++) {
      try {
        out[i] = make_record(task, run_episode(task, starts[i], predictors, mode, cfg));
      } catch (...) {
        std::lock_guard lock(failure_mu);
        if (!failure)
          failure = std::current_exception();
      }
    }
  };
  jobs = std::clamp(jobs, 1, static_cast<int>(std::max<std::size_t>(starts.size(), 1)));
  if (jobs == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (int j = 0; j < jobs; ++j)
      pool.emplace_back(worker);
  }
  if (failure)
    std::rethrow_exception(failure);

  EvalReport report;
  report.task = task.id();
  report.mode = mode;
  for (auto& r : out)
    report.records.push_back(std::move(*r));
  report.aggregates = compute_aggregates(report.records);
  return report;
}

inline EvalReport sweep(const TaskSpec& task, const PredictorSet& predictors, PolicyMode mode,
                        const RenderConfig& cfg, int jobs = 1) {
  return sweep_starts(task, task.start_states(), predictors, mode, cfg, jobs);
}

struct FirstStateSummary {
  double correct_first_pct = 0;
  double success_correct_pct = 0;
  double success_incorrect_pct = 0;
  double failure_correct_pct = 0;
  double failure_incorrect_pct = 0;
  friend bool operator==(const FirstStateSummary&, const FirstStateSummary&) = default;
};

inline FirstStateSummary first_state_analysis(const EvalReport& report) {
  const Aggregates a = compute_aggregates(report.records);
  return {a.first_correct_pct, a.success_first_correct_pct, a.success_first_incorrect_pct,
          a.failure_first_correct_pct, a.failure_first_incorrect_pct};
}

inline FailureCounts classify_failures(const EvalReport& report) {
  if (report.task != TaskId::PushPull)
    throw DomainError("failure types are defined for pushpull reports only");
  return compute_aggregates(report.records).failures;
}

// ---- reporting -------------------------------------------------------------

namespace detail {

inline std::string fixed1(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.1f", v);
  return buf;
}

} // namespace detail

inline const std::vector<std::string>& report_columns() {
  static const std::vector<std::string> cols = {"task",      "mode",       "start_x",       "start_y",
                                                "outcome",   "steps",      "deviation",     "first_action",
                                                "first_correct", "failure_type"};
  return cols;
}

// (name, value) pairs of the aggregate block, in a fixed order.
inline std::vector<std::pair<std::string, std::string>> aggregate_rows(const Aggregates& a) {
  auto opt = [](const auto& v) { return v ? detail::fixed1(static_cast<double>(*v)) : std::string(); };
  return {
      {"trajectories", std::to_string(a.trajectories)},
      {"successes", std::to_string(a.successes)},
      {"success_pct", detail::fixed1(a.success_pct)},
      {"failure_pct", detail::fixed1(a.failure_pct)},
      {"no_deviation_of_successes_pct", detail::fixed1(a.no_deviation_of_successes_pct)},
      {"no_deviation_of_all_pct", detail::fixed1(a.no_deviation_of_all_pct)},
      {"deviation_median", opt(a.deviation_median)},
      {"deviation_max", opt(a.deviation_max)},
      {"deviation_min", opt(a.deviation_min)},
      {"first_correct_pct", detail::fixed1(a.first_correct_pct)},
      {"success_first_correct_pct", detail::fixed1(a.success_first_correct_pct)},
      {"success_first_incorrect_pct", detail::fixed1(a.success_first_incorrect_pct)},
      {"failure_first_correct_pct", detail::fixed1(a.failure_first_correct_pct)},
      {"failure_first_incorrect_pct", detail::fixed1(a.failure_first_incorrect_pct)},
      {"failures_type_a", std::to_string(a.failures.type_a)},
      {"failures_type_b", std::to_string(a.failures.type_b)},
      {"failures_other", std::to_string(a.failures.other)},
  };
}

// Header, one row per start, then "aggregate,<name>,<value>" rows.
inline std::string report_csv(const EvalReport& report) {
  std::string out;
  const auto& cols = report_columns();
  for (std::size_t i = 0; i < cols.size(); ++i)
    out += (i ? "," : "") + cols[i];
  out += "\n";
  for (const auto& r : report.records) {
    out += std::string(to_string(report.task)) + "," + std::string(to_string(report.mode)) + "," +
           std::to_string(r.start.x()) + "," + std::to_string(r.start.y()) + "," +
           std::string(to_string(r.outcome)) + "," + std::to_string(r.steps) + "," +
           (r.deviation ? std::to_string(*r.deviation) : "") + "," + std::string(to_string(r.first_action)) + "," +
           (r.first_correct ? "1" : "0") + "," +
           (r.failure_type ? std::string(to_string(*r.failure_type)) : "") + "\n";
  }
  for (const auto& [name, value] : aggregate_rows(report.aggregates))
    out += "aggregate," + name + "," + value + "\n";
  return out;
}

inline void export_report(const EvalReport& report, const std::filesystem::path& path) {
  write_text(path, report_csv(report));
}

// Human-readable results block.
inline std::string summary_text(const EvalReport& report) {
  const Aggregates& a = report.aggregates;
  auto line = [](const std::string& k, const std::string& v) { return k + ": " + v + "\n"; };
  std::string out;
  out += line("task", std::string(to_string(report.task)));
  out += line("mode", std::string(to_string(report.mode)));
  out += line("Successful trajectories",
              detail::fixed1(a.success_pct) + "% (" + std::to_string(a.successes) + "/" +
                  std::to_string(a.trajectories) + ")");
  out += line("Successful with no deviation (of successful)", detail::fixed1(a.no_deviation_of_successes_pct) + "%");
  out += line("Successful with no deviation (of all)", detail::fixed1(a.no_deviation_of_all_pct) + "%");
  if (a.deviating > 0)
    out += line("Deviation median/max/min", detail::fixed1(*a.deviation_median) + " / " +
                                                   std::to_string(*a.deviation_max) + " / " +
                                                   std::to_string(*a.deviation_min));
  else
    out += line("Deviation median/max/min", "n/a");
  out += line("Correct first-state predictions", detail::fixed1(a.first_correct_pct) + "%");
  out += line("Successful with correct first-state prediction", detail::fixed1(a.success_first_correct_pct) + "%");
  out += line("Successful with incorrect first-state prediction",
              detail::fixed1(a.success_first_incorrect_pct) + "%");
  out += line("Unsuccessful with correct first-state prediction", detail::fixed1(a.failure_first_correct_pct) + "%");
  out += line("Unsuccessful with incorrect first-state prediction",
              detail::fixed1(a.failure_first_incorrect_pct) + "%");
  if (report.task == TaskId::PushPull)
    out += line("Failure types (A/B/other)", std::to_string(a.failures.type_a) + " / " +
                                                 std::to_string(a.failures.type_b) + " / " +
                                                 std::to_string(a.failures.other));
  return out;
}

// Per step: the frame the agent saw, blended 50% with the predicted expert
// frame (enlarged to native size when predicted at lower resolution).
inline Frame render_strip(const Trajectory& traj, const RenderConfig& cfg) {
  if (traj.actions.empty())
    throw DomainError("strip of an empty trajectory");
  std::vector<Frame> tiles;
  for (std::size_t k = 0; k < traj.actions.size(); ++k) {
    const Frame current = render(traj.visited[k], cfg, false);
    Frame pred = traj.expert_predictions[k];
    if (!pred.same_shape(current)) {
      const int factor = current.width() / pred.width();
      pred = upsample_nearest(pred, factor);
      if (!pred.same_shape(current))
        throw DomainError("predicted frame is not an integer downscale of the native frame");
    }
    tiles.push_back(blend_half(current, pred));
  }
  return hconcat(tiles);
}

inline void render_strip(const Trajectory& traj, const RenderConfig& cfg, const std::filesystem::path& path) {
  write_bytes(path, encode_ppm(render_strip(traj, cfg)));
}

inline std::string step_errors_csv(const Trajectory& traj) {
  std::string out = "step,x,y,action,err_up,err_down,err_left,err_right\n";
  for (std::size_t k = 0; k < traj.actions.size(); ++k) {
    out += std::to_string(k) + "," + std::to_string(traj.visited[k].x()) + "," +
           std::to_string(traj.visited[k].y()) + "," + std::string(to_string(traj.actions[k]));
    for (double e : traj.errors[k])
      out += "," + format_double(e);
    out += "\n";
  }
  return out;
}

// ---- fault injection -----------------------------------------------------------

// A rule returns a replacement frame when it fires, nothing otherwise.
using ExpertFaultRule = std::function<std::optional<Frame>(std::span<const Frame> history)>;
using ActionFaultRule = std::function<std::optional<Frame>(Action, const Frame& current)>;

struct FaultRules {
  ExpertFaultRule expert;
  ActionFaultRule action;
};

class FaultyExpertPredictor final : public ExpertPredictor {
public:
  FaultyExpertPredictor(std::shared_ptr<const ExpertPredictor> inner, ExpertFaultRule rule)
      : inner_(std::move(inner)), rule_(std::move(rule)) {}
  Frame predict(std::span<const Frame> history) const override {
    if (rule_)
      if (auto f = rule_(history))
        return std::move(*f);
    return inner_->predict(history);
  }
  PredictorKind kind() const override { return inner_->kind(); }

private:
  std::shared_ptr<const ExpertPredictor> inner_;
  ExpertFaultRule rule_;
};

class FaultyActionPredictor final : public ActionPredictor {
public:
  FaultyActionPredictor(Action a, std::shared_ptr<const ActionPredictor> inner, ActionFaultRule rule)
      : action_(a), inner_(std::move(inner)), rule_(std::move(rule)) {}
  Frame predict(const Frame& current) const override {
    if (rule_)
      if (auto f = rule_(action_, current))
        return std::move(*f);
    return inner_->predict(current);
  }
  PredictorKind kind() const override { return inner_->kind(); }

private:
  Action action_;
  std::shared_ptr<const ActionPredictor> inner_;
  ActionFaultRule rule_;
};

inline PredictorSet inject_fault(const PredictorSet& predictors, const FaultRules& rules) {
  predictors.check();
  PredictorSet out;
  out.expert = std::make_shared<FaultyExpertPredictor>(predictors.expert, rules.expert);
  for (Action a : kActions)
    out.actions[action_index(a)] =
        std::make_shared<FaultyActionPredictor>(a, predictors.actions[action_index(a)], rules.action);
  return out;
}

// MoveToPos: on first arriving in the last column from the left, predict the
// demonstrator staying put (a Right into the wall) once before turning Up.
// Needs the visited history, so it only fires in SequenceFed mode.
inline ExpertFaultRule late_turn_rule(std::shared_ptr<const oracle::StateIndex> index) {
  return [index](std::span<const Frame> history) -> std::optional<Frame> {
    if (history.size() < 2)
      return std::nullopt;
    const GridPos now = index->state_of(history.back());
    const GridPos prev = index->state_of(history[history.size() - 2]);
    if (now.x() == kGridWidth - 1 && now.y() < kGridHeight - 1 && prev.x() == kGridWidth - 2)
      return history.back();
    return std::nullopt;
  };
}

// Episodes starting in `starts` always see the demonstrator moving Right.
inline ExpertFaultRule always_right_rule(std::shared_ptr<const oracle::StateIndex> index, std::set<GridPos> starts) {
  return [index, starts = std::move(starts)](std::span<const Frame> history) -> std::optional<Frame> {
    if (history.empty() || !starts.contains(index->state_of(history.front())))
      return std::nullopt;
    return render(step(index->state_of(history.back()), Action::Right), index->config(), false);
  };
}

// ---- training-state agreement ------------------------------------------------------

struct Agreement {
  int agree = 0;
  int total = 0;
  double pct() const { return detail::pct(agree, total); }
};

// Replays each demonstration from the agent's view and checks that the
// policy picks the move the demonstrator made at every step.
inline Agreement demo_agreement(std::span<const Demonstration> demos, const PredictorSet& predictors,
                                PolicyMode mode, const RenderConfig& cfg) {
  predictors.check();
  Agreement g;
  for (const Demonstration& d : demos) {
    std::vector<Frame> history;
    for (std::size_t k = 0; k + 1 < d.size(); ++k) {
      Frame current = render(d.states()[k], cfg, false);
      if (mode == PolicyMode::SequenceFed)
        history.push_back(current);
      else
        history.assign(1, current);
      Frame expert_pred = predictors.expert->predict(history);
      std::array<Frame, 4> preds;
      for (Action a : kActions)
        preds[action_index(a)] = predictors.action(a).predict(current);
      to_common_resolution(expert_pred, preds);
      const Action chosen = select_action(expert_pred, preds).action;
      const auto truth = action_between(d.states()[k], d.states()[k + 1]);
      ++g.total;
      if (truth && chosen == *truth)
        ++g.agree;
    }
  }
  return g;
}

} // namespace lfp
