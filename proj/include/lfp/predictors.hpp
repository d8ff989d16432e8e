#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "lfp/dataset.hpp"
#include "lfp/error.hpp"
#include "lfp/grid.hpp"
#include "lfp/io.hpp"
#include "lfp/render.hpp"

namespace lfp {

enum class PredictorKind : std::uint8_t { Oracle, Analytic, Neural };

constexpr std::string_view to_string(PredictorKind k) {
  switch (k) {
  case PredictorKind::Oracle: return "oracle";
  case PredictorKind::Analytic: return "analytic";
  case PredictorKind::Neural: return "neural";
  }
  return "?";
}

inline PredictorKind parse_predictor_kind(std::string_view s) {
  for (auto k : {PredictorKind::Oracle, PredictorKind::Analytic, PredictorKind::Neural})
    if (to_string(k) == s)
      return k;
  throw FormatError("unknown predictor kind '" + std::string(s) + "'");
}

// Predicts the next frame as if the demonstrator were acting, from the frames
// observed so far (oldest first). Frames are the only input channel.
class ExpertPredictor {
public:
  virtual ~ExpertPredictor() = default;
  virtual Frame predict(std::span<const Frame> history) const = 0;
  virtual PredictorKind kind() const = 0;
};

// Predicts the next frame if the agent executes one fixed primitive.
class ActionPredictor {
public:
  virtual ~ActionPredictor() = default;
  virtual Frame predict(const Frame& current) const = 0;
  virtual PredictorKind kind() const = 0;
};

struct PredictorSet {
  std::shared_ptr<const ExpertPredictor> expert;
  std::array<std::shared_ptr<const ActionPredictor>, 4> actions; // canonical order

  const ActionPredictor& action(Action a) const { return *actions[action_index(a)]; }

  void check() const {
    if (!expert)
      throw ConfigError("predictor set has no expert predictor");
    for (Action a : kActions)
      if (!actions[action_index(a)])
        throw ConfigError("predictor set has no '" + std::string(to_string(a)) + "' predictor");
  }
};

// ---- localization -------------------------------------------------------

inline constexpr double kObjectColorTolerance = 60.0;

inline double rgb_distance(Rgb a, Rgb b) {
  const double dr = double(a.r) - b.r;
  const double dg = double(a.g) - b.g;
  const double db = double(a.b) - b.b;
  return std::sqrt(dr * dr + dg * dg + db * db);
}

// Cell nearest to the centroid of object-coloured pixels. Pixels closer to the
// arm colour than to the object colour never count.
inline GridPos localize_object(const Frame& f, const RenderConfig& cfg,
                               double tolerance = kObjectColorTolerance) {
  if (f.width() != cfg.width() || f.height() != cfg.height())
    throw DomainError("localize_object: frame is " + std::to_string(f.width()) + "x" +
                      std::to_string(f.height()) + ", render config expects " + std::to_string(cfg.width()) +
                      "x" + std::to_string(cfg.height()));
  double sx = 0, sy = 0;
  long n = 0;
  for (int py = 0; py < f.height(); ++py) {
    for (int px = 0; px < f.width(); ++px) {
      const Rgb c = f.at(px, py);
      const double d_obj = rgb_distance(c, cfg.object);
      if (d_obj <= tolerance && d_obj <= rgb_distance(c, cfg.arm)) {
        sx += px + 0.5;
        sy += py + 0.5;
        ++n;
      }
    }
  }
  if (n == 0)
    throw DomainError("object not found");
  const double cx = sx / static_cast<double>(n);
  const double cy = sy / static_cast<double>(n);
  const int col = std::clamp(static_cast<int>(std::floor(cx / cfg.cell_px)), 0, kGridWidth - 1);
  const int row = std::clamp(static_cast<int>(std::floor(cy / cfg.cell_px)), 0, kGridHeight - 1);
  return GridPos(col, kGridHeight - 1 - row);
}

// ---- motion field ----------------------------------------------------------

// Demonstrated cell -> observed move, recovered purely from consecutive state
// pairs.
class MotionField {
public:
  MotionField() = default;
  explicit MotionField(std::map<GridPos, Action> moves) : moves_(std::move(moves)) {}

  const std::map<GridPos, Action>& moves() const { return moves_; }
  bool empty() const { return moves_.empty(); }
  std::size_t size() const { return moves_.size(); }

  // Move of the L1-nearest demonstrated cell. Ties go to the earliest action
  // in canonical order, then to the lowest (y, x) cell.
  Action nearest_action(GridPos p) const {
    if (moves_.empty())
      throw DomainError("motion field is empty");
    int best_dist = std::numeric_limits<int>::max();
    GridPos best_cell = moves_.begin()->first;
    Action best_action = moves_.begin()->second;
    for (const auto& [cell, a] : moves_) { // map order is (y, x)
      const int d = std::abs(cell.x() - p.x()) + std::abs(cell.y() - p.y());
      if (d < best_dist || (d == best_dist && action_index(a) < action_index(best_action))) {
        best_dist = d;
        best_cell = cell;
        best_action = a;
      }
    }
    return best_action;
  }

  friend bool operator==(const MotionField&, const MotionField&) = default;

private:
  std::map<GridPos, Action> moves_;
};

inline MotionField build_motion_field(std::span<const Demonstration> demos) {
  std::map<GridPos, Action> moves;
  for (const auto& d : demos) {
    if (d.label() != demos.front().label())
      throw DomainError("motion field demos mix labels '" + label_name(demos.front().label()) + "' and '" +
                        label_name(d.label()) + "'");
    const auto& s = d.states();
    for (std::size_t i = 0; i + 1 < s.size(); ++i) {
      if (s[i] == s[i + 1])
        continue;
      const auto a = action_between(s[i], s[i + 1]);
      if (!a)
        throw DomainError("demonstration step " + s[i].str() + " -> " + s[i + 1].str() + " is not a single move");
      const auto [it, inserted] = moves.emplace(s[i], *a);
      if (!inserted && it->second != *a)
        throw DomainError("conflicting demonstrated moves at " + s[i].str() + ": " +
                          std::string(to_string(it->second)) + " vs " + std::string(to_string(*a)));
    }
  }
  return MotionField(std::move(moves));
}

inline nlohmann::json to_json(const MotionField& field, TaskId task) {
  nlohmann::json cells = nlohmann::json::array();
  for (const auto& [p, a] : field.moves())
    cells.push_back({{"x", p.x()}, {"y", p.y()}, {"action", std::string(to_string(a))}});
  return {{"task", std::string(to_string(task))}, {"cells", cells}};
}

inline MotionField motion_field_from_json(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("cells") || !j["cells"].is_array())
    throw FormatError("motion field needs a 'cells' array");
  std::map<GridPos, Action> moves;
  for (const auto& c : j["cells"]) {
    if (!c.is_object() || !c.contains("x") || !c.contains("y") || !c.contains("action") ||
        !c["x"].is_number_integer() || !c["y"].is_number_integer() || !c["action"].is_string())
      throw FormatError("motion field cells need integer x, y and a string action");
    try {
      moves[GridPos(c["x"].get<int>(), c["y"].get<int>())] = parse_action(c["action"].get<std::string>());
    } catch (const DomainError& e) {
      throw FormatError(e.what());
    }
  }
  return MotionField(std::move(moves));
}

// ---- analytic predictors ---------------------------------------------------------

inline Frame analytic_expert_predict(const Frame& f, const MotionField& field, const RenderConfig& cfg) {
  if (field.empty())
    throw DomainError("analytic expert: empty motion field");
  const GridPos p = localize_object(f, cfg);
  return render(step(p, field.nearest_action(p)), cfg, false);
}

inline Frame analytic_action_predict(const Frame& f, Action a, const RenderConfig& cfg) {
  return render(step(localize_object(f, cfg), a), cfg, false);
}

// Markov: only the newest frame matters.
class AnalyticExpertPredictor final : public ExpertPredictor {
public:
  AnalyticExpertPredictor(MotionField field, RenderConfig cfg) : field_(std::move(field)), cfg_(cfg) {
    if (field_.empty())
      throw DomainError("analytic expert: empty motion field");
  }
  Frame predict(std::span<const Frame> history) const override {
    if (history.empty())
      throw DomainError("analytic expert: empty history");
    return analytic_expert_predict(history.back(), field_, cfg_);
  }
  PredictorKind kind() const override { return PredictorKind::Analytic; }
  const MotionField& field() const { return field_; }

private:
  MotionField field_;
  RenderConfig cfg_;
};

class AnalyticActionPredictor final : public ActionPredictor {
public:
  AnalyticActionPredictor(Action a, RenderConfig cfg) : action_(a), cfg_(cfg) {}
  Frame predict(const Frame& current) const override { return analytic_action_predict(current, action_, cfg_); }
  PredictorKind kind() const override { return PredictorKind::Analytic; }

private:
  Action action_;
  RenderConfig cfg_;
};

inline PredictorSet make_analytic_predictors(MotionField field, const RenderConfig& cfg) {
  PredictorSet set;
  set.expert = std::make_shared<AnalyticExpertPredictor>(std::move(field), cfg);
  for (Action a : kActions)
    set.actions[action_index(a)] = std::make_shared<AnalyticActionPredictor>(a, cfg);
  return set;
}

// ---- oracle ------------------------------------------------------------------
//
// Ground truth for tests and harness baselines only. Oracles read the true
// state through an exact-match table of every rendering the simulator can
// produce, then apply the real dynamics and expert policy. Nothing in the
// deployment path constructs one.
namespace oracle {

inline Frame expert_predict(const TaskSpec& task, GridPos pos, const RenderConfig& cfg) {
  const auto a = task.expert_action(pos);
  return render(a ? step(pos, *a) : pos, cfg, false);
}

inline Frame action_predict(GridPos pos, Action a, const RenderConfig& cfg) {
  return render(step(pos, a), cfg, false);
}

// Exact frame -> state lookup over all cells, with and without the arm.
class StateIndex {
public:
  explicit StateIndex(const RenderConfig& cfg) : cfg_(cfg) {
    for (bool arm : {false, true})
      for (GridPos p : all_cells()) {
        Frame f = render(p, cfg, arm);
        const std::uint64_t h = fnv1a64(f.pixels());
        by_hash_.emplace(h, Entry{p, std::move(f)});
      }
  }

  GridPos state_of(const Frame& f) const {
    const auto [lo, hi] = by_hash_.equal_range(fnv1a64(f.pixels()));
    for (auto it = lo; it != hi; ++it)
      if (it->second.frame == f)
        return it->second.pos;
    throw DomainError("oracle: frame is not a rendering of any grid state");
  }

  const RenderConfig& config() const { return cfg_; }

private:
  struct Entry {
    GridPos pos;
    Frame frame;
  };
  RenderConfig cfg_;
  std::unordered_multimap<std::uint64_t, Entry> by_hash_;
};

class OracleExpertPredictor final : public ExpertPredictor {
public:
  OracleExpertPredictor(TaskSpec task, std::shared_ptr<const StateIndex> index)
      : task_(task), index_(std::move(index)) {}
  Frame predict(std::span<const Frame> history) const override {
    if (history.empty())
      throw DomainError("oracle expert: empty history");
    return expert_predict(task_, index_->state_of(history.back()), index_->config());
  }
  PredictorKind kind() const override { return PredictorKind::Oracle; }

private:
  TaskSpec task_;
  std::shared_ptr<const StateIndex> index_;
};

class OracleActionPredictor final : public ActionPredictor {
public:
  OracleActionPredictor(Action a, std::shared_ptr<const StateIndex> index) : action_(a), index_(std::move(index)) {}
  Frame predict(const Frame& current) const override {
    return action_predict(index_->state_of(current), action_, index_->config());
  }
  PredictorKind kind() const override { return PredictorKind::Oracle; }

private:
  Action action_;
  std::shared_ptr<const StateIndex> index_;
};

inline std::shared_ptr<const ExpertPredictor> make_expert(const TaskSpec& task, const RenderConfig& cfg) {
  return std::make_shared<OracleExpertPredictor>(task, std::make_shared<StateIndex>(cfg));
}

inline PredictorSet make_predictors(const TaskSpec& task, const RenderConfig& cfg) {
  auto index = std::make_shared<const StateIndex>(cfg);
  PredictorSet set;
  set.expert = std::make_shared<OracleExpertPredictor>(task, index);
  for (Action a : kActions)
    set.actions[action_index(a)] = std::make_shared<OracleActionPredictor>(a, index);
  return set;
}

} // namespace oracle

} // namespace lfp
