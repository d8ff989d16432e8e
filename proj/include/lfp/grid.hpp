#pragma once

#include <array>
#include <compare>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "lfp/error.hpp"

namespace lfp {

inline constexpr int kGridWidth = 15;
inline constexpr int kGridHeight = 9;
inline constexpr int kCellCount = kGridWidth * kGridHeight;

// Discrete object location. x grows rightward, y grows upward, origin is the
// bottom-left cell.
class GridPos {
public:
  constexpr GridPos(int x, int y) : x_(x), y_(y) {
    if (x < 0 || x >= kGridWidth || y < 0 || y >= kGridHeight)
      throw DomainError("grid position (" + std::to_string(x) + "," + std::to_string(y) +
                        ") outside the 15x9 grid");
  }

  constexpr int x() const { return x_; }
  constexpr int y() const { return y_; }

  // Row-major index with y as the major key, i.e. the (y, x) reporting order.
  constexpr int index() const { return y_ * kGridWidth + x_; }
  static constexpr GridPos from_index(int i) { return GridPos(i % kGridWidth, i / kGridWidth); }

  friend constexpr bool operator==(GridPos, GridPos) = default;
  friend constexpr auto operator<=>(GridPos a, GridPos b) { return a.index() <=> b.index(); }

  std::string str() const { return "(" + std::to_string(x_) + "," + std::to_string(y_) + ")"; }

private:
  int x_;
  int y_;
};

inline std::vector<GridPos> all_cells() {
  std::vector<GridPos> cells;
  cells.reserve(kCellCount);
  for (int i = 0; i < kCellCount; ++i)
    cells.push_back(GridPos::from_index(i));
  return cells;
}

enum class Action : std::uint8_t { Up, Down, Left, Right };

// Canonical iteration order; tie-breaks everywhere depend on it.
inline constexpr std::array<Action, 4> kActions = {Action::Up, Action::Down, Action::Left,
                                                   Action::Right};

constexpr std::size_t action_index(Action a) { return static_cast<std::size_t>(a); }

constexpr std::string_view to_string(Action a) {
  switch (a) {
  case Action::Up: return "up";
  case Action::Down: return "down";
  case Action::Left: return "left";
  case Action::Right: return "right";
  }
  return "?";
}

inline Action parse_action(std::string_view s) {
  for (Action a : kActions)
    if (to_string(a) == s)
      return a;
  throw FormatError("unknown action '" + std::string(s) + "'");
}

enum class TaskId : std::uint8_t { PushPull, MoveToPos };

constexpr std::string_view to_string(TaskId t) {
  return t == TaskId::PushPull ? "pushpull" : "movetopos";
}

inline TaskId parse_task(std::string_view s) {
  if (s == "pushpull")
    return TaskId::PushPull;
  if (s == "movetopos")
    return TaskId::MoveToPos;
  throw FormatError("unknown task '" + std::string(s) + "'");
}

// 4-connected move; moves off the grid leave the position unchanged.
constexpr GridPos step(GridPos p, Action a) {
  int x = p.x();
  int y = p.y();
  switch (a) {
  case Action::Up: y = y + 1 < kGridHeight ? y + 1 : y; break;
  case Action::Down: y = y > 0 ? y - 1 : y; break;
  case Action::Left: x = x > 0 ? x - 1 : x; break;
  case Action::Right: x = x + 1 < kGridWidth ? x + 1 : x; break;
  }
  return GridPos(x, y);
}

// The unique action taking `from` to `to`, if they are 4-neighbours.
inline std::optional<Action> action_between(GridPos from, GridPos to) {
  for (Action a : kActions)
    if (from != to && step(from, a) == to)
      return a;
  return std::nullopt;
}

inline constexpr int kPushPullExcludedRow = 4;

// Task definition together with the ground-truth expert used to generate
// demonstrations and to judge success. Nothing in the agent pipeline may call
// expert_action; it exists for demo generation, oracles and scoring.
class TaskSpec {
public:
  explicit constexpr TaskSpec(TaskId id) : id_(id) {}

  constexpr TaskId id() const { return id_; }

  bool is_goal(GridPos p) const {
    if (id_ == TaskId::MoveToPos)
      return p.x() == kGridWidth - 1 && p.y() == kGridHeight - 1;
    if (p.y() > kPushPullExcludedRow)
      return p.x() == kGridWidth - 1;
    if (p.y() < kPushPullExcludedRow)
      return p.x() == 0;
    return false;
  }

  // PushPull: right in the upper half, left in the lower half, nothing once
  // the row's goal column is reached. MoveToPos: right, then up.
  std::optional<Action> expert_action(GridPos p) const {
    if (id_ == TaskId::PushPull) {
      if (p.y() == kPushPullExcludedRow)
        throw DomainError("pushpull expert is undefined on the middle row y=4, got " + p.str());
      if (is_goal(p))
        return std::nullopt;
      return p.y() > kPushPullExcludedRow ? Action::Right : Action::Left;
    }
    if (p.x() < kGridWidth - 1)
      return Action::Right;
    if (p.y() < kGridHeight - 1)
      return Action::Up;
    return std::nullopt;
  }

  bool is_eligible_start(GridPos p) const {
    if (id_ == TaskId::PushPull && p.y() == kPushPullExcludedRow)
      return false;
    return !is_goal(p);
  }

  // Every cell except goals (and, for PushPull, the middle row), in (y, x) order.
  std::vector<GridPos> start_states() const {
    std::vector<GridPos> out;
    for (GridPos p : all_cells())
      if (is_eligible_start(p))
        out.push_back(p);
    return out;
  }

  // Terminal state of the expert's path from `start`.
  GridPos goal_for(GridPos start) const {
    if (id_ == TaskId::MoveToPos)
      return GridPos(kGridWidth - 1, kGridHeight - 1);
    if (start.y() == kPushPullExcludedRow)
      throw DomainError("pushpull has no goal on the middle row");
    return GridPos(start.y() > kPushPullExcludedRow ? kGridWidth - 1 : 0, start.y());
  }

  // States visited by the expert from `start`, inclusive of both ends.
  std::vector<GridPos> expert_path(GridPos start) const {
    std::vector<GridPos> path{start};
    GridPos p = start;
    while (auto a = expert_action(p)) {
      p = step(p, *a);
      path.push_back(p);
      if (path.size() > kCellCount)
        throw DomainError("expert policy does not terminate from " + start.str());
    }
    return path;
  }

  int ground_truth_path_length(GridPos start) const {
    return static_cast<int>(expert_path(start).size()) - 1;
  }

private:
  TaskId id_;
};

} // namespace lfp
