#include <set>

#include <gtest/gtest.h>

#include "lfp/grid.hpp"

namespace lfp {
namespace {

const TaskSpec kPushPull(TaskId::PushPull);
const TaskSpec kMoveToPos(TaskId::MoveToPos);

// Closed-form path lengths, independent of the policy simulation.
int expected_length(TaskId t, GridPos p) {
  if (t == TaskId::MoveToPos)
    return (14 - p.x()) + (8 - p.y());
  return p.y() > 4 ? 14 - p.x() : p.x();
}

TEST(GridPos, RejectsOutOfRange) {
  EXPECT_THROW(GridPos(-1, 0), DomainError);
  EXPECT_THROW(GridPos(15, 0), DomainError);
  EXPECT_THROW(GridPos(0, 9), DomainError);
  EXPECT_THROW(GridPos(0, -1), DomainError);
  EXPECT_NO_THROW(GridPos(14, 8));
}

TEST(GridPos, IndexRoundTrip) {
  for (GridPos p : all_cells())
    EXPECT_EQ(GridPos::from_index(p.index()), p);
  EXPECT_EQ(all_cells().size(), 135u);
}

TEST(Action, CanonicalOrder) {
  ASSERT_EQ(kActions.size(), 4u);
  EXPECT_EQ(kActions[0], Action::Up);
  EXPECT_EQ(kActions[1], Action::Down);
  EXPECT_EQ(kActions[2], Action::Left);
  EXPECT_EQ(kActions[3], Action::Right);
  for (Action a : kActions)
    EXPECT_EQ(parse_action(to_string(a)), a);
  EXPECT_THROW(parse_action("sideways"), Error);
}

TEST(Step, Examples) {
  EXPECT_EQ(step(GridPos(3, 4), Action::Right), GridPos(4, 4));
  EXPECT_EQ(step(GridPos(14, 8), Action::Up), GridPos(14, 8));
  EXPECT_EQ(step(GridPos(0, 0), Action::Left), GridPos(0, 0));
}

TEST(Step, InteriorInverse) {
  for (GridPos p : all_cells()) {
    if (p.y() > 0 && p.y() < 8) {
      EXPECT_EQ(step(step(p, Action::Up), Action::Down), p);
      EXPECT_EQ(step(step(p, Action::Down), Action::Up), p);
    }
    if (p.x() > 0 && p.x() < 14) {
      EXPECT_EQ(step(step(p, Action::Left), Action::Right), p);
      EXPECT_EQ(step(step(p, Action::Right), Action::Left), p);
    }
  }
}

TEST(Step, MovesAtMostOneCell) {
  for (GridPos p : all_cells())
    for (Action a : kActions) {
      const GridPos q = step(p, a);
      EXPECT_LE(std::abs(q.x() - p.x()) + std::abs(q.y() - p.y()), 1);
      EXPECT_EQ(step(p, a), q);
    }
}

TEST(ActionBetween, RecoversMoves) {
  EXPECT_EQ(action_between(GridPos(3, 3), GridPos(3, 4)), Action::Up);
  EXPECT_EQ(action_between(GridPos(3, 3), GridPos(2, 3)), Action::Left);
  EXPECT_FALSE(action_between(GridPos(3, 3), GridPos(3, 3)));
  EXPECT_FALSE(action_between(GridPos(3, 3), GridPos(5, 3)));
}

TEST(ExpertAction, Examples) {
  EXPECT_EQ(kPushPull.expert_action(GridPos(2, 6)), Action::Right);
  EXPECT_EQ(kMoveToPos.expert_action(GridPos(14, 2)), Action::Up);
  EXPECT_EQ(kMoveToPos.expert_action(GridPos(14, 8)), std::nullopt);
  EXPECT_EQ(kPushPull.expert_action(GridPos(5, 1)), Action::Left);
  EXPECT_THROW(kPushPull.expert_action(GridPos(3, 4)), DomainError);
}

TEST(ExpertAction, NoneExactlyAtGoals) {
  for (const TaskSpec& t : {kPushPull, kMoveToPos})
    for (GridPos p : all_cells()) {
      if (t.id() == TaskId::PushPull && p.y() == 4)
        continue;
      EXPECT_EQ(t.is_goal(p), !t.expert_action(p).has_value()) << p.str();
    }
}

TEST(ExpertAction, ShapeConstraints) {
  for (GridPos p : kPushPull.start_states()) {
    const auto a = kPushPull.expert_action(p);
    ASSERT_TRUE(a);
    EXPECT_EQ(step(p, *a).y(), p.y());
  }
  for (GridPos p : kMoveToPos.start_states()) {
    const auto a = kMoveToPos.expert_action(p);
    ASSERT_TRUE(a);
    EXPECT_TRUE(*a == Action::Right || *a == Action::Up);
  }
}

TEST(StartStates, Counts) {
  EXPECT_EQ(kPushPull.start_states().size(), 112u);
  EXPECT_EQ(kMoveToPos.start_states().size(), 134u);
  const auto m = kMoveToPos.start_states();
  EXPECT_EQ(std::count(m.begin(), m.end(), GridPos(14, 8)), 0);
  for (GridPos p : kPushPull.start_states())
    EXPECT_NE(p.y(), 4);
}

TEST(StartStates, OrderedByRowThenColumn) {
  for (const TaskSpec& t : {kPushPull, kMoveToPos}) {
    const auto s = t.start_states();
    for (std::size_t i = 1; i < s.size(); ++i)
      EXPECT_LT(s[i - 1].index(), s[i].index());
  }
}

TEST(PathLength, Examples) {
  EXPECT_EQ(kMoveToPos.ground_truth_path_length(GridPos(12, 8)), 2);
  EXPECT_EQ(kPushPull.ground_truth_path_length(GridPos(14, 2)), 14);
  EXPECT_EQ(kMoveToPos.ground_truth_path_length(GridPos(0, 0)), 22);
}

TEST(PathLength, ClosureMatchesClosedForm) {
  for (const TaskSpec& t : {kPushPull, kMoveToPos})
    for (GridPos s : t.start_states()) {
      const auto path = t.expert_path(s);
      EXPECT_EQ(static_cast<int>(path.size()) - 1, expected_length(t.id(), s)) << s.str();
      EXPECT_LE(path.size() - 1, 30u);
      EXPECT_TRUE(t.is_goal(path.back()));
      EXPECT_EQ(path.back(), t.goal_for(s));
    }
}

TEST(Task, ParseRoundTrip) {
  EXPECT_EQ(parse_task("pushpull"), TaskId::PushPull);
  EXPECT_EQ(parse_task("movetopos"), TaskId::MoveToPos);
  EXPECT_THROW(parse_task("stack"), Error);
}

} // namespace
} // namespace lfp
