#include <fstream>
#include <set>

#include <gtest/gtest.h>

#include "lfp/dataset.hpp"
#include "test_util.hpp"

namespace lfp {
namespace {

const RenderConfig kCfg;

std::set<GridPos> non_goal_states(const std::vector<Demonstration>& demos, const TaskSpec& t) {
  std::set<GridPos> out;
  for (const auto& d : demos)
    for (GridPos p : d.states())
      if (!t.is_goal(p))
        out.insert(p);
  return out;
}

TEST(Demonstration, RejectsBrokenInvariants) {
  const Frame f = render(GridPos(0, 0), kCfg, false);
  EXPECT_THROW(Demonstration(TaskId::PushPull, DemoRole::Train, {GridPos(0, 0)}, {f}, false), DomainError);
  EXPECT_THROW(Demonstration(TaskId::PushPull, DemoRole::Train, {GridPos(0, 0), GridPos(2, 0)}, {f, f}, false),
               DomainError);
  EXPECT_THROW(Demonstration(TaskId::PushPull, DemoRole::Train, {GridPos(0, 0), GridPos(1, 0)}, {f}, false),
               DomainError);
  // A clamped move repeats the state.
  EXPECT_NO_THROW(Demonstration(Action::Left, DemoRole::Train, {GridPos(0, 0), GridPos(0, 0)}, {f, f}, false));
}

TEST(ExpertDemos, Examples) {
  DemoPlan plan = default_demo_plan(TaskId::MoveToPos);
  plan.train_starts = {GridPos(12, 8)};
  const auto demos = generate_expert_demos(TaskSpec(TaskId::MoveToPos), plan, kCfg);
  ASSERT_EQ(demos.size(), 2u);
  EXPECT_EQ(demos[0].states(), (std::vector<GridPos>{GridPos(12, 8), GridPos(13, 8), GridPos(14, 8)}));

  const auto pp = generate_expert_demos(TaskSpec(TaskId::PushPull), default_demo_plan(TaskId::PushPull), kCfg);
  const auto it = std::find_if(pp.begin(), pp.end(), [](const Demonstration& d) { return d.states()[0] == GridPos(0, 6); });
  ASSERT_NE(it, pp.end());
  EXPECT_EQ(it->size(), 15u);
  EXPECT_EQ(it->states().back(), GridPos(14, 6));
  for (std::size_t i = 0; i + 1 < it->size(); ++i)
    EXPECT_EQ(action_between(it->states()[i], it->states()[i + 1]), Action::Right);
}

TEST(ExpertDemos, FramesAreRenderingsWithConfiguredArm) {
  RenderConfig cfg;
  cfg.arm_on_expert_frames = true;
  for (TaskId t : {TaskId::PushPull, TaskId::MoveToPos})
    for (const auto& d : generate_expert_demos(TaskSpec(t), default_demo_plan(t), cfg)) {
      EXPECT_TRUE(d.arm_visible());
      for (std::size_t i = 0; i < d.size(); ++i)
        EXPECT_EQ(d.frames()[i], render(d.states()[i], cfg, true));
    }
}

TEST(ExpertDemos, RejectsIneligibleStart) {
  DemoPlan plan = default_demo_plan(TaskId::PushPull);
  plan.train_starts.push_back(GridPos(3, 4));
  EXPECT_THROW(generate_expert_demos(TaskSpec(TaskId::PushPull), plan, kCfg), DomainError);
}

TEST(PrimitiveDemos, Examples) {
  DemoPlan plan = default_demo_plan(TaskId::PushPull);
  const auto up = generate_primitive_demos(Action::Up, plan, kCfg);
  ASSERT_EQ(up.size(), 2u);
  std::vector<GridPos> column;
  for (int y = 0; y < 9; ++y)
    column.emplace_back(3, y);
  EXPECT_EQ(up[0].states(), column);
  RenderConfig armed;
  armed.arm_on_expert_frames = true;
  for (TaskId t : {TaskId::PushPull, TaskId::MoveToPos})
    for (Action a : kActions) {
      const auto demos = generate_primitive_demos(a, default_demo_plan(t), armed);
      EXPECT_EQ(demos.size(), 2u);
      for (const auto& d : demos) {
        EXPECT_FALSE(d.arm_visible());
        EXPECT_EQ(d.label(), DemoLabel(a));
        for (std::size_t i = 0; i + 1 < d.size(); ++i)
          EXPECT_EQ(step(d.states()[i], a), d.states()[i + 1]);
      }
    }
}

TEST(PrimitiveDemos, MalformedPlan) {
  DemoPlan plan = default_demo_plan(TaskId::PushPull);
  plan.sweeps[action_index(Action::Left)].pop_back();
  EXPECT_THROW(generate_primitive_demos(Action::Left, plan, kCfg), ConfigError);
  EXPECT_THROW(validate_plan(plan), ConfigError);
}

TEST(DefaultPlan, PushPullHoldsOutRowsThreeAndFive) {
  const DemoPlan plan = default_demo_plan(TaskId::PushPull);
  EXPECT_NO_THROW(validate_plan(plan));
  const auto demos = generate_expert_demos(TaskSpec(TaskId::PushPull), plan, kCfg);
  for (const auto& d : demos)
    for (GridPos p : d.states()) {
      EXPECT_NE(p.y(), 3);
      EXPECT_NE(p.y(), 5);
    }
  std::set<int> train_rows, val_rows;
  for (GridPos p : plan.train_starts)
    train_rows.insert(p.y());
  for (GridPos p : plan.validation_starts)
    val_rows.insert(p.y());
  EXPECT_EQ(train_rows, (std::set<int>{0, 2, 6, 8}));
  EXPECT_EQ(val_rows, (std::set<int>{1, 7}));
}

TEST(DefaultPlan, MoveToPosStartsAndTransitionCoverage) {
  const DemoPlan plan = default_demo_plan(TaskId::MoveToPos);
  EXPECT_NO_THROW(validate_plan(plan));
  EXPECT_EQ(plan.train_starts, (std::vector<GridPos>{GridPos(0, 0), GridPos(0, 4), GridPos(7, 0)}));
  EXPECT_EQ(plan.validation_starts, (std::vector<GridPos>{GridPos(0, 8)}));
  const auto demos = generate_expert_demos(TaskSpec(TaskId::MoveToPos), plan, kCfg);
  bool turn_seen = false;
  for (const auto& d : demos)
    if (d.role() == DemoRole::Train)
      for (std::size_t i = 0; i + 2 < d.size(); ++i)
        if (action_between(d.states()[i], d.states()[i + 1]) == Action::Right &&
            action_between(d.states()[i + 1], d.states()[i + 2]) == Action::Up)
          turn_seen = turn_seen || d.states()[i + 1].x() == 14;
  EXPECT_TRUE(turn_seen);
}

TEST(DefaultPlan, StartsDisjointAndValidationStatesUnseen) {
  for (TaskId t : {TaskId::PushPull, TaskId::MoveToPos}) {
    const DemoPlan plan = default_demo_plan(t);
    const std::set<GridPos> train(plan.train_starts.begin(), plan.train_starts.end());
    for (GridPos p : plan.validation_starts)
      EXPECT_FALSE(train.contains(p));
    const TaskSpec spec(t);
    const auto demos = generate_expert_demos(spec, plan, kCfg);
    std::vector<Demonstration> tr, va;
    for (const auto& d : demos)
      (d.role() == DemoRole::Train ? tr : va).push_back(d);
    const auto a = non_goal_states(tr, spec);
    for (GridPos p : non_goal_states(va, spec))
      EXPECT_FALSE(a.contains(p)) << p.str();
  }
}

TEST(DefaultPlan, ValidationRejectsFullCoverage) {
  DemoPlan plan = default_demo_plan(TaskId::PushPull);
  plan.train_starts.clear();
  plan.validation_starts.clear();
  for (int y : {0, 1, 2, 3})
    plan.train_starts.emplace_back(14, y);
  for (int y : {5, 6, 7, 8})
    plan.validation_starts.emplace_back(0, y);
  EXPECT_THROW(validate_plan(plan), ConfigError);
}

TEST(Dataset, GenerationIsPure) {
  const DemoPlan plan = default_demo_plan(TaskId::PushPull);
  const Dataset a = generate_dataset(plan, kCfg, 5);
  const Dataset b = generate_dataset(plan, kCfg, 5);
  EXPECT_EQ(a, b);
  EXPECT_EQ(a.demos.size(), 6u + 8u);
  std::set<std::string> labels;
  for (const auto& d : a.demos)
    labels.insert(label_name(d.label()));
  EXPECT_EQ(labels, (std::set<std::string>{"pushpull", "up", "down", "left", "right"}));
}

TEST(Dataset, SaveLoadRoundTrip) {
  test::TempDir dir("ds");
  const Dataset ds = generate_dataset(default_demo_plan(TaskId::MoveToPos), kCfg, 9);
  save_dataset(ds, dir.path());
  EXPECT_EQ(load_dataset(dir.path()), ds);
}

TEST(Dataset, ManifestCarriesNoActionLabels) {
  test::TempDir dir("ds");
  save_dataset(generate_dataset(default_demo_plan(TaskId::MoveToPos), kCfg, 9), dir.path());
  const auto m = nlohmann::json::parse(read_text(dir / "manifest.json"));
  for (const auto& d : m["demos"]) {
    EXPECT_FALSE(d.contains("actions"));
    std::set<std::string> keys;
    for (const auto& [k, v] : d.items())
      keys.insert(k);
    EXPECT_EQ(keys, (std::set<std::string>{"label", "role", "arm_visible", "states", "frames"}));
  }
}

TEST(Dataset, LoadErrors) {
  const Dataset ds = generate_dataset(default_demo_plan(TaskId::MoveToPos), kCfg, 9);
  {
    test::TempDir dir("ds");
    save_dataset(ds, dir.path());
    std::filesystem::remove(dir / frame_file_name(0, 1));
    EXPECT_THROW(load_dataset(dir.path()), IoError);
  }
  {
    test::TempDir dir("ds");
    save_dataset(ds, dir.path());
    // Swap two frames: hashes no longer match.
    const auto a = read_bytes(dir / frame_file_name(0, 0));
    write_bytes(dir / frame_file_name(0, 0), read_bytes(dir / frame_file_name(0, 1)));
    write_bytes(dir / frame_file_name(0, 1), a);
    EXPECT_THROW(load_dataset(dir.path()), FormatError);
  }
  {
    test::TempDir dir("ds");
    save_dataset(ds, dir.path());
    // Consistent hash but wrong state: caught by re-rendering.
    auto m = nlohmann::json::parse(read_text(dir / "manifest.json"));
    m["demos"][0]["states"][0] = nlohmann::json::array({1, 1});
    m["demos"][0]["states"][1] = nlohmann::json::array({1, 2});
    write_text(dir / "manifest.json", m.dump());
    EXPECT_THROW(load_dataset(dir.path()), FormatError);
  }
  {
    test::TempDir dir("ds");
    save_dataset(ds, dir.path());
    write_text(dir / "manifest.json", "{\"demos\": 3");
    EXPECT_THROW(load_dataset(dir.path()), FormatError);
  }
  {
    test::TempDir dir("ds");
    EXPECT_THROW(load_dataset(dir.path()), IoError);
  }
}

TEST(DemoPlanJson, RoundTrip) {
  for (TaskId t : {TaskId::PushPull, TaskId::MoveToPos}) {
    const DemoPlan p = default_demo_plan(t);
    EXPECT_EQ(demo_plan_from_json(to_json(p)), p);
  }
  RenderConfig c;
  c.cell_px = 10;
  c.arm_on_expert_frames = true;
  EXPECT_EQ(render_config_from_json(to_json(c)), c);
}

} // namespace
} // namespace lfp
