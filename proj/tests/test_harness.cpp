#include <algorithm>
#include <random>

#include <gtest/gtest.h>

#include "lfp/harness.hpp"
#include "test_util.hpp"

namespace lfp {
namespace {

const RenderConfig kCfg;
const TaskSpec kPushPull(TaskId::PushPull);
const TaskSpec kMoveToPos(TaskId::MoveToPos);

std::vector<std::string> lines_of(const std::string& s) {
  std::vector<std::string> out;
  std::size_t pos = 0;
  while (pos < s.size()) {
    const auto nl = s.find('\n', pos);
    out.push_back(s.substr(pos, nl - pos));
    pos = nl + 1;
  }
  return out;
}

EpisodeRecord rec(bool success, bool first_correct, std::optional<int> dev = 0,
                  std::optional<FailureType> ft = std::nullopt) {
  EpisodeRecord r;
  r.outcome = success ? Outcome::ReachedGoal : Outcome::Timeout;
  r.first_correct = first_correct;
  r.deviation = success ? dev : std::nullopt;
  r.failure_type = ft;
  return r;
}

// Right must be a real move: at (14,0) it ties with Down.
std::set<GridPos> lower_half_starts(std::size_t n) {
  std::set<GridPos> out;
  for (GridPos p : kPushPull.start_states())
    if (p.y() < 4 && p.x() < 14 && out.size() < n)
      out.insert(p);
  return out;
}

TEST(Sweep, OracleIsPerfectInBothModes) {
  for (const TaskSpec& t : {kPushPull, kMoveToPos})
    for (PolicyMode m : {PolicyMode::SequenceFed, PolicyMode::SingleImage}) {
      const EvalReport r = sweep(t, oracle::make_predictors(t, kCfg), m, kCfg);
      const auto& a = r.aggregates;
      EXPECT_EQ(a.trajectories, t.id() == TaskId::PushPull ? 112 : 134);
      EXPECT_EQ(a.successes, a.trajectories);
      EXPECT_EQ(a.success_pct, 100.0);
      EXPECT_EQ(a.no_deviation_of_all_pct, 100.0);
      EXPECT_EQ(a.first_correct_pct, 100.0);
      EXPECT_EQ(a.deviating, 0);
      EXPECT_FALSE(a.deviation_median);
      EXPECT_EQ(a.failures.total(), 0);
    }
}

TEST(Sweep, RecordsMatchGroundTruthPaths) {
  const EvalReport r = sweep(kMoveToPos, oracle::make_predictors(kMoveToPos, kCfg), PolicyMode::SequenceFed, kCfg);
  const auto starts = kMoveToPos.start_states();
  ASSERT_EQ(r.records.size(), starts.size());
  for (std::size_t i = 0; i < starts.size(); ++i) {
    EXPECT_EQ(r.records[i].start, starts[i]);
    EXPECT_EQ(r.records[i].steps, kMoveToPos.ground_truth_path_length(starts[i]));
    EXPECT_EQ(r.records[i].first_action, *kMoveToPos.expert_action(starts[i]));
  }
}

TEST(Sweep, OrderIndependentOfInputAndWorkers) {
  const auto s = oracle::make_predictors(kPushPull, kCfg);
  auto starts = kPushPull.start_states();
  const EvalReport base = sweep_starts(kPushPull, starts, s, PolicyMode::SequenceFed, kCfg, 1);
  std::mt19937_64 gen(2);
  std::shuffle(starts.begin(), starts.end(), gen);
  EXPECT_EQ(sweep_starts(kPushPull, starts, s, PolicyMode::SequenceFed, kCfg, 1), base);
  EXPECT_EQ(sweep_starts(kPushPull, starts, s, PolicyMode::SequenceFed, kCfg, 4), base);
}

TEST(Sweep, PropagatesPredictorErrors) {
  auto s = oracle::make_predictors(kMoveToPos, kCfg);
  const auto index = std::make_shared<oracle::StateIndex>(kCfg);
  s = inject_fault(s, {[](std::span<const Frame>) -> std::optional<Frame> { throw DomainError("bad"); }, nullptr});
  EXPECT_THROW(sweep(kMoveToPos, s, PolicyMode::SequenceFed, kCfg, 3), EpisodeError);
}

TEST(Aggregates, SyntheticReport) {
  const std::vector<EpisodeRecord> rs = {
      rec(true, true, 0),  rec(true, true, 2),   rec(true, false, 5), rec(true, true, 1),
      rec(false, false, std::nullopt, FailureType::TypeA), rec(false, true, std::nullopt, FailureType::Other),
      rec(false, false, std::nullopt, FailureType::TypeB), rec(false, false, std::nullopt, FailureType::TypeA)};
  const Aggregates a = compute_aggregates(rs);
  EXPECT_EQ(a.trajectories, 8);
  EXPECT_EQ(a.successes, 4);
  EXPECT_DOUBLE_EQ(a.success_pct, 50.0);
  EXPECT_DOUBLE_EQ(a.failure_pct, 50.0);
  EXPECT_EQ(a.no_deviation, 1);
  EXPECT_DOUBLE_EQ(a.no_deviation_of_successes_pct, 25.0);
  EXPECT_DOUBLE_EQ(a.no_deviation_of_all_pct, 12.5);
  EXPECT_EQ(a.deviating, 3);
  EXPECT_EQ(a.deviation_median, 2.0);
  EXPECT_EQ(a.deviation_max, 5);
  EXPECT_EQ(a.deviation_min, 1);
  EXPECT_DOUBLE_EQ(a.first_correct_pct, 50.0);
  EXPECT_DOUBLE_EQ(a.success_first_correct_pct, 75.0);
  EXPECT_DOUBLE_EQ(a.success_first_incorrect_pct, 25.0);
  EXPECT_DOUBLE_EQ(a.failure_first_correct_pct, 25.0);
  EXPECT_DOUBLE_EQ(a.failure_first_incorrect_pct, 75.0);
  EXPECT_EQ(a.failures, (FailureCounts{2, 1, 1}));
}

TEST(Aggregates, EvenMedianAndEmpty) {
  const Aggregates a = compute_aggregates({rec(true, true, 1), rec(true, true, 4)});
  EXPECT_EQ(a.deviation_median, 2.5);
  const Aggregates e = compute_aggregates({});
  EXPECT_EQ(e.success_pct, 0.0);
  EXPECT_EQ(e.success_first_incorrect_pct, 0.0);
  EXPECT_FALSE(e.deviation_max);
}

TEST(Aggregates, ConditionalPartitionsSumToHundred) {
  std::mt19937_64 gen(5);
  for (int k = 0; k < 20; ++k) {
    std::vector<EpisodeRecord> rs;
    for (int i = 0; i < 30; ++i)
      rs.push_back(rec(gen() % 2, gen() % 2, static_cast<int>(gen() % 4), FailureType::Other));
    const Aggregates a = compute_aggregates(rs);
    if (a.successes > 0) {
      EXPECT_NEAR(a.success_first_correct_pct + a.success_first_incorrect_pct, 100.0, 1e-9);
    }
    if (a.successes < a.trajectories) {
      EXPECT_NEAR(a.failure_first_correct_pct + a.failure_first_incorrect_pct, 100.0, 1e-9);
    }
    EXPECT_NEAR(a.success_pct + a.failure_pct, 100.0, 1e-9);
    const FirstStateSummary f = first_state_analysis(EvalReport{TaskId::PushPull, PolicyMode::SequenceFed, rs, a});
    EXPECT_EQ(f.correct_first_pct, a.first_correct_pct);
  }
}

TEST(Failures, AlwaysRightGivesTypeA) {
  const auto base = oracle::make_predictors(kPushPull, kCfg);
  const auto index = std::make_shared<oracle::StateIndex>(kCfg);
  for (std::size_t n : {1u, 26u}) {
    const auto starts = lower_half_starts(n);
    const PredictorSet s = inject_fault(base, {always_right_rule(index, starts), nullptr});
    const EvalReport r = sweep(kPushPull, s, PolicyMode::SequenceFed, kCfg);
    EXPECT_EQ(classify_failures(r), (FailureCounts{static_cast<int>(n), 0, 0}));
    EXPECT_EQ(r.aggregates.successes, 112 - static_cast<int>(n));
    for (const auto& rec : r.records)
      EXPECT_EQ(rec.failure_type.has_value(), starts.contains(rec.start));
  }
}

TEST(Failures, UpFirstIsTypeB) {
  Trajectory t;
  t.start = GridPos(4, 6);
  t.actions = {Action::Up};
  t.visited = {t.start, GridPos(4, 7)};
  t.outcome = Outcome::Timeout;
  EXPECT_EQ(classify_failure(kPushPull, t), FailureType::TypeB);
  t.start = GridPos(4, 2);
  t.actions = {Action::Down};
  EXPECT_EQ(classify_failure(kPushPull, t), FailureType::Other);
  t.actions = {Action::Left};
  EXPECT_EQ(classify_failure(kPushPull, t), FailureType::Other);
  EXPECT_EQ(classify_failure(kMoveToPos, t), std::nullopt);
  EvalReport mtp;
  mtp.task = TaskId::MoveToPos;
  EXPECT_THROW(classify_failures(mtp), DomainError);
}

TEST(Faults, NoOpRuleChangesNothing) {
  const auto base = oracle::make_predictors(kPushPull, kCfg);
  const PredictorSet s = inject_fault(
      base, {[](std::span<const Frame>) { return std::optional<Frame>(); },
             [](Action, const Frame&) { return std::optional<Frame>(); }});
  EXPECT_EQ(sweep(kPushPull, s, PolicyMode::SequenceFed, kCfg), sweep(kPushPull, base, PolicyMode::SequenceFed, kCfg));
}

TEST(Faults, LateTurnSweepDeviatesOnlyFromLeftOfLastColumn) {
  const auto base = oracle::make_predictors(kMoveToPos, kCfg);
  const auto index = std::make_shared<oracle::StateIndex>(kCfg);
  const EvalReport r =
      sweep(kMoveToPos, inject_fault(base, {late_turn_rule(index), nullptr}), PolicyMode::SequenceFed, kCfg);
  for (const auto& rec : r.records)
    EXPECT_EQ(rec.deviation, rec.start.x() < 14 && rec.start.y() < 8 ? 1 : 0) << rec.start.str();
  EXPECT_EQ(r.aggregates.deviation_max, 1);
  EXPECT_EQ(r.aggregates.deviating, 14 * 8);
}

TEST(Report, CsvLayout) {
  const EvalReport r = sweep(kPushPull, oracle::make_predictors(kPushPull, kCfg), PolicyMode::SequenceFed, kCfg);
  const auto lines = lines_of(report_csv(r));
  const std::size_t aggregates = aggregate_rows(r.aggregates).size();
  ASSERT_EQ(lines.size(), 1 + 112 + aggregates);
  EXPECT_EQ(lines[0], "task,mode,start_x,start_y,outcome,steps,deviation,first_action,first_correct,failure_type");
  EXPECT_EQ(lines[1], "pushpull,sequence-fed,1,0,reached_goal,1,0,left,1,");
  EXPECT_EQ(lines[113].rfind("aggregate,trajectories,112", 0), 0u);
  EXPECT_NE(std::find(lines.begin(), lines.end(), "aggregate,success_pct,100.0"), lines.end());
}

TEST(Report, ExportIsByteStable) {
  test::TempDir dir("rep");
  const auto s = oracle::make_predictors(kMoveToPos, kCfg);
  export_report(sweep(kMoveToPos, s, PolicyMode::SingleImage, kCfg), dir / "a.csv");
  export_report(sweep(kMoveToPos, s, PolicyMode::SingleImage, kCfg, 3), dir / "b.csv");
  EXPECT_EQ(read_bytes(dir / "a.csv"), read_bytes(dir / "b.csv"));
}

TEST(Report, SummaryText) {
  const EvalReport r = sweep(kMoveToPos, oracle::make_predictors(kMoveToPos, kCfg), PolicyMode::SequenceFed, kCfg);
  const std::string s = summary_text(r);
  EXPECT_NE(s.find("Successful trajectories: 100.0% (134/134)"), std::string::npos);
  EXPECT_NE(s.find("Deviation median/max/min: n/a"), std::string::npos);
  EXPECT_EQ(s.find("Failure types"), std::string::npos);
}

TEST(Strip, OneTilePerStep) {
  const auto s = oracle::make_predictors(kMoveToPos, kCfg);
  const Trajectory t = run_episode(kMoveToPos, GridPos(0, 0), s, PolicyMode::SequenceFed, kCfg);
  const Frame strip = render_strip(t, kCfg);
  EXPECT_EQ(strip.width(), 22 * 120);
  EXPECT_EQ(strip.height(), 72);
  const auto csv = lines_of(step_errors_csv(t));
  ASSERT_EQ(csv.size(), 23u);
  EXPECT_EQ(csv[0], "step,x,y,action,err_up,err_down,err_left,err_right");
  EXPECT_EQ(csv[1].rfind("0,0,0,right,", 0), 0u);
  EXPECT_EQ(std::count(csv[1].begin(), csv[1].end(), ','), 7);
}

TEST(Strip, UpscalesReducedPredictions) {
  Trajectory t;
  t.start = GridPos(3, 3);
  t.visited = {t.start, GridPos(4, 3)};
  t.actions = {Action::Right};
  t.errors = {ActionErrors{}};
  t.expert_predictions = {downsample(render(GridPos(4, 3), kCfg, false), 2)};
  const Frame strip = render_strip(t, kCfg);
  EXPECT_EQ(strip.width(), 120);
  t.actions.clear();
  EXPECT_THROW(render_strip(t, kCfg), DomainError);
}

TEST(Agreement, OracleAgreesWithEveryDemoStep) {
  const auto demos = generate_expert_demos(kMoveToPos, default_demo_plan(TaskId::MoveToPos), kCfg);
  const auto g = demo_agreement(demos, oracle::make_predictors(kMoveToPos, kCfg), PolicyMode::SequenceFed, kCfg);
  std::size_t steps = 0;
  for (const auto& d : demos)
    steps += d.size() - 1;
  EXPECT_EQ(g.total, static_cast<int>(steps));
  EXPECT_EQ(g.pct(), 100.0);
}

} // namespace
} // namespace lfp
