// lfp: demo generation, training, evaluation and single rollouts.

#include <cstdio>
#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "lfp/config.hpp"
#include "lfp/dataset.hpp"
#include "lfp/harness.hpp"
#include "lfp/models.hpp"
#include "lfp/policy.hpp"

namespace {

enum ExitCode : int { kOk = 0, kConfig = 2, kIo = 3, kTraining = 4, kModelLoad = 5 };

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> task;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config, "JSON run config (default: $RUN_CONFIG, else built-in defaults)");
  cmd->add_option("--seed", c.seed, "Override the config seed");
  cmd->add_option("--task", c.task, "Override the config task (pushpull|movetopos)");
}

// flag > file > default
lfp::RunConfig resolve(const Common& c) {
  std::string path = c.config;
  if (path.empty())
    if (const char* env = std::getenv("RUN_CONFIG"))
      path = env;
  lfp::RunConfig cfg = path.empty() ? lfp::RunConfig{} : lfp::load_run_config(path);
  if (c.seed)
    cfg.seed = *c.seed;
  if (c.task) {
    try {
      cfg.task = lfp::parse_task(*c.task);
    } catch (const lfp::Error& e) {
      throw lfp::ConfigError(e.what());
    }
    if (cfg.plan && cfg.plan->task != cfg.task)
      cfg.plan.reset();
  }
  cfg.validate();
  return cfg;
}

lfp::PolicyMode mode_or(const std::optional<std::string>& flag, lfp::PolicyMode fallback) {
  if (!flag)
    return fallback;
  try {
    return lfp::parse_mode(*flag);
  } catch (const lfp::Error& e) {
    throw lfp::ConfigError(e.what());
  }
}

std::filesystem::path path_or(const std::optional<std::string>& flag, std::filesystem::path fallback) {
  return flag ? std::filesystem::path(*flag) : fallback;
}

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const lfp::ModelLoadError*>(&e))
    return kModelLoad;
  if (dynamic_cast<const lfp::TrainingError*>(&e))
    return kTraining;
  if (dynamic_cast<const lfp::IoError*>(&e) || dynamic_cast<const lfp::FormatError*>(&e))
    return kIo;
  return kConfig;
}

lfp::GridPos parse_start(const std::string& s) {
  const auto comma = s.find(',');
  if (comma == std::string::npos)
    throw lfp::ConfigError("--start expects X,Y");
  try {
    std::size_t used_x = 0, used_y = 0;
    const std::string xs = s.substr(0, comma), ys = s.substr(comma + 1);
    const int x = std::stoi(xs, &used_x);
    const int y = std::stoi(ys, &used_y);
    if (used_x != xs.size() || used_y != ys.size())
      throw lfp::ConfigError("--start expects X,Y");
    return lfp::GridPos(x, y);
  } catch (const lfp::DomainError& e) {
    throw lfp::ConfigError(e.what());
  } catch (const std::logic_error&) {
    throw lfp::ConfigError("--start expects X,Y");
  }
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"Learning-from-prediction pipeline on a simulated grid world"};
  app.require_subcommand(1);

  Common gen_c;
  std::optional<std::string> gen_out;
  auto* gen = app.add_subcommand("demo-gen", "Render expert and primitive demonstrations");
  add_common(gen, gen_c);
  gen->add_option("--out", gen_out, "Dataset directory (default: <out_dir>/data)");

  Common train_c;
  std::optional<std::string> train_data, train_out;
  auto* tr = app.add_subcommand("train", "Fit the configured predictors to a dataset");
  add_common(tr, train_c);
  tr->add_option("--data", train_data, "Dataset directory (default: <out_dir>/data)");
  tr->add_option("--out", train_out, "Model directory (default: <out_dir>/models)");

  Common eval_c;
  std::optional<std::string> eval_models, eval_report, eval_mode;
  std::optional<int> eval_jobs;
  auto* ev = app.add_subcommand("eval", "Run the policy from every start state");
  add_common(ev, eval_c);
  ev->add_option("--models", eval_models, "Model directory (default: <out_dir>/models)");
  ev->add_option("--report", eval_report, "Report CSV (default: <out_dir>/report.csv)");
  ev->add_option("--mode", eval_mode, "sequence-fed | single-image");
  ev->add_option("--jobs", eval_jobs, "Worker threads (default: logical processors)")->check(CLI::PositiveNumber);

  Common roll_c;
  std::string roll_start;
  std::optional<std::string> roll_models, roll_strip, roll_errors, roll_mode;
  auto* ro = app.add_subcommand("rollout", "Run one episode and save its image strip");
  add_common(ro, roll_c);
  ro->add_option("--start", roll_start, "Start cell X,Y")->required();
  ro->add_option("--models", roll_models, "Model directory (default: <out_dir>/models)");
  ro->add_option("--strip", roll_strip, "Strip PPM (default: <out_dir>/rollout.ppm)");
  ro->add_option("--errors", roll_errors, "Per-step error CSV (default: <out_dir>/rollout_errors.csv)");
  ro->add_option("--mode", roll_mode, "sequence-fed | single-image");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kConfig;
  }

  try {
    if (*gen) {
      const auto cfg = resolve(gen_c);
      const std::filesystem::path out = path_or(gen_out, cfg.out_dir / "data");
      const auto ds = lfp::generate_dataset(cfg.effective_plan(), cfg.render, cfg.seed);
      lfp::save_dataset(ds, out);
      std::cout << "wrote " << ds.demos.size() << " demonstrations to " << out.string() << "\n";
    } else if (*tr) {
      const auto cfg = resolve(train_c);
      const std::filesystem::path data = path_or(train_data, cfg.out_dir / "data");
      const std::filesystem::path out = path_or(train_out, cfg.out_dir / "models");
      const auto ds = lfp::load_dataset(data);
      if (!(ds.render_config == cfg.render))
        throw lfp::ConfigError("dataset was rendered with a different render config");
      const auto models = lfp::train_models(ds, cfg, out, [](const lfp::TrainedModel& m) {
        std::printf("%-6s epochs %3d  best epoch %3d  val mse %.6g\n", m.name.c_str(), m.epochs, m.best_epoch,
                    m.best_val_mse);
        std::fflush(stdout);
      });
      if (cfg.expert_kind == lfp::PredictorKind::Analytic)
        std::cout << "wrote " << lfp::motion_field_path(out).string() << "\n";
      if (models.empty() && cfg.expert_kind != lfp::PredictorKind::Analytic)
        std::cout << "nothing to train for the configured predictor kinds\n";
    } else if (*ev) {
      const auto cfg = resolve(eval_c);
      const std::filesystem::path models = path_or(eval_models, cfg.out_dir / "models");
      const std::filesystem::path report_path = path_or(eval_report, cfg.out_dir / "report.csv");
      const auto mode = mode_or(eval_mode, cfg.mode);
      const int jobs = eval_jobs ? *eval_jobs : (cfg.jobs ? cfg.jobs : lfp::default_jobs());
      const auto predictors = lfp::load_predictors(cfg, models);
      const auto report = lfp::sweep(lfp::TaskSpec(cfg.task), predictors, mode, cfg.render, jobs);
      if (report_path.has_parent_path())
        lfp::ensure_directory(report_path.parent_path());
      lfp::export_report(report, report_path);
      std::cout << lfp::summary_text(report);
    } else if (*ro) {
      const auto cfg = resolve(roll_c);
      const std::filesystem::path models = path_or(roll_models, cfg.out_dir / "models");
      const std::filesystem::path strip = path_or(roll_strip, cfg.out_dir / "rollout.ppm");
      const std::filesystem::path errors = path_or(roll_errors, cfg.out_dir / "rollout_errors.csv");
      const auto mode = mode_or(roll_mode, cfg.mode);
      const lfp::TaskSpec task(cfg.task);
      const lfp::GridPos start = parse_start(roll_start);
      if (task.is_goal(start))
        throw lfp::ConfigError("start equals goal");
      if (!task.is_eligible_start(start))
        throw lfp::ConfigError(start.str() + " is not a start state of " + std::string(to_string(cfg.task)));
      const auto predictors = lfp::load_predictors(cfg, models);
      const auto traj = lfp::run_episode(task, start, predictors, mode, cfg.render);
      for (const auto& p : {strip, errors})
        if (p.has_parent_path())
          lfp::ensure_directory(p.parent_path());
      lfp::render_strip(traj, cfg.render, strip);
      lfp::write_text(errors, lfp::step_errors_csv(traj));
      const auto dev = lfp::deviation(traj, task);
      std::cout << "start " << start.str() << "  outcome " << to_string(traj.outcome) << "  steps " << traj.steps()
                << "  deviation " << (dev ? std::to_string(*dev) : "n/a") << "\n";
    }
  } catch (const lfp::EpisodeError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kModelLoad;
  } catch (const lfp::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code_for(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kIo;
  }
  return kOk;
}
