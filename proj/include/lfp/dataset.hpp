#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "lfp/error.hpp"
#include "lfp/grid.hpp"
#include "lfp/io.hpp"
#include "lfp/render.hpp"

namespace lfp {

using DemoLabel = std::variant<TaskId, Action>;

inline std::string label_name(const DemoLabel& l) {
  return std::visit([](auto v) { return std::string(to_string(v)); }, l);
}

inline DemoLabel parse_label(const std::string& s) {
  if (s == "pushpull" || s == "movetopos")
    return parse_task(s);
  return parse_action(s);
}

enum class DemoRole : std::uint8_t { Train, Validation };

constexpr std::string_view to_string(DemoRole r) { return r == DemoRole::Train ? "train" : "validation"; }

inline DemoRole parse_role(std::string_view s) {
  if (s == "train")
    return DemoRole::Train;
  if (s == "validation")
    return DemoRole::Validation;
  throw FormatError("unknown demo role '" + std::string(s) + "'");
}

// An observed state sequence with its frames. No action labels are stored:
// the only record of what happened is the sequence of states and images.
class Demonstration {
public:
  Demonstration(DemoLabel label, DemoRole role, std::vector<GridPos> states, std::vector<Frame> frames,
                bool arm_visible)
      : label_(label), role_(role), states_(std::move(states)), frames_(std::move(frames)),
        arm_visible_(arm_visible) {
    if (states_.size() < 2)
      throw DomainError("demonstration needs at least two states");
    if (states_.size() != frames_.size())
      throw DomainError("demonstration has " + std::to_string(states_.size()) + " states but " +
                        std::to_string(frames_.size()) + " frames");
    for (std::size_t i = 0; i + 1 < states_.size(); ++i) {
      const GridPos a = states_[i];
      const GridPos b = states_[i + 1];
      const int dist = std::abs(a.x() - b.x()) + std::abs(a.y() - b.y());
      if (dist > 1)
        throw DomainError("demonstration jumps from " + a.str() + " to " + b.str());
    }
    for (const Frame& f : frames_)
      if (!f.same_shape(frames_.front()))
        throw DomainError("demonstration frames differ in size");
  }

  const DemoLabel& label() const { return label_; }
  DemoRole role() const { return role_; }
  const std::vector<GridPos>& states() const { return states_; }
  const std::vector<Frame>& frames() const { return frames_; }
  bool arm_visible() const { return arm_visible_; }
  std::size_t size() const { return states_.size(); }

  friend bool operator==(const Demonstration&, const Demonstration&) = default;

private:
  DemoLabel label_;
  DemoRole role_;
  std::vector<GridPos> states_;
  std::vector<Frame> frames_;
  bool arm_visible_;
};

// A straight-line primitive demonstration: `steps` repetitions of one action.
struct Sweep {
  GridPos start{0, 0};
  int steps = 0;
  friend bool operator==(const Sweep&, const Sweep&) = default;
};

struct DemoPlan {
  TaskId task = TaskId::PushPull;
  std::vector<GridPos> train_starts;
  std::vector<GridPos> validation_starts;
  std::array<std::vector<Sweep>, 4> sweeps; // indexed by action_index

  const std::vector<Sweep>& sweeps_for(Action a) const { return sweeps[action_index(a)]; }

  friend bool operator==(const DemoPlan&, const DemoPlan&) = default;
};

inline void validate_plan(const DemoPlan& plan) {
  const TaskSpec spec(plan.task);
  std::set<GridPos> train(plan.train_starts.begin(), plan.train_starts.end());
  if (train.empty())
    throw ConfigError("demo plan has no training starts");
  if (plan.validation_starts.empty())
    throw ConfigError("demo plan has no validation starts");
  for (GridPos p : plan.train_starts)
    if (!spec.is_eligible_start(p))
      throw ConfigError("training start " + p.str() + " is not eligible for " + std::string(to_string(plan.task)));
  for (GridPos p : plan.validation_starts) {
    if (!spec.is_eligible_start(p))
      throw ConfigError("validation start " + p.str() + " is not eligible");
    if (train.contains(p))
      throw ConfigError("start " + p.str() + " is both a training and a validation start");
  }
  std::set<GridPos> covered;
  for (GridPos s : plan.train_starts)
    for (GridPos p : spec.expert_path(s))
      covered.insert(p);
  for (GridPos s : plan.validation_starts)
    for (GridPos p : spec.expert_path(s))
      covered.insert(p);
  const auto starts = spec.start_states();
  if (std::all_of(starts.begin(), starts.end(), [&](GridPos p) { return covered.contains(p); }))
    throw ConfigError("demo plan leaves no eligible start unseen");
  for (Action a : kActions) {
    if (plan.sweeps_for(a).size() != 2)
      throw ConfigError("primitive '" + std::string(to_string(a)) + "' needs exactly two sweeps");
    for (const Sweep& s : plan.sweeps_for(a))
      if (s.steps < 1)
        throw ConfigError("sweep for '" + std::string(to_string(a)) + "' has no steps");
  }
}

namespace detail {

inline Sweep full_row(int y, Action a) {
  return {GridPos(a == Action::Right ? 0 : kGridWidth - 1, y), kGridWidth - 1};
}
inline Sweep full_column(int x, Action a) {
  return {GridPos(x, a == Action::Up ? 0 : kGridHeight - 1), kGridHeight - 1};
}

} // namespace detail

// Reconstruction of the demonstrations: task demos leave rows/cells unseen,
// and each primitive is swept twice across the grid, placed over the rows and
// columns where the task actually uses that primitive.
inline DemoPlan default_demo_plan(TaskId task) {
  using detail::full_column;
  using detail::full_row;
  DemoPlan plan;
  plan.task = task;
  if (task == TaskId::PushPull) {
    plan.train_starts = {GridPos(14, 0), GridPos(14, 2), GridPos(0, 6), GridPos(0, 8)};
    plan.validation_starts = {GridPos(14, 1), GridPos(0, 7)};
    plan.sweeps[action_index(Action::Up)] = {full_column(3, Action::Up), full_column(11, Action::Up)};
    plan.sweeps[action_index(Action::Down)] = {full_column(3, Action::Down), full_column(11, Action::Down)};
    plan.sweeps[action_index(Action::Left)] = {full_row(0, Action::Left), full_row(2, Action::Left)};
    plan.sweeps[action_index(Action::Right)] = {full_row(6, Action::Right), full_row(8, Action::Right)};
  } else {
    plan.train_starts = {GridPos(0, 0), GridPos(0, 4), GridPos(7, 0)};
    plan.validation_starts = {GridPos(0, 8)};
    plan.sweeps[action_index(Action::Up)] = {full_column(14, Action::Up), full_column(7, Action::Up)};
    plan.sweeps[action_index(Action::Down)] = {full_column(3, Action::Down), full_column(11, Action::Down)};
    plan.sweeps[action_index(Action::Left)] = {full_row(2, Action::Left), full_row(6, Action::Left)};
    plan.sweeps[action_index(Action::Right)] = {full_row(0, Action::Right), full_row(4, Action::Right)};
  }
  return plan;
}

inline Demonstration make_demo(DemoLabel label, DemoRole role, std::vector<GridPos> states,
                               const RenderConfig& cfg, bool arm_visible) {
  std::vector<Frame> frames;
  frames.reserve(states.size());
  for (GridPos p : states)
    frames.push_back(render(p, cfg, arm_visible));
  return Demonstration(label, role, std::move(states), std::move(frames), arm_visible);
}

// Expert demos follow the ground-truth policy; the arm overlay follows the
// render config.
inline std::vector<Demonstration> generate_expert_demos(const TaskSpec& task, const DemoPlan& plan,
                                                        const RenderConfig& cfg) {
  if (plan.task != task.id())
    throw ConfigError("demo plan is for a different task");
  std::vector<Demonstration> out;
  auto emit = [&](const std::vector<GridPos>& starts, DemoRole role) {
    for (GridPos s : starts) {
      if (!task.is_eligible_start(s))
        throw DomainError("plan start " + s.str() + " is not an eligible start for " +
                          std::string(to_string(task.id())));
      out.push_back(make_demo(task.id(), role, task.expert_path(s), cfg, cfg.arm_on_expert_frames));
    }
  };
  emit(plan.train_starts, DemoRole::Train);
  emit(plan.validation_starts, DemoRole::Validation);
  return out;
}

// Robot primitive demos are always armless.
inline std::vector<Demonstration> generate_primitive_demos(Action a, const DemoPlan& plan,
                                                           const RenderConfig& cfg) {
  const auto& sweeps = plan.sweeps_for(a);
  if (sweeps.size() != 2)
    throw ConfigError("plan must hold exactly two sweeps for '" + std::string(to_string(a)) + "'");
  std::vector<Demonstration> out;
  for (const Sweep& s : sweeps) {
    if (s.steps < 1)
      throw ConfigError("sweep with no steps");
    std::vector<GridPos> states{s.start};
    for (int i = 0; i < s.steps; ++i)
      states.push_back(step(states.back(), a));
    out.push_back(make_demo(a, DemoRole::Train, std::move(states), cfg, false));
  }
  return out;
}

struct Dataset {
  RenderConfig render_config;
  std::uint64_t seed = 0;
  std::vector<Demonstration> demos;

  std::vector<Demonstration> select(const DemoLabel& label, std::optional<DemoRole> role = {}) const {
    std::vector<Demonstration> out;
    for (const auto& d : demos)
      if (d.label() == label && (!role || d.role() == *role))
        out.push_back(d);
    return out;
  }

  friend bool operator==(const Dataset&, const Dataset&) = default;
};

// Everything demo-gen writes: the task's expert demos plus both sweeps of
// every primitive.
inline Dataset generate_dataset(const DemoPlan& plan, const RenderConfig& cfg, std::uint64_t seed) {
  validate_plan(plan);
  Dataset ds{cfg, seed, generate_expert_demos(TaskSpec(plan.task), plan, cfg)};
  for (Action a : kActions)
    for (auto& d : generate_primitive_demos(a, plan, cfg))
      ds.demos.push_back(std::move(d));
  return ds;
}

// ---- JSON mapping --------------------------------------------------------

inline nlohmann::json rgb_to_json(Rgb c) { return nlohmann::json::array({c.r, c.g, c.b}); }

inline Rgb rgb_from_json(const nlohmann::json& j) {
  if (!j.is_array() || j.size() != 3)
    throw FormatError("colour must be an [r,g,b] array");
  auto channel = [&](std::size_t i) {
    if (!j[i].is_number_integer() || j[i].get<int>() < 0 || j[i].get<int>() > 255)
      throw FormatError("colour channel outside 0..255");
    return static_cast<std::uint8_t>(j[i].get<int>());
  };
  return {channel(0), channel(1), channel(2)};
}

inline nlohmann::json to_json(const RenderConfig& c) {
  return {{"cell_px", c.cell_px},
          {"background", rgb_to_json(c.background)},
          {"grid_line", rgb_to_json(c.grid_line)},
          {"object", rgb_to_json(c.object)},
          {"object_radius", c.object_radius},
          {"arm_on_expert_frames", c.arm_on_expert_frames},
          {"arm", rgb_to_json(c.arm)},
          {"arm_width", c.arm_width}};
}

// Missing keys keep their defaults; present keys must be well-typed.
inline RenderConfig render_config_from_json(const nlohmann::json& j) {
  if (!j.is_object())
    throw FormatError("render_config must be an object");
  RenderConfig c;
  auto get_int = [&](const char* key, int& dst) {
    if (j.contains(key)) {
      if (!j[key].is_number_integer())
        throw FormatError(std::string("render_config.") + key + " must be an integer");
      dst = j[key].get<int>();
    }
  };
  get_int("cell_px", c.cell_px);
  get_int("object_radius", c.object_radius);
  get_int("arm_width", c.arm_width);
  if (j.contains("background")) c.background = rgb_from_json(j["background"]);
  if (j.contains("grid_line")) c.grid_line = rgb_from_json(j["grid_line"]);
  if (j.contains("object")) c.object = rgb_from_json(j["object"]);
  if (j.contains("arm")) c.arm = rgb_from_json(j["arm"]);
  if (j.contains("arm_on_expert_frames")) {
    if (!j["arm_on_expert_frames"].is_boolean())
      throw FormatError("render_config.arm_on_expert_frames must be a boolean");
    c.arm_on_expert_frames = j["arm_on_expert_frames"].get<bool>();
  }
  try {
    c.validate();
  } catch (const ConfigError& e) {
    throw FormatError(e.what());
  }
  return c;
}

inline nlohmann::json pos_to_json(GridPos p) { return nlohmann::json::array({p.x(), p.y()}); }

inline GridPos pos_from_json(const nlohmann::json& j) {
  if (!j.is_array() || j.size() != 2 || !j[0].is_number_integer() || !j[1].is_number_integer())
    throw FormatError("grid position must be an [x,y] integer pair");
  try {
    return GridPos(j[0].get<int>(), j[1].get<int>());
  } catch (const DomainError& e) {
    throw FormatError(e.what());
  }
}

inline nlohmann::json to_json(const DemoPlan& p) {
  nlohmann::json j;
  j["task"] = std::string(to_string(p.task));
  auto starts = [](const std::vector<GridPos>& v) {
    nlohmann::json a = nlohmann::json::array();
    for (GridPos s : v)
      a.push_back(pos_to_json(s));
    return a;
  };
  j["train_starts"] = starts(p.train_starts);
  j["validation_starts"] = starts(p.validation_starts);
  nlohmann::json sw = nlohmann::json::object();
  for (Action a : kActions) {
    nlohmann::json arr = nlohmann::json::array();
    for (const Sweep& s : p.sweeps_for(a))
      arr.push_back({{"start", pos_to_json(s.start)}, {"steps", s.steps}});
    sw[std::string(to_string(a))] = arr;
  }
  j["sweeps"] = sw;
  return j;
}

inline DemoPlan demo_plan_from_json(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("task") || !j["task"].is_string())
    throw FormatError("demo plan needs a string 'task'");
  DemoPlan p = default_demo_plan(parse_task(j["task"].get<std::string>()));
  auto starts = [&](const char* key, std::vector<GridPos>& dst) {
    if (!j.contains(key))
      return;
    if (!j[key].is_array())
      throw FormatError(std::string("demo plan '") + key + "' must be an array");
    dst.clear();
    for (const auto& e : j[key])
      dst.push_back(pos_from_json(e));
  };
  starts("train_starts", p.train_starts);
  starts("validation_starts", p.validation_starts);
  if (j.contains("sweeps")) {
    const auto& sw = j["sweeps"];
    if (!sw.is_object())
      throw FormatError("demo plan 'sweeps' must be an object");
    for (Action a : kActions) {
      const std::string name(to_string(a));
      if (!sw.contains(name))
        continue;
      auto& dst = p.sweeps[action_index(a)];
      dst.clear();
      for (const auto& e : sw[name]) {
        if (!e.is_object() || !e.contains("start") || !e.contains("steps") || !e["steps"].is_number_integer())
          throw FormatError("sweep entries need 'start' and integer 'steps'");
        dst.push_back({pos_from_json(e["start"]), e["steps"].get<int>()});
      }
    }
  }
  return p;
}

// ---- persistence ------------------------------------------------------------

inline std::string frame_file_name(std::size_t demo_index, std::size_t frame_index) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "demo_%03zu/frame_%04zu.ppm", demo_index, frame_index);
  return buf;
}

// Writes <dir>/manifest.json and one PPM per frame.
inline void save_dataset(const Dataset& ds, const std::filesystem::path& dir) {
  ensure_directory(dir);
  nlohmann::json demos = nlohmann::json::array();
  for (std::size_t d = 0; d < ds.demos.size(); ++d) {
    const auto& demo = ds.demos[d];
    ensure_directory((dir / frame_file_name(d, 0)).parent_path());
    nlohmann::json states = nlohmann::json::array();
    nlohmann::json frames = nlohmann::json::array();
    for (std::size_t i = 0; i < demo.size(); ++i) {
      const auto bytes = encode_ppm(demo.frames()[i]);
      const std::string rel = frame_file_name(d, i);
      write_bytes(dir / rel, bytes);
      states.push_back(pos_to_json(demo.states()[i]));
      frames.push_back({{"path", rel}, {"fnv1a64", to_hex64(fnv1a64(bytes))}});
    }
    demos.push_back({{"label", label_name(demo.label())},
                     {"role", std::string(to_string(demo.role()))},
                     {"arm_visible", demo.arm_visible()},
                     {"states", states},
                     {"frames", frames}});
  }
  const nlohmann::json manifest = {
      {"render_config", to_json(ds.render_config)}, {"seed", ds.seed}, {"demos", demos}};
  write_text(dir / "manifest.json", manifest.dump(2) + "\n");
}

// Loads and verifies a dataset: hashes, dimensions, and that every frame is
// exactly the rendering of its declared state.
inline Dataset load_dataset(const std::filesystem::path& dir) {
  const auto manifest_path = dir / "manifest.json";
  nlohmann::json m;
  try {
    m = nlohmann::json::parse(read_text(manifest_path));
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError("malformed manifest " + manifest_path.string() + ": " + e.what());
  }
  if (!m.is_object() || !m.contains("render_config") || !m.contains("demos") || !m["demos"].is_array())
    throw FormatError("manifest needs 'render_config' and a 'demos' array");
  Dataset ds;
  ds.render_config = render_config_from_json(m["render_config"]);
  if (m.contains("seed")) {
    if (!m["seed"].is_number_unsigned())
      throw FormatError("manifest seed must be a non-negative integer");
    ds.seed = m["seed"].get<std::uint64_t>();
  }
  const RenderConfig& cfg = ds.render_config;
  for (const auto& jd : m["demos"]) {
    for (const char* key : {"label", "role", "arm_visible", "states", "frames"})
      if (!jd.contains(key))
        throw FormatError(std::string("manifest demo missing '") + key + "'");
    if (!jd["label"].is_string() || !jd["role"].is_string() || !jd["arm_visible"].is_boolean() ||
        !jd["states"].is_array() || !jd["frames"].is_array())
      throw FormatError("manifest demo has mistyped fields");
    const DemoLabel label = parse_label(jd["label"].get<std::string>());
    const DemoRole role = parse_role(jd["role"].get<std::string>());
    const bool arm = jd["arm_visible"].get<bool>();
    std::vector<GridPos> states;
    for (const auto& s : jd["states"])
      states.push_back(pos_from_json(s));
    if (jd["frames"].size() != states.size())
      throw FormatError("manifest demo frame count does not match state count");
    std::vector<Frame> frames;
    for (std::size_t i = 0; i < states.size(); ++i) {
      const auto& jf = jd["frames"][i];
      if (!jf.is_object() || !jf.contains("path") || !jf["path"].is_string() || !jf.contains("fnv1a64") ||
          !jf["fnv1a64"].is_string())
        throw FormatError("manifest frame entries need string 'path' and 'fnv1a64'");
      const std::filesystem::path path = dir / jf["path"].get<std::string>();
      if (!std::filesystem::exists(path))
        throw IoError("manifest references missing frame " + path.string());
      const auto bytes = read_bytes(path);
      if (fnv1a64(bytes) != parse_hex64(jf["fnv1a64"].get<std::string>()))
        throw FormatError("checksum mismatch for " + path.string());
      Frame f = decode_ppm(bytes);
      if (f.width() != cfg.width() || f.height() != cfg.height())
        throw FormatError("frame " + path.string() + " has wrong dimensions");
      if (f != render(states[i], cfg, arm))
        throw FormatError("frame " + path.string() + " is not the rendering of state " + states[i].str());
      frames.push_back(std::move(f));
    }
    try {
      ds.demos.emplace_back(label, role, std::move(states), std::move(frames), arm);
    } catch (const DomainError& e) {
      throw FormatError(std::string("manifest demo violates invariants: ") + e.what());
    }
  }
  return ds;
}

} // namespace lfp
