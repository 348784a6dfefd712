#pragma once

#include <fstream>
#include <string>

#include <json.hpp>

#include "env.hpp"

namespace editgrpo {

// Task records carry scene + instruction; images and masks are re-rendered
// on import so ablation runs can share identical task sets compactly.

inline nlohmann::json shape_to_json(const Shape& s) {
  return {{"kind", static_cast<int>(s.kind)}, {"cy", s.cy}, {"cx", s.cx},
          {"size", s.size},                   {"color", s.color},
          {"id", s.id}};
}

inline Shape shape_from_json(const nlohmann::json& j) {
  Shape s;
  s.kind = static_cast<ShapeKind>(j.at("kind").get<int>());
  s.cy = j.at("cy");
  s.cx = j.at("cx");
  s.size = j.at("size");
  for (int i = 0; i < 3; ++i) s.color[i] = j.at("color").at(i);
  s.id = j.at("id");
  return s;
}

inline nlohmann::json task_to_json(const EditTask& task) {
  nlohmann::json j;
  j["id"] = task.id;
  j["background"] = task.scene.background;
  j["shapes"] = nlohmann::json::array();
  for (const auto& s : task.scene.shapes) j["shapes"].push_back(shape_to_json(s));
  j["instruction"] = {{"verb", verb_name(task.instruction.verb)},
                      {"target_id", task.instruction.target_id},
                      {"target", shape_to_json(task.instruction.target)},
                      {"param", task.instruction.param}};
  return j;
}

inline EditTask task_from_json(const nlohmann::json& j, const EnvConfig& cfg) {
  EditTask task;
  task.id = j.at("id");
  for (int i = 0; i < 3; ++i)
    task.scene.background[i] = j.at("background").at(i);
  for (const auto& js : j.at("shapes"))
    task.scene.shapes.push_back(shape_from_json(js));
  const auto& ji = j.at("instruction");
  std::string verb = ji.at("verb");
  if (verb == "recolor") task.instruction.verb = Verb::kRecolor;
  else if (verb == "remove") task.instruction.verb = Verb::kRemove;
  else if (verb == "add") task.instruction.verb = Verb::kAdd;
  else if (verb == "move") task.instruction.verb = Verb::kMove;
  else throw std::invalid_argument("task_from_json: unknown verb " + verb);
  task.instruction.target_id = ji.at("target_id");
  task.instruction.target = shape_from_json(ji.at("target"));
  for (int i = 0; i < 3; ++i) task.instruction.param[i] = ji.at("param").at(i);

  task.source = render(task.scene, cfg.height, cfg.width);
  Scene edited = apply_edit(task.scene, task.instruction);
  task.target = render(edited, cfg.height, cfg.width);
  Shape after = task.instruction.target;
  if (task.instruction.verb == Verb::kMove) {
    after.cy += static_cast<int>(task.instruction.param[0]);
    after.cx += static_cast<int>(task.instruction.param[1]);
  }
  RegionMask before_m =
      (task.instruction.verb == Verb::kAdd)
          ? RegionMask(cfg.height, cfg.width)
          : footprint(task.instruction.target, cfg.height, cfg.width);
  RegionMask after_m = (task.instruction.verb == Verb::kRemove)
                           ? RegionMask(cfg.height, cfg.width)
                           : footprint(after, cfg.height, cfg.width);
  task.gt_mask = union_mask(before_m, after_m);
  task.condition = condition_embed(task.instruction, cfg);
  return task;
}

inline void save_tasks(const std::string& path,
                       const std::vector<EditTask>& tasks, uint64_t seed) {
  nlohmann::json j;
  j["seed"] = seed;
  j["tasks"] = nlohmann::json::array();
  for (const auto& t : tasks) j["tasks"].push_back(task_to_json(t));
  std::ofstream f(path);
  if (!f) throw std::runtime_error("save_tasks: cannot open " + path);
  f << j.dump(1) << "\n";
}

inline std::vector<EditTask> load_tasks(const std::string& path,
                                        const EnvConfig& cfg) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("load_tasks: cannot open " + path);
  nlohmann::json j;
  f >> j;
  std::vector<EditTask> tasks;
  for (const auto& jt : j.at("tasks")) tasks.push_back(task_from_json(jt, cfg));
  return tasks;
}

}  // namespace editgrpo
