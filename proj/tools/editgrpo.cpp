// Command-line entry points: flow-matching pretraining, GRPO fine-tuning,
// evaluation, the four-mode ablation, and metric reports on image
// directories.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include <editgrpo/checkpoint.hpp>
#include <editgrpo/config.hpp>
#include <editgrpo/image_io.hpp>
#include <editgrpo/pipeline.hpp>
#include <editgrpo/serialize.hpp>

namespace fs = std::filesystem;
using namespace editgrpo;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 1;
constexpr int kExitNumerical = 2;
constexpr int kExitIo = 3;

struct CommonFlags {
  std::string config_path;
  std::string out_dir;
  int64_t seed = -1;
  std::string mode;
  int iters = -1;
  int group_size = -1;
  double noise_level = -1.0;
  int steps = -1;
  bool oracle_masks = false;
};

void add_common(CLI::App* cmd, CommonFlags& f) {
  cmd->add_option("--config", f.config_path, "JSON config file");
  cmd->add_option("--out", f.out_dir, "output directory");
  cmd->add_option("--seed", f.seed, "master seed");
  cmd->add_option("--mode", f.mode,
                  "decoupled|combined|semantic_only|preservation_only");
  cmd->add_option("--iters", f.iters, "iteration budget");
  cmd->add_option("--group-size", f.group_size, "rollouts per task (G)");
  cmd->add_option("--noise-level", f.noise_level, "SDE noise level a");
  cmd->add_option("--steps", f.steps, "sampler inference steps T");
  cmd->add_flag("--oracle-masks", f.oracle_masks,
                "use ground-truth masks instead of the segmenter");
}

// precedence: CLI flag > config file > built-in default
RunConfig build_config(const CommonFlags& f) {
  RunConfig rc;
  if (!f.config_path.empty()) rc = load_config(f.config_path);
  if (!f.out_dir.empty()) rc.out_dir = f.out_dir;
  if (f.seed >= 0) rc.seed = static_cast<uint64_t>(f.seed);
  if (!f.mode.empty()) {
    auto m = mode_from_name(f.mode);
    if (!m) throw std::invalid_argument("unknown mode: " + f.mode);
    rc.mode = *m;
  }
  if (f.iters >= 0) rc.iterations = f.iters;
  if (f.group_size >= 0) rc.optim.group_size = f.group_size;
  if (f.noise_level >= 0.0) rc.sampler.noise_level = f.noise_level;
  if (f.steps >= 0) rc.sampler.steps = f.steps;
  if (f.oracle_masks) rc.oracle_masks = true;
  return rc;
}

void ensure_out(const RunConfig& rc) {
  std::error_code ec;
  fs::create_directories(rc.out_dir, ec);
  if (ec) throw std::runtime_error("cannot open output dir " + rc.out_dir);
}

void dump_effective_config(const RunConfig& rc, const std::string& name) {
  std::ofstream f(rc.out_dir + "/" + name);
  if (!f) throw std::runtime_error("cannot open config dump");
  f << to_json(rc).dump(1) << "\n";
}

int cmd_pretrain(const CommonFlags& flags, int pretrain_iters) {
  RunConfig rc = build_config(flags);
  if (pretrain_iters >= 0) rc.pretrain_steps = pretrain_iters;
  else if (flags.iters >= 0) rc.pretrain_steps = flags.iters;
  ensure_out(rc);
  dump_effective_config(rc, "pretrain_config.json");

  RngState init_rng(rc.seed, streams::kInit);
  NetParams params = init_params(init_rng, arch_for(rc));
  PretrainResult pr = pretrain_flow_matching(params, rc);

  Checkpoint ck;
  ck.params = pr.params;
  ck.rng_seed = rc.seed;
  ck.training_step = rc.pretrain_steps;
  save_checkpoint(rc.out_dir + "/pretrain_checkpoint.bin", ck);
  write_loss_csv(rc.out_dir + "/pretrain_loss.csv", pr.loss_curve);
  if (!pr.loss_curve.empty())
    std::cout << "pretrain: steps=" << pr.loss_curve.size()
              << " first_loss=" << fmt_g17(pr.loss_curve.front())
              << " final_loss=" << fmt_g17(pr.loss_curve.back()) << "\n";
  else
    std::cout << "pretrain: budget 0, checkpoint equals initialization\n";
  return kExitOk;
}

int cmd_train(const CommonFlags& flags, const std::string& base) {
  RunConfig rc = build_config(flags);
  ensure_out(rc);
  Checkpoint base_ck = load_checkpoint(base);
  dump_effective_config(rc, std::string(mode_name(rc.mode)) + "_config.json");

  FeatureBank bank(rc.seed, rc.env.height, rc.env.width, 3,
                   full_condition_dim(rc.env));
  TrainResult tr = train(base_ck.params, make_train_config(rc), bank);

  Checkpoint ck;
  ck.params = tr.params;
  ck.has_ema = true;
  ck.ema = tr.ema;
  ck.rng_seed = rc.seed;
  ck.training_step = rc.iterations;
  std::string mode = mode_name(rc.mode);
  save_checkpoint(rc.out_dir + "/" + mode + "_checkpoint.bin", ck);
  write_train_log_csv(rc.out_dir + "/" + mode + "_train_log.csv", tr.log);
  if (!tr.log.empty())
    std::cout << "train(" << mode << "): iterations=" << tr.log.size()
              << " final_r_sem=" << fmt_g17(tr.log.back().mean_r_sem)
              << " final_r_pres=" << fmt_g17(tr.log.back().mean_r_pres)
              << "\n";
  return kExitOk;
}

const NetParams& eval_params(const Checkpoint& ck) {
  // the EMA is the evaluated/exported model when present
  return ck.has_ema ? ck.ema : ck.params;
}

int cmd_eval(const CommonFlags& flags, const std::string& checkpoint,
             int n_tasks, int64_t task_seed) {
  RunConfig rc = build_config(flags);
  ensure_out(rc);
  Checkpoint ck = load_checkpoint(checkpoint);
  if (n_tasks > 0) rc.eval_tasks = n_tasks;
  uint64_t tseed = task_seed >= 0 ? static_cast<uint64_t>(task_seed) : rc.seed;

  FeatureBank bank(rc.seed, rc.env.height, rc.env.width, 3,
                   full_condition_dim(rc.env));
  SegmenterMode mode = rc.oracle_masks ? SegmenterMode::kGroundTruth
                                       : SegmenterMode::kSegment;
  EvalResult er = evaluate_policy(eval_params(ck), rc, tseed, rc.eval_tasks,
                                  bank, mode);
  write_metric_report_csv(rc.out_dir + "/eval_report.csv", er.report,
                          er.mean_semantic);
  std::cout << "eval: kept=" << er.report.kept_count << "/" << rc.eval_tasks
            << " UR=" << fmt_g17(er.report.mean_ur)
            << " PSNR=" << fmt_g17(er.report.mean_psnr)
            << " SSIM=" << fmt_g17(er.report.mean_ssim)
            << " perceptual=" << fmt_g17(er.report.mean_perceptual)
            << " semantic=" << fmt_g17(er.mean_semantic)
            << " L1=" << fmt_g17(er.mean_l1_to_target) << "\n";
  return kExitOk;
}

int cmd_ablate(const CommonFlags& flags, const std::string& base,
               int n_tasks) {
  RunConfig rc = build_config(flags);
  ensure_out(rc);
  Checkpoint base_ck = load_checkpoint(base);
  if (n_tasks > 0) rc.eval_tasks = n_tasks;
  FeatureBank bank(rc.seed, rc.env.height, rc.env.width, 3,
                   full_condition_dim(rc.env));
  uint64_t eval_seed = rc.seed + 1;  // held out from the training stream

  std::ofstream table(rc.out_dir + "/ablation.csv");
  if (!table) throw std::runtime_error("cannot open ablation table");
  table << "mode,ur,psnr,ssim,perceptual,semantic\n";
  auto emit = [&](const std::string& name, const EvalResult& er) {
    table << name << "," << fmt_g17(er.report.mean_ur) << ","
          << fmt_g17(er.report.mean_psnr) << ","
          << fmt_g17(er.report.mean_ssim) << ","
          << fmt_g17(er.report.mean_perceptual) << ","
          << fmt_g17(er.mean_semantic) << "\n";
    std::cout << "ablate " << name << ": UR=" << fmt_g17(er.report.mean_ur)
              << " semantic=" << fmt_g17(er.mean_semantic) << "\n";
  };

  emit("base", evaluate_policy(base_ck.params, rc, eval_seed, rc.eval_tasks,
                               bank));
  for (Mode m : {Mode::kSemanticOnly, Mode::kPreservationOnly,
                 Mode::kCombined, Mode::kDecoupled}) {
    RunConfig mrc = rc;
    mrc.mode = m;  // identical seeds across modes: paired comparison
    TrainResult tr = train(base_ck.params, make_train_config(mrc), bank);
    write_train_log_csv(rc.out_dir + "/" + mode_name(m) + "_train_log.csv",
                        tr.log);
    Checkpoint ck;
    ck.params = tr.params;
    ck.has_ema = true;
    ck.ema = tr.ema;
    save_checkpoint(rc.out_dir + "/" + mode_name(m) + "_checkpoint.bin", ck);
    emit(mode_name(m),
         evaluate_policy(tr.ema, mrc, eval_seed, rc.eval_tasks, bank));
  }
  return kExitOk;
}

// Metric report over a directory of sample subdirectories, each holding
// source.ppm, edited.ppm, and either mask.pbm or a meta.json with an
// embedded instruction record.
int cmd_report(const CommonFlags& flags, const std::string& input_dir) {
  RunConfig rc = build_config(flags);
  ensure_out(rc);
  std::vector<EvalSample> samples;
  std::vector<fs::path> dirs;
  for (const auto& entry : fs::directory_iterator(input_dir))
    if (entry.is_directory()) dirs.push_back(entry.path());
  std::sort(dirs.begin(), dirs.end());
  bool any_mask = false;
  for (const auto& dir : dirs) {
    EvalSample s;
    s.source = read_ppm((dir / "source.ppm").string());
    s.edited = read_ppm((dir / "edited.ppm").string());
    s.task_id = static_cast<long>(samples.size());
    if (fs::exists(dir / "meta.json")) {
      std::ifstream mf(dir / "meta.json");
      nlohmann::json meta;
      mf >> meta;
      if (meta.contains("id")) s.task_id = meta["id"].get<long>();
      if (meta.contains("category")) s.category = meta["category"];
      if (meta.contains("instruction")) {
        EnvConfig env = rc.env;
        env.height = s.source.height;
        env.width = s.source.width;
        nlohmann::json jt = {{"id", s.task_id},
                             {"background", rc.env.background},
                             {"shapes", nlohmann::json::array()},
                             {"instruction", meta["instruction"]}};
        s.instruction = task_from_json(jt, env).instruction;
      }
    }
    if (fs::exists(dir / "mask.pbm"))
      s.gt_mask = read_pbm((dir / "mask.pbm").string());
    if (s.gt_mask) any_mask = true;
    else if (!s.instruction)
      throw std::invalid_argument("report: sample " + dir.string() +
                                  " has neither mask.pbm nor instruction");
    samples.push_back(std::move(s));
  }
  if (samples.empty())
    throw std::invalid_argument("report: no sample directories in " +
                                input_dir);
  int h = samples.front().source.height, w = samples.front().source.width;
  FeatureBank bank(rc.seed, h, w, 3, full_condition_dim(rc.env));
  SegmenterMode mode =
      any_mask ? SegmenterMode::kGroundTruth : SegmenterMode::kSegment;
  MetricReport report = evaluate_set(samples, mode, bank);
  write_metric_report_csv(rc.out_dir + "/report.csv", report, 0.0);
  std::cout << "report: kept=" << report.kept_count << "/" << samples.size()
            << " UR=" << fmt_g17(report.mean_ur) << "\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Region-decoupled GRPO for flow-matching image editing"};
  app.require_subcommand(1);

  CommonFlags flags;
  std::string base_ckpt, eval_ckpt, input_dir;
  int n_tasks = -1, pretrain_iters = -1;
  int64_t task_seed = -1;

  auto* pre = app.add_subcommand("pretrain", "flow-matching pretraining");
  add_common(pre, flags);
  pre->add_option("--pretrain-steps", pretrain_iters,
                  "optimizer steps (overrides --iters)");

  auto* trn = app.add_subcommand("train", "GRPO fine-tuning");
  add_common(trn, flags);
  trn->add_option("--base", base_ckpt, "pretrained checkpoint")->required();

  auto* evl = app.add_subcommand("eval", "held-out evaluation");
  add_common(evl, flags);
  evl->add_option("--checkpoint", eval_ckpt, "checkpoint to evaluate")
      ->required();
  evl->add_option("--n", n_tasks, "number of held-out tasks");
  evl->add_option("--task-seed", task_seed, "task-set seed");

  auto* abl = app.add_subcommand("ablate", "four-mode ablation from one base");
  add_common(abl, flags);
  abl->add_option("--base", base_ckpt, "pretrained checkpoint")->required();
  abl->add_option("--n", n_tasks, "number of held-out tasks");

  auto* rep = app.add_subcommand("report", "metric report on image directory");
  add_common(rep, flags);
  rep->add_option("--input-dir", input_dir, "directory of samples")
      ->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (pre->parsed()) return cmd_pretrain(flags, pretrain_iters);
    if (trn->parsed()) return cmd_train(flags, base_ckpt);
    if (evl->parsed()) return cmd_eval(flags, eval_ckpt, n_tasks, task_seed);
    if (abl->parsed()) return cmd_ablate(flags, base_ckpt, n_tasks);
    if (rep->parsed()) return cmd_report(flags, input_dir);
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::domain_error& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::runtime_error& e) {
    std::string msg = e.what();
    std::cerr << "error: " << msg << "\n";
    if (msg.find("non-finite") != std::string::npos) return kExitNumerical;
    return kExitIo;
  }
  return kExitConfig;
}
