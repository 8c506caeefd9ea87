// Command-line front end: dataset generation, the two training phases,
// ablations, evaluation and the method comparison matrix.
//
// Exit codes: 0 success, 2 invalid configuration or arguments, 3 training
// diverged.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "ildet/checkpoint.hpp"
#include "ildet/config.hpp"
#include "ildet/experiment.hpp"

namespace fs = std::filesystem;
using namespace ildet;

namespace {

std::vector<int> parse_int_list(const std::string& s) {
  std::vector<int> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(std::stoi(item));
  }
  return out;
}

std::vector<double> parse_double_list(const std::string& s) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(std::stod(item));
  }
  return out;
}

struct CommonArgs {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out_dir;
  std::optional<std::string> method;
  std::optional<double> lambda;
};

ExperimentConfig resolve_config(const CommonArgs& a) {
  ExperimentConfig cfg = a.config_path.empty()
                             ? ExperimentConfig{}
                             : parse_config_file(a.config_path);
  if (a.seed) cfg.seed = *a.seed;
  if (a.out_dir) cfg.out_dir = *a.out_dir;
  if (a.method) cfg.method = parse_method(*a.method);
  if (a.lambda) cfg.lambda = *a.lambda;
  return cfg;
}

void add_common(CLI::App* cmd, CommonArgs& a) {
  cmd->add_option("--config", a.config_path, "Config file (INI-style)")
      ->check(CLI::ExistingFile);
  cmd->add_option("--seed", a.seed, "Experiment seed override");
  cmd->add_option("--out", a.out_dir, "Output directory override");
  cmd->add_option("--method", a.method, "Method override");
  cmd->add_option("--lambda", a.lambda, "Distillation weight override");
}

std::string base_path(const ExperimentConfig& cfg) {
  return cfg.base_checkpoint.empty() ? cfg.out_dir + "/model_a.ildet"
                                     : cfg.base_checkpoint;
}

std::string fisher_path(const ExperimentConfig& cfg) {
  std::string p = base_path(cfg);
  const auto dot = p.rfind(".ildet");
  if (dot != std::string::npos) p.resize(dot);
  return p + ".fisher.ildet";
}

void print_report(const EvalReport& r) {
  std::printf("mAP@0.5        %.4f\n", r.map50);
  std::printf("mAP@[.5:.95]   %.4f\n", r.map_coco);
  if (r.old_map50 >= 0) std::printf("old classes    %.4f\n", r.old_map50);
  if (r.new_map50 >= 0) std::printf("new classes    %.4f\n", r.new_map50);
  for (const auto& [c, ap] : r.ap50)
    std::printf("  class %d AP50 %.4f\n", c, ap);
}

int cmd_gen_data(const CommonArgs& a, const std::string& out_path,
                 const std::string& classes_arg, int n_scenes, bool test_split) {
  ExperimentConfig cfg = resolve_config(a);
  std::vector<int> eligible = classes_arg.empty()
                                  ? [&] {
                                      std::vector<int> all = cfg.old_classes;
                                      all.insert(all.end(),
                                                 cfg.new_classes.begin(),
                                                 cfg.new_classes.end());
                                      return all;
                                    }()
                                  : parse_int_list(classes_arg);
  const int n = n_scenes > 0 ? n_scenes
                             : (test_split ? cfg.test_scenes : cfg.train_scenes);
  Dataset ds = build_split(cfg.world_for_run(), n, eligible,
                           test_split ? kTestSceneBase : 0);
  fs::create_directories(fs::path(out_path).parent_path().empty()
                             ? "."
                             : fs::path(out_path).parent_path().string());
  save_dataset(out_path, ds);
  std::printf("wrote %zu scenes to %s\n", ds.scenes.size(), out_path.c_str());
  return 0;
}

int cmd_train_base(const CommonArgs& a) {
  ExperimentConfig cfg = resolve_config(a);
  fs::create_directories(cfg.out_dir);
  RunRecord rec;
  FisherDiagonal fisher;
  DetectorModel model = run_phase1(cfg, &rec, &fisher);
  rec.checkpoint_path = base_path(cfg);
  save_checkpoint(rec.checkpoint_path, model);
  save_fisher(fisher_path(cfg), fisher);
  write_run_record(cfg.out_dir + "/phase1_record.json", rec);
  std::printf("phase 1 done: %s\n", rec.checkpoint_path.c_str());
  print_report(rec.final_report);
  return 0;
}

int cmd_extend(const CommonArgs& a, bool sequential) {
  ExperimentConfig cfg = resolve_config(a);
  fs::create_directories(cfg.out_dir);
  DetectorModel base = load_checkpoint(base_path(cfg));

  std::optional<FisherDiagonal> fisher;
  if (cfg.method == Method::Ewc) fisher = load_fisher(fisher_path(cfg));

  if (sequential) {
    std::vector<RunRecord> records;
    DetectorModel final_model = run_sequential(cfg, base, records);
    const std::string out = cfg.out_dir + "/model_b_seq.ildet";
    save_checkpoint(out, final_model);
    for (std::size_t i = 0; i < records.size(); ++i)
      write_run_record(cfg.out_dir + "/seq_step" + std::to_string(i + 1) +
                           "_record.json",
                       records[i]);
    emit_report(records, cfg.out_dir);
    std::printf("sequential extension done: %s\n", out.c_str());
    print_report(records.back().final_report);
    return 0;
  }

  RunRecord rec;
  if (cfg.method == Method::MultiNetwork) {
    MultiNetworkDetector multi = run_multi_network(cfg, base, rec);
    for (std::size_t i = 0; i < multi.per_class.size(); ++i)
      save_checkpoint(cfg.out_dir + "/multi_class" +
                          std::to_string(cfg.new_classes[i]) + ".ildet",
                      multi.per_class[i]);
  } else {
    DetectorModel model =
        run_extension(cfg, base, rec, fisher ? &*fisher : nullptr);
    rec.checkpoint_path =
        cfg.out_dir + "/model_b_" + method_name(cfg.method) + ".ildet";
    save_checkpoint(rec.checkpoint_path, model);
  }
  write_run_record(cfg.out_dir + "/phase2_" + method_name(cfg.method) +
                       "_record.json",
                   rec);
  std::printf("extension (%s) done\n", method_name(cfg.method).c_str());
  print_report(rec.final_report);
  return 0;
}

int cmd_sweep_lambda(const CommonArgs& a, const std::string& lambdas_arg) {
  ExperimentConfig cfg = resolve_config(a);
  cfg.method = Method::DistillL2;
  const std::vector<double> lambdas =
      lambdas_arg.empty() ? cfg.lambda_sweep : parse_double_list(lambdas_arg);
  std::vector<LambdaRow> rows = sweep_lambda(cfg, lambdas);
  std::printf("%s", lambda_csv_string(rows).c_str());
  std::printf("wrote %s/lambda_sweep.csv and lambda_sweep.svg\n",
              cfg.out_dir.c_str());
  return 0;
}

int cmd_evaluate(const CommonArgs& a, const std::string& checkpoint,
                 bool demo_threshold) {
  ExperimentConfig cfg = resolve_config(a);
  DetectorModel model = load_checkpoint(checkpoint);
  Dataset test = make_test_split(cfg);
  EvalOptions opt = cfg.eval_options();
  if (demo_threshold) opt.score_threshold = cfg.detect_score_threshold;
  EvalReport rep = evaluate(model, test.scenes, opt);
  print_report(rep);
  return 0;
}

int cmd_compare(const CommonArgs& a, const std::string& methods_arg) {
  ExperimentConfig cfg = resolve_config(a);
  fs::create_directories(cfg.out_dir);

  std::vector<Method> methods;
  if (methods_arg.empty()) {
    methods = {Method::DistillL2,      Method::DistillCE,
               Method::NoDistill,      Method::FrozenTrunk,
               Method::FrozenAll,      Method::FrozenTrunkDistill,
               Method::NoBboxDistill,  Method::UnbiasedDistill,
               Method::Ewc,            Method::MultiNetwork,
               Method::JointBaseline};
  } else {
    std::stringstream ss(methods_arg);
    std::string item;
    while (std::getline(ss, item, ','))
      if (!item.empty()) methods.push_back(parse_method(item));
  }

  // Phase 1 is shared by every extension method.
  ExperimentConfig base_cfg = cfg;
  base_cfg.method = Method::NoDistill;
  FisherDiagonal fisher;
  DetectorModel base = run_phase1(base_cfg, nullptr, &fisher);

  std::vector<RunRecord> records;
  for (Method m : methods) {
    ExperimentConfig sub = cfg;
    sub.method = m;
    RunRecord rec;
    if (m == Method::JointBaseline) {
      run_phase1(sub, &rec);
    } else if (m == Method::MultiNetwork) {
      run_multi_network(sub, base, rec);
    } else {
      run_extension(sub, base, rec, m == Method::Ewc ? &fisher : nullptr);
    }
    std::printf("%-22s old %.4f  new %.4f  all %.4f\n",
                rec.method.c_str(), rec.final_report.old_map50,
                rec.final_report.new_map50, rec.final_report.map50);
    records.push_back(std::move(rec));
  }
  emit_report(records, cfg.out_dir);
  std::printf("wrote %s/matrix.csv and summary.csv\n", cfg.out_dir.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"incremental object-detector learning lab"};
  app.require_subcommand(1);

  CommonArgs args;

  auto* gen = app.add_subcommand("gen-data", "Generate and save a dataset split");
  std::string gen_out = "dataset.ildet", gen_classes;
  int gen_scenes = 0;
  bool gen_test = false;
  add_common(gen, args);
  gen->add_option("-o,--output", gen_out, "Output file");
  gen->add_option("--classes", gen_classes, "Eligible classes, e.g. 1,2,3,4");
  gen->add_option("--scenes", gen_scenes, "Number of scenes");
  gen->add_flag("--test", gen_test, "Use the test scene id range");

  auto* train = app.add_subcommand("train-base", "Phase 1: train the base model");
  add_common(train, args);

  auto* ext = app.add_subcommand("extend", "Phase 2: add the new classes");
  add_common(ext, args);

  auto* seq = app.add_subcommand("extend-seq", "Add new classes one at a time");
  add_common(seq, args);

  auto* sweep = app.add_subcommand("sweep-lambda", "Distillation weight sweep");
  std::string sweep_lambdas;
  add_common(sweep, args);
  sweep->add_option("--lambdas", sweep_lambdas, "Comma list, e.g. 0.1,1,10");

  auto* eval = app.add_subcommand("evaluate", "Evaluate a saved checkpoint");
  std::string eval_ckpt;
  bool eval_demo = false;
  add_common(eval, args);
  eval->add_option("checkpoint", eval_ckpt, "Model file")->required();
  eval->add_flag("--demo-threshold", eval_demo,
                 "Use the high inference score threshold instead of the "
                 "reporting one");

  auto* cmp = app.add_subcommand("compare", "Run the full method matrix");
  std::string cmp_methods;
  add_common(cmp, args);
  cmp->add_option("--methods", cmp_methods, "Comma list (default: all)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (gen->parsed())
      return cmd_gen_data(args, gen_out, gen_classes, gen_scenes, gen_test);
    if (train->parsed()) return cmd_train_base(args);
    if (ext->parsed()) return cmd_extend(args, false);
    if (seq->parsed()) return cmd_extend(args, true);
    if (sweep->parsed()) return cmd_sweep_lambda(args, sweep_lambdas);
    if (eval->parsed()) return cmd_evaluate(args, eval_ckpt, eval_demo);
    if (cmp->parsed()) return cmd_compare(args, cmp_methods);
  } catch (const DivergenceError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
