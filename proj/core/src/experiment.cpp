#include "ildet/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <optional>
#include <sstream>

#include "json.hpp"

#include "ildet/checkpoint.hpp"
#include "ildet/sampling.hpp"

namespace ildet {

namespace {

constexpr std::uint64_t kInitStream = 0x494E4954ull;
constexpr std::uint64_t kBatchStream = 0xBA7C4ull;
constexpr std::uint64_t kDistillStream = 0xD157ull;
constexpr std::uint64_t kExtendStream = 0xE47E4Dull;
constexpr std::uint64_t kMultiStream = 0x33174Eull;
constexpr std::uint64_t kFisherStream = 0xF15E4ull;

int log_level() {
  static int level = [] {
    const char* env = std::getenv("ILDET_LOG");
    if (!env) return 1;
    const std::string v = env;
    if (v == "quiet" || v == "0") return 0;
    if (v == "debug" || v == "2") return 2;
    return 1;
  }();
  return level;
}

void log_info(const std::string& msg) {
  if (log_level() >= 1) std::fprintf(stderr, "[ildet] %s\n", msg.c_str());
}
void log_debug(const std::string& msg) {
  if (log_level() >= 2) std::fprintf(stderr, "[ildet] %s\n", msg.c_str());
}

std::uint64_t class_list_tag(const std::vector<int>& classes) {
  std::uint64_t tag = 0x7A6ull;
  for (int c : classes) tag = Rng::derive(tag, static_cast<std::uint64_t>(c));
  return tag;
}

struct TrainPlan {
  int steps = 0;
  double lr0 = 0.001;
  double lr_after = 0.0001;
  double decay_fraction = 0.75;  // 1.0 = constant lr
  bool distill = false;
  bool distill_ce = false;
  bool distill_bbox = true;
  bool distill_unbiased = false;
  double lambda = 1.0;
  const FrozenSnapshot* teacher = nullptr;
  const FisherDiagonal* fisher = nullptr;
  double ewc_strength = 0.0;
  std::uint64_t phase_tag = 0;
};

void train_model(DetectorModel& model, const Dataset& train,
                 const ExperimentConfig& cfg, const TrainPlan& plan,
                 const Dataset* test, RunRecord* rec) {
  if (train.scenes.empty())
    throw std::invalid_argument("train_model: empty training split");

  if (plan.teacher && cfg.teacher_cache) {
    // The frozen network's responses are precomputed over the split once,
    // since every image is visited many times.
    for (const Scene& s : train.scenes) plan.teacher->respond_scene(s);
  }

  Rng batch_rng(Rng::derive(cfg.seed, kBatchStream, plan.phase_tag));
  const std::uint64_t distill_seed =
      Rng::derive(cfg.seed, kDistillStream, plan.phase_tag);

  const std::size_t n_scenes = train.scenes.size();
  std::vector<std::size_t> order(n_scenes);
  std::iota(order.begin(), order.end(), 0);
  std::size_t cursor = n_scenes;  // forces a shuffle on the first step
  int epoch = -1;

  for (int step = 1; step <= plan.steps; ++step) {
    if (cursor + cfg.batch_images > n_scenes) {
      for (std::size_t i = 0; i + 1 < n_scenes; ++i) {
        const std::size_t j = i + batch_rng.index(n_scenes - i);
        std::swap(order[i], order[j]);
      }
      cursor = 0;
      ++epoch;
    }
    std::vector<const Scene*> scenes;
    for (int i = 0; i < cfg.batch_images; ++i)
      scenes.push_back(&train.scenes[order[cursor++]]);

    LabeledBatch batch =
        compose_training_batch(scenes, train.eligible_classes,
                               batch_rng.fork(step), cfg.rois_per_image,
                               cfg.fg_per_image);

    model.params.zero_grads();

    // Fast R-CNN term over the concatenated RoIs of both images.
    std::vector<RoiTarget> targets;
    std::size_t total_rois = 0;
    for (const auto& img : batch.images) total_rois += img.proposal_ids.size();
    const std::size_t d = static_cast<std::size_t>(model.input_dim());
    Tensor feats({total_rois, d});
    std::size_t row = 0;
    for (const auto& img : batch.images) {
      Tensor f = gather_features(*img.scene, img.proposal_ids);
      std::copy(f.data.begin(), f.data.end(), &feats.data[row * d]);
      row += img.proposal_ids.size();
      targets.insert(targets.end(), img.targets.begin(), img.targets.end());
    }
    ForwardCache cache = model.forward_cached(feats);
    LossGrad rcnn = frcnn_loss(cache.logits, cache.deltas, targets, model.class_set);
    model.backward(cache, rcnn.dlogits, rcnn.ddeltas);
    double total = rcnn.value;

    if (plan.distill && plan.lambda > 0.0) {
      const double scale = plan.lambda / static_cast<double>(batch.images.size());
      for (const auto& img : batch.images) {
        // Selection is re-randomized each epoch; teacher responses are cached.
        Rng sel_rng(Rng::derive(distill_seed, static_cast<std::uint64_t>(epoch),
                                static_cast<std::uint64_t>(img.scene->id)));
        DistillationRecord record =
            plan.distill_unbiased
                ? select_unbiased_rois(*plan.teacher, *img.scene, sel_rng,
                                       cfg.distill_pick,
                                       cfg.include_background_logit)
                : select_distillation_rois(*plan.teacher, *img.scene, sel_rng,
                                           cfg.distill_pool, cfg.distill_pick,
                                           cfg.include_background_logit);
        Tensor dfeats = gather_features(*img.scene, record.roi_ids);
        ForwardCache dcache = model.forward_cached(dfeats);
        LossGrad dist =
            plan.distill_ce
                ? crossentropy_distillation_loss(record, dcache.logits,
                                                 dcache.deltas, model.class_set,
                                                 plan.distill_bbox)
                : distillation_loss(record, dcache.logits, dcache.deltas,
                                    model.class_set, plan.distill_bbox);
        for (double& g : dist.dlogits.data) g *= scale;
        for (double& g : dist.ddeltas.data) g *= scale;
        model.backward(dcache, dist.dlogits, dist.ddeltas);
        total += dist.value * scale;
      }
    }

    if (plan.fisher)
      total += ewc_penalty(model, *plan.fisher, plan.ewc_strength);

    if (!std::isfinite(total))
      throw DivergenceError("training diverged: loss is not finite at step " +
                            std::to_string(step));

    OptimizerConfig opt = cfg.optimizer;
    opt.learning_rate =
        (plan.decay_fraction >= 1.0 ||
         step <= static_cast<int>(plan.steps * plan.decay_fraction))
            ? plan.lr0
            : plan.lr_after;
    sgd_nesterov_step(model.params, opt);

    if (rec) rec->loss_curve.emplace_back(step, total);
    if (rec && test && cfg.eval_every > 0 &&
        (step % cfg.eval_every == 0 || step == plan.steps)) {
      rec->checkpoints.emplace_back(
          step, evaluate(model, test->scenes, cfg.eval_options()));
      log_debug("step " + std::to_string(step) + " loss " +
                std::to_string(total) + " mAP50 " +
                std::to_string(rec->checkpoints.back().second.map50));
    }
  }
}

// Maps a phase-1 Fisher estimate onto the extended parameter shapes: the
// copied slices keep their Fisher weight and anchor, the fresh sibling
// columns get zero Fisher (unconstrained).
FisherDiagonal widen_fisher(const FisherDiagonal& fisher,
                            const DetectorModel& extended) {
  FisherDiagonal out;
  for (const auto& [name, e] : extended.params.entries()) {
    auto fit = fisher.fisher.find(name);
    auto ait = fisher.anchor.find(name);
    if (fit == fisher.fisher.end() || ait == fisher.anchor.end())
      throw std::invalid_argument("widen_fisher: missing tensor " + name);
    const Tensor& f = fit->second;
    const Tensor& a = ait->second;
    if (f.same_shape(e.value)) {
      out.fisher[name] = f;
      out.anchor[name] = a;
      continue;
    }
    Tensor wf(e.value.shape);
    Tensor wa = e.value;  // new slices anchored at their init (F=0 anyway)
    if (f.shape.size() == 2 && e.value.shape.size() == 2 &&
        f.shape[0] == e.value.shape[0] && f.shape[1] < e.value.shape[1]) {
      for (std::size_t r = 0; r < f.shape[0]; ++r)
        for (std::size_t c = 0; c < f.shape[1]; ++c) {
          wf(r, c) = f(r, c);
          wa(r, c) = a(r, c);
        }
    } else if (f.shape.size() == 1 && e.value.shape.size() == 1 &&
               f.shape[0] < e.value.shape[0]) {
      for (std::size_t i = 0; i < f.shape[0]; ++i) {
        wf[i] = f[i];
        wa[i] = a[i];
      }
    } else {
      throw std::invalid_argument("widen_fisher: incompatible shape for " +
                                  name);
    }
    out.fisher[name] = std::move(wf);
    out.anchor[name] = std::move(wa);
  }
  return out;
}

}  // namespace

Dataset make_train_split(const ExperimentConfig& cfg,
                         const std::vector<int>& eligible) {
  return build_split(cfg.world_for_run(), cfg.train_scenes, eligible, 0);
}

Dataset make_test_split(const ExperimentConfig& cfg) {
  std::vector<int> all(cfg.world.n_classes);
  std::iota(all.begin(), all.end(), 1);
  return build_split(cfg.world_for_run(), cfg.test_scenes, all, kTestSceneBase);
}

EvalReport evaluate_grouped(const DetectorModel& model,
                            const std::vector<Scene>& test,
                            const ClassSet& groups, const EvalOptions& opt) {
  DetectorFn fn = [&](const Scene& s) {
    return predict_detections(model, s, opt.score_threshold, opt.nms_iou);
  };
  return evaluate_detector(fn, test, groups.all(), &groups, opt);
}

DetectorModel run_phase1(const ExperimentConfig& cfg, RunRecord* rec,
                         FisherDiagonal* fisher_out) {
  const auto t0 = std::chrono::steady_clock::now();
  std::vector<int> classes = cfg.old_classes;
  if (cfg.method == Method::JointBaseline) {
    classes.insert(classes.end(), cfg.new_classes.begin(),
                   cfg.new_classes.end());
  }
  const WorldSpec world = cfg.world_for_run();
  Dataset train = make_train_split(cfg, classes);
  Dataset test = make_test_split(cfg);

  ClassSet cs;
  cs.old_classes = classes;
  DetectorModel model(world.input_dim(), cfg.hidden_widths, cs,
                      Rng::derive(cfg.seed, kInitStream, class_list_tag(classes)));

  TrainPlan plan;
  plan.steps = cfg.phase1_steps;
  plan.lr0 = cfg.optimizer.learning_rate;
  plan.lr_after = cfg.phase2_learning_rate;
  plan.decay_fraction = cfg.lr_decay_fraction;
  plan.phase_tag = class_list_tag(classes);
  log_info("phase 1: training on " + std::to_string(train.scenes.size()) +
           " scenes, " + std::to_string(plan.steps) + " steps");
  train_model(model, train, cfg, plan, &test, rec);

  if (rec) {
    rec->method = method_name(cfg.method);
    rec->config_hash = config_hash(cfg);
    rec->final_report = evaluate(model, test.scenes, cfg.eval_options());
    rec->wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
            .count();
  }
  if (fisher_out)
    *fisher_out = estimate_fisher(model, train, cfg.fisher_batches,
                                  Rng::derive(cfg.seed, kFisherStream));
  return model;
}

DetectorModel run_extension(const ExperimentConfig& cfg,
                            const DetectorModel& base, RunRecord& rec,
                            const FisherDiagonal* fisher) {
  const auto t0 = std::chrono::steady_clock::now();
  if (base.class_set.all() != cfg.old_classes)
    throw std::invalid_argument(
        "run_extension: checkpoint classes do not match the configured old "
        "classes");
  for (int c : cfg.new_classes)
    if (base.class_set.contains(c))
      throw std::invalid_argument("run_extension: class " + std::to_string(c) +
                                  " already present in the base model");
  if (cfg.method == Method::Ewc && !fisher)
    throw std::invalid_argument(
        "run_extension: EWC needs the Fisher estimate saved at the end of "
        "phase 1");

  Dataset train = make_train_split(cfg, cfg.new_classes);
  Dataset test = make_test_split(cfg);

  DetectorModel model = base.extend(
      cfg.new_classes,
      Rng::derive(cfg.seed, kExtendStream, class_list_tag(cfg.new_classes)));

  const bool uses_distill =
      cfg.method == Method::DistillL2 || cfg.method == Method::DistillCE ||
      cfg.method == Method::NoBboxDistill ||
      cfg.method == Method::UnbiasedDistill ||
      cfg.method == Method::FrozenTrunkDistill;

  std::optional<FrozenSnapshot> teacher;
  if (uses_distill) teacher.emplace(base, cfg.teacher_cache);

  if (cfg.method == Method::FrozenTrunk ||
      cfg.method == Method::FrozenTrunkDistill) {
    model.freeze_trunk();
  } else if (cfg.method == Method::FrozenAll) {
    model.freeze_trunk();
    model.freeze_old_head_columns();
  }

  TrainPlan plan;
  plan.steps = cfg.phase2_steps_per_class *
               static_cast<int>(cfg.new_classes.size());
  plan.lr0 = cfg.phase2_learning_rate;
  plan.lr_after = cfg.phase2_learning_rate;
  plan.decay_fraction = 1.0;
  plan.distill = uses_distill;
  plan.distill_ce = cfg.method == Method::DistillCE;
  plan.distill_bbox = cfg.method != Method::NoBboxDistill;
  plan.distill_unbiased = cfg.method == Method::UnbiasedDistill;
  plan.lambda = cfg.lambda;
  plan.teacher = teacher ? &*teacher : nullptr;
  std::optional<FisherDiagonal> widened;
  if (cfg.method == Method::Ewc) {
    widened = widen_fisher(*fisher, model);
    plan.fisher = &*widened;
    plan.ewc_strength = cfg.ewc_strength;
  }
  plan.phase_tag = class_list_tag(model.class_set.all());

  log_info("phase 2 (" + method_name(cfg.method) + "): " +
           std::to_string(train.scenes.size()) + " scenes, " +
           std::to_string(plan.steps) + " steps");
  train_model(model, train, cfg, plan, &test, &rec);

  rec.method = method_name(cfg.method);
  rec.config_hash = config_hash(cfg);
  rec.final_report = evaluate(model, test.scenes, cfg.eval_options());
  rec.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
          .count();
  return model;
}

DetectorModel run_sequential(const ExperimentConfig& cfg,
                             const DetectorModel& base,
                             std::vector<RunRecord>& step_records) {
  DetectorModel current = base;
  for (int c : cfg.new_classes) {
    ExperimentConfig sub = cfg;
    sub.old_classes = current.class_set.all();
    sub.new_classes = {c};
    RunRecord rec;
    // The freshly trained model becomes the frozen copy for the next class.
    current = run_extension(sub, current, rec);
    step_records.push_back(std::move(rec));
  }
  return current;
}

std::vector<Detection> MultiNetworkDetector::detect(const Scene& scene,
                                                    double score_threshold,
                                                    double nms_iou) const {
  std::vector<Detection> out =
      predict_detections(base, scene, score_threshold, nms_iou);
  for (const auto& net : per_class) {
    std::vector<Detection> d =
        predict_detections(net, scene, score_threshold, nms_iou);
    out.insert(out.end(), d.begin(), d.end());
  }
  return out;
}

MultiNetworkDetector run_multi_network(const ExperimentConfig& cfg,
                                       const DetectorModel& base,
                                       RunRecord& rec) {
  const auto t0 = std::chrono::steady_clock::now();
  if (base.class_set.all() != cfg.old_classes)
    throw std::invalid_argument(
        "run_multi_network: checkpoint classes do not match the configured "
        "old classes");
  MultiNetworkDetector multi;
  multi.base = base;
  const WorldSpec world = cfg.world_for_run();
  for (int c : cfg.new_classes) {
    Dataset train = make_train_split(cfg, {c});
    ClassSet cs;
    cs.old_classes = {c};
    DetectorModel net(world.input_dim(), cfg.hidden_widths, cs,
                      Rng::derive(cfg.seed, kMultiStream,
                                  static_cast<std::uint64_t>(c)));
    TrainPlan plan;
    plan.steps = cfg.phase2_steps_per_class;
    plan.lr0 = cfg.optimizer.learning_rate;  // trained from scratch
    plan.lr_after = cfg.phase2_learning_rate;
    plan.decay_fraction = cfg.lr_decay_fraction;
    plan.phase_tag = Rng::derive(kMultiStream, static_cast<std::uint64_t>(c));
    log_info("multi-network: training single-class detector for class " +
             std::to_string(c));
    train_model(net, train, cfg, plan, nullptr, nullptr);
    multi.per_class.push_back(std::move(net));
  }

  Dataset test = make_test_split(cfg);
  ClassSet groups;
  groups.old_classes = cfg.old_classes;
  groups.new_classes = cfg.new_classes;
  const EvalOptions opt = cfg.eval_options();
  DetectorFn fn = [&](const Scene& s) {
    return multi.detect(s, opt.score_threshold, opt.nms_iou);
  };
  rec.method = method_name(Method::MultiNetwork);
  rec.config_hash = config_hash(cfg);
  rec.final_report = evaluate_detector(fn, test.scenes, groups.all(), &groups, opt);
  rec.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
          .count();
  return multi;
}

std::vector<LambdaRow> sweep_lambda(const ExperimentConfig& cfg,
                                    const std::vector<double>& lambdas) {
  if (lambdas.empty())
    throw std::invalid_argument("sweep_lambda: empty lambda list");
  if (cfg.method != Method::DistillL2)
    throw std::invalid_argument("sweep_lambda: method must be distill_l2");

  DetectorModel base = run_phase1(cfg);
  std::vector<LambdaRow> rows;
  for (double lambda : lambdas) {
    ExperimentConfig sub = cfg;
    sub.lambda = lambda;
    RunRecord rec;
    run_extension(sub, base, rec);
    LambdaRow row;
    row.lambda = lambda;
    row.old_map = rec.final_report.old_map50;
    row.new_map = rec.final_report.new_map50;
    row.all_map = rec.final_report.map50;
    rows.push_back(row);
  }

  std::filesystem::create_directories(cfg.out_dir);
  {
    std::ofstream out(cfg.out_dir + "/lambda_sweep.csv", std::ios::binary);
    out << lambda_csv_string(rows);
  }
  write_lambda_svg(cfg.out_dir + "/lambda_sweep.svg", rows);
  return rows;
}

std::string lambda_csv_string(const std::vector<LambdaRow>& rows) {
  std::ostringstream os;
  char buf[96];
  os << "lambda,old_mAP50,new_mAP50,all_mAP50\n";
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof(buf), "%g,%.6f,%.6f,%.6f", r.lambda, r.old_map,
                  r.new_map, r.all_map);
    os << buf << "\n";
  }
  return os.str();
}

void write_lambda_svg(const std::string& path,
                      const std::vector<LambdaRow>& rows) {
  const double W = 560, H = 400, ml = 60, mr = 20, mt = 30, mb = 50;
  const double px = W - ml - mr, py = H - mt - mb;
  double xmin = std::log10(rows.front().lambda),
         xmax = std::log10(rows.back().lambda);
  if (xmax <= xmin) xmax = xmin + 1.0;
  auto sx = [&](double lambda) {
    return ml + (std::log10(lambda) - xmin) / (xmax - xmin) * px;
  };
  auto sy = [&](double v) { return mt + (1.0 - v) * py; };

  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W
     << "\" height=\"" << H << "\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  // axes
  os << "<line x1=\"" << ml << "\" y1=\"" << mt + py << "\" x2=\"" << ml + px
     << "\" y2=\"" << mt + py << "\" stroke=\"black\"/>\n";
  os << "<line x1=\"" << ml << "\" y1=\"" << mt << "\" x2=\"" << ml
     << "\" y2=\"" << mt + py << "\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 10; i += 2) {
    const double v = i / 10.0;
    os << "<text x=\"" << ml - 8 << "\" y=\"" << sy(v) + 4
       << "\" font-size=\"11\" text-anchor=\"end\">" << v << "</text>\n";
    os << "<line x1=\"" << ml - 4 << "\" y1=\"" << sy(v) << "\" x2=\"" << ml
       << "\" y2=\"" << sy(v) << "\" stroke=\"black\"/>\n";
  }
  for (const auto& r : rows) {
    os << "<text x=\"" << sx(r.lambda) << "\" y=\"" << mt + py + 18
       << "\" font-size=\"11\" text-anchor=\"middle\">" << r.lambda
       << "</text>\n";
  }
  os << "<text x=\"" << ml + px / 2 << "\" y=\"" << H - 12
     << "\" font-size=\"12\" text-anchor=\"middle\">lambda (log scale)</text>\n";
  os << "<text x=\"" << ml + px / 2 << "\" y=\"" << 18
     << "\" font-size=\"12\" text-anchor=\"middle\">mAP@0.5 vs distillation "
        "weight</text>\n";

  struct Series {
    const char* color;
    const char* label;
    double LambdaRow::* field;
  };
  const Series series[] = {{"#1f77b4", "old classes", &LambdaRow::old_map},
                           {"#d62728", "new classes", &LambdaRow::new_map},
                           {"#2ca02c", "all classes", &LambdaRow::all_map}};
  int li = 0;
  for (const auto& s : series) {
    os << "<polyline fill=\"none\" stroke=\"" << s.color
       << "\" stroke-width=\"2\" points=\"";
    for (const auto& r : rows) os << sx(r.lambda) << "," << sy(r.*s.field) << " ";
    os << "\"/>\n";
    for (const auto& r : rows)
      os << "<circle cx=\"" << sx(r.lambda) << "\" cy=\"" << sy(r.*s.field)
         << "\" r=\"3\" fill=\"" << s.color << "\"/>\n";
    os << "<text x=\"" << ml + px - 110 << "\" y=\"" << mt + 16 + 16 * li
       << "\" font-size=\"12\" fill=\"" << s.color << "\">" << s.label
       << "</text>\n";
    ++li;
  }
  os << "</svg>\n";

  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("write_lambda_svg: cannot open " + path);
  out << os.str();
}

void emit_report(const std::vector<RunRecord>& records,
                 const std::string& out_dir) {
  if (records.empty())
    throw std::invalid_argument("emit_report: no run records");
  std::filesystem::create_directories(out_dir);

  std::vector<std::pair<std::string, EvalReport>> rows;
  for (const auto& r : records) rows.emplace_back(r.method, r.final_report);
  write_report_csv(out_dir + "/matrix.csv", rows);

  std::ofstream out(out_dir + "/summary.csv", std::ios::binary);
  if (!out) throw std::runtime_error("emit_report: cannot open summary.csv");
  out << "method,old,new,all\n";
  char buf[128];
  for (const auto& r : records) {
    std::snprintf(buf, sizeof(buf), "%s,%.6f,%.6f,%.6f\n", r.method.c_str(),
                  std::max(0.0, r.final_report.old_map50),
                  std::max(0.0, r.final_report.new_map50),
                  r.final_report.map50);
    out << buf;
  }
  if (!out) throw std::runtime_error("emit_report: write failed");
}

void write_run_record(const std::string& path, const RunRecord& rec) {
  nlohmann::json j;
  j["method"] = rec.method;
  char hash[24];
  std::snprintf(hash, sizeof(hash), "%016llx",
                static_cast<unsigned long long>(rec.config_hash));
  j["config_hash"] = hash;
  j["wall_seconds"] = rec.wall_seconds;
  j["checkpoint_path"] = rec.checkpoint_path;
  nlohmann::json curve = nlohmann::json::array();
  for (const auto& [step, loss] : rec.loss_curve) curve.push_back({step, loss});
  j["loss_curve"] = std::move(curve);
  nlohmann::json cps = nlohmann::json::array();
  for (const auto& [step, rep] : rec.checkpoints) {
    cps.push_back({{"step", step},
                   {"mAP50", rep.map50},
                   {"old", rep.old_map50},
                   {"new", rep.new_map50}});
  }
  j["checkpoints"] = std::move(cps);
  nlohmann::json per_class;
  for (const auto& [c, ap] : rec.final_report.ap50)
    per_class[std::to_string(c)] = ap;
  j["final"] = {{"mAP50", rec.final_report.map50},
                {"mAP50_95", rec.final_report.map_coco},
                {"old", rec.final_report.old_map50},
                {"new", rec.final_report.new_map50},
                {"per_class_AP50", std::move(per_class)}};
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("write_run_record: cannot open " + path);
  out << j.dump(2) << "\n";
}

}  // namespace ildet
