#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ildet/data.hpp"
#include "ildet/eval.hpp"
#include "ildet/nn.hpp"

namespace ildet {

enum class Method {
  DistillL2,
  DistillCE,
  NoDistill,
  FrozenTrunk,
  FrozenAll,
  FrozenTrunkDistill,
  NoBboxDistill,
  UnbiasedDistill,
  Ewc,
  MultiNetwork,
  JointBaseline,
};

std::string method_name(Method m);
Method parse_method(const std::string& name);

/// Full experiment description. Parsed from a flat key/value config file
/// with [sections]; every key has a default and unknown keys are errors.
struct ExperimentConfig {
  WorldSpec world;
  std::uint64_t world_seed = 0;  // 0 = follow the experiment seed

  std::vector<int> old_classes{1, 2, 3, 4};
  std::vector<int> new_classes{5, 6, 7, 8};

  Method method = Method::DistillL2;
  double lambda = 1.0;
  std::vector<double> lambda_sweep{0.1, 1.0, 10.0};
  bool include_background_logit = true;
  bool teacher_cache = true;

  OptimizerConfig optimizer;           // phase-1 learning rate lives here
  double phase2_learning_rate = 0.0001;
  double lr_decay_fraction = 0.75;     // phase-1 decay point (0.001 -> 0.0001)

  int phase1_steps = 4000;
  int phase2_steps_per_class = 1000;
  int batch_images = 2;
  int rois_per_image = 64;
  int fg_per_image = 16;
  int distill_pool = 128;
  int distill_pick = 64;
  int eval_every = 250;

  int train_scenes = 600;
  int test_scenes = 200;

  double ewc_strength = 10.0;
  int fisher_batches = 100;

  std::vector<int> hidden_widths{64, 64};

  double eval_score_threshold = 0.05;    // mAP reporting
  double detect_score_threshold = 0.5;   // demo inference
  double eval_nms_iou = 0.3;
  ApInterpolation interp = ApInterpolation::ElevenPoint;

  std::uint64_t seed = 1;
  std::string out_dir = "runs";
  std::string base_checkpoint;  // empty = <out_dir>/model_a.ildet

  std::uint64_t effective_world_seed() const {
    return world_seed ? world_seed : seed;
  }
  WorldSpec world_for_run() const {
    WorldSpec w = world;
    w.seed = effective_world_seed();
    return w;
  }
  EvalOptions eval_options() const {
    EvalOptions o;
    o.score_threshold = eval_score_threshold;
    o.nms_iou = eval_nms_iou;
    o.interp = interp;
    return o;
  }
};

ExperimentConfig parse_config_string(const std::string& text);
ExperimentConfig parse_config_file(const std::string& path);

/// Deterministic flat serialization of every key (defaults resolved).
std::string canonical_config(const ExperimentConfig& cfg);
/// FNV-1a over the canonical serialization.
std::uint64_t config_hash(const ExperimentConfig& cfg);

}  // namespace ildet
