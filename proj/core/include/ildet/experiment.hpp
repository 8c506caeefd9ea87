#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "ildet/config.hpp"
#include "ildet/data.hpp"
#include "ildet/eval.hpp"
#include "ildet/losses.hpp"
#include "ildet/model.hpp"

namespace ildet {

/// Training aborted because the loss became non-finite.
struct DivergenceError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct RunRecord {
  std::string method;
  std::uint64_t config_hash = 0;
  std::vector<std::pair<int, EvalReport>> checkpoints;  // (step, report)
  std::vector<std::pair<int, double>> loss_curve;
  double wall_seconds = 0.0;
  std::string checkpoint_path;
  EvalReport final_report;
};

/// Training-universe scenes start at id 0; test scenes live in a disjoint
/// id range so caches and reports can never collide.
constexpr int kTestSceneBase = 1'000'000;

Dataset make_train_split(const ExperimentConfig& cfg,
                         const std::vector<int>& eligible);
Dataset make_test_split(const ExperimentConfig& cfg);

/// Evaluation with an explicit old/new grouping (the model may carry a
/// different partition, e.g. the joint baseline).
EvalReport evaluate_grouped(const DetectorModel& model,
                            const std::vector<Scene>& test,
                            const ClassSet& groups, const EvalOptions& opt);

/// Phase 1: train from scratch on the split of images containing the base
/// classes (all classes for the joint baseline). Optionally estimates the
/// Fisher diagonal at the end for a later EWC run.
DetectorModel run_phase1(const ExperimentConfig& cfg, RunRecord* rec = nullptr,
                         FisherDiagonal* fisher_out = nullptr);

/// Phase 2: freeze the teacher, extend the model by the new classes and
/// train on the new-class split with the configured method.
DetectorModel run_extension(const ExperimentConfig& cfg,
                            const DetectorModel& base, RunRecord& rec,
                            const FisherDiagonal* fisher = nullptr);

/// Adds the new classes one at a time, re-freezing the latest model before
/// each step. Returns the final model; per-step records (with growing class
/// sets) are appended to step_records.
DetectorModel run_sequential(const ExperimentConfig& cfg,
                             const DetectorModel& base,
                             std::vector<RunRecord>& step_records);

/// One independent single-class detector per new class; detections are
/// combined with the untouched base model at inference.
struct MultiNetworkDetector {
  DetectorModel base;
  std::vector<DetectorModel> per_class;
  std::vector<Detection> detect(const Scene& scene, double score_threshold,
                                double nms_iou) const;
};
MultiNetworkDetector run_multi_network(const ExperimentConfig& cfg,
                                       const DetectorModel& base,
                                       RunRecord& rec);

struct LambdaRow {
  double lambda = 0.0;
  double old_map = 0.0;
  double new_map = 0.0;
  double all_map = 0.0;
};

/// One extension per lambda on top of a shared phase-1 model. Writes
/// lambda_sweep.csv and lambda_sweep.svg under cfg.out_dir.
std::vector<LambdaRow> sweep_lambda(const ExperimentConfig& cfg,
                                    const std::vector<double>& lambdas);

std::string lambda_csv_string(const std::vector<LambdaRow>& rows);
void write_lambda_svg(const std::string& path,
                      const std::vector<LambdaRow>& rows);

/// Method-by-class AP matrix (matrix.csv) and old/new/all summary
/// (summary.csv) under out_dir.
void emit_report(const std::vector<RunRecord>& records,
                 const std::string& out_dir);

void write_run_record(const std::string& path, const RunRecord& rec);

}  // namespace ildet
