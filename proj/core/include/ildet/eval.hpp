#pragma once

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "ildet/box.hpp"
#include "ildet/data.hpp"
#include "ildet/model.hpp"

namespace ildet {

/// Greedy descending-score suppression; ties broken by index. Returns the
/// surviving indices in keep order.
std::vector<std::size_t> nms(const std::vector<Box>& boxes,
                             const std::vector<double>& scores,
                             double iou_threshold);

enum class ApInterpolation { ElevenPoint, AllPoint };

/// VOC-style AP for one class: detections sorted by score, greedy matching
/// to unmatched ground truth at the IoU threshold, then interpolated
/// precision/recall. gt maps scene id -> ground-truth boxes of the class.
double average_precision(std::vector<Detection> detections,
                         const std::map<int, std::vector<Box>>& gt,
                         double iou_threshold,
                         ApInterpolation interp = ApInterpolation::ElevenPoint);

struct EvalOptions {
  double score_threshold = 0.5;
  double nms_iou = 0.3;
  ApInterpolation interp = ApInterpolation::ElevenPoint;
  bool coco_map = true;  // also compute mAP averaged over IoU .5:.05:.95
};

struct EvalReport {
  std::map<int, double> ap50;          // class -> AP at IoU 0.5
  std::map<int, double> ap_coco;       // class -> mean AP over .5:.05:.95
  double map50 = 0.0;
  double map_coco = 0.0;
  double old_map50 = -1.0;             // -1 when no grouping was supplied
  double new_map50 = -1.0;
  int n_gt = 0;
  int n_detections = 0;
  std::vector<int> skipped_classes;    // zero ground truth, excluded from mAP
};

using DetectorFn = std::function<std::vector<Detection>(const Scene&)>;

/// Runs the detector over the test scenes and aggregates per-class AP.
/// When groups is non-null, old/new summary rows are filled from it.
EvalReport evaluate_detector(const DetectorFn& detector,
                             const std::vector<Scene>& test_scenes,
                             const std::vector<int>& classes,
                             const ClassSet* groups, const EvalOptions& opt);

EvalReport evaluate(const DetectorModel& model,
                    const std::vector<Scene>& test_scenes,
                    const EvalOptions& opt);

/// One row per (method, class) with columns method,class,AP50 plus
/// old/new/all summary rows.
void write_report_csv(const std::string& path,
                      const std::vector<std::pair<std::string, EvalReport>>& rows);
std::string report_csv_string(
    const std::vector<std::pair<std::string, EvalReport>>& rows);

}  // namespace ildet
