#include "ildet/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace ildet {

std::vector<std::size_t> nms(const std::vector<Box>& boxes,
                             const std::vector<double>& scores,
                             double iou_threshold) {
  if (boxes.size() != scores.size())
    throw std::invalid_argument("nms: boxes/scores size mismatch");
  std::vector<std::size_t> order(boxes.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return a < b;
  });
  std::vector<std::size_t> keep;
  for (std::size_t cand : order) {
    bool suppressed = false;
    for (std::size_t k : keep) {
      if (iou(boxes[cand], boxes[k]) > iou_threshold) {
        suppressed = true;
        break;
      }
    }
    if (!suppressed) keep.push_back(cand);
  }
  return keep;
}

double average_precision(std::vector<Detection> detections,
                         const std::map<int, std::vector<Box>>& gt,
                         double iou_threshold, ApInterpolation interp) {
  std::size_t n_gt = 0;
  for (const auto& [sid, boxes] : gt) n_gt += boxes.size();
  if (n_gt == 0)
    throw std::invalid_argument("average_precision: no ground truth for class");
  if (detections.empty()) return 0.0;

  std::stable_sort(detections.begin(), detections.end(),
                   [](const Detection& a, const Detection& b) {
                     if (a.score != b.score) return a.score > b.score;
                     return a.scene_id < b.scene_id;
                   });

  std::map<int, std::vector<bool>> matched;
  for (const auto& [sid, boxes] : gt) matched[sid].assign(boxes.size(), false);

  std::vector<int> tp(detections.size(), 0);
  for (std::size_t i = 0; i < detections.size(); ++i) {
    const Detection& d = detections[i];
    auto it = gt.find(d.scene_id);
    if (it == gt.end()) continue;
    double best = 0.0;
    int best_j = -1;
    for (std::size_t j = 0; j < it->second.size(); ++j) {
      const double v = iou(d.box, it->second[j]);
      if (v >= iou_threshold && v > best) {
        best = v;
        best_j = static_cast<int>(j);
      }
    }
    if (best_j >= 0 && !matched[d.scene_id][best_j]) {
      matched[d.scene_id][best_j] = true;
      tp[i] = 1;
    }
  }

  std::vector<double> precision(detections.size()), recall(detections.size());
  int cum_tp = 0;
  for (std::size_t i = 0; i < detections.size(); ++i) {
    cum_tp += tp[i];
    precision[i] = static_cast<double>(cum_tp) / static_cast<double>(i + 1);
    recall[i] = static_cast<double>(cum_tp) / static_cast<double>(n_gt);
  }

  if (interp == ApInterpolation::ElevenPoint) {
    double ap = 0.0;
    for (int r = 0; r <= 10; ++r) {
      const double level = r / 10.0;
      double pmax = 0.0;
      for (std::size_t i = 0; i < detections.size(); ++i)
        if (recall[i] >= level) pmax = std::max(pmax, precision[i]);
      ap += pmax / 11.0;
    }
    return ap;
  }
  // All-point: integrate the envelope of the PR curve.
  double ap = 0.0;
  double prev_recall = 0.0;
  for (std::size_t i = 0; i < detections.size(); ++i) {
    double pmax = 0.0;
    for (std::size_t j = i; j < detections.size(); ++j)
      pmax = std::max(pmax, precision[j]);
    ap += (recall[i] - prev_recall) * pmax;
    prev_recall = recall[i];
  }
  return ap;
}

EvalReport evaluate_detector(const DetectorFn& detector,
                             const std::vector<Scene>& test_scenes,
                             const std::vector<int>& classes,
                             const ClassSet* groups, const EvalOptions& opt) {
  EvalReport rep;
  std::map<int, std::vector<Detection>> by_class;
  std::map<int, std::map<int, std::vector<Box>>> gt_by_class;
  for (const Scene& s : test_scenes) {
    for (const auto& g : s.gt) {
      if (std::find(classes.begin(), classes.end(), g.class_id) != classes.end()) {
        gt_by_class[g.class_id][s.id].push_back(g.box);
        ++rep.n_gt;
      }
    }
    for (Detection& d : detector(s)) {
      if (std::find(classes.begin(), classes.end(), d.class_id) == classes.end())
        continue;
      ++rep.n_detections;
      by_class[d.class_id].push_back(std::move(d));
    }
  }

  for (int c : classes) {
    auto git = gt_by_class.find(c);
    if (git == gt_by_class.end() || git->second.empty()) {
      std::fprintf(stderr,
                   "[ildet] warning: class %d has no ground truth in the "
                   "test split; excluded from mAP\n",
                   c);
      rep.skipped_classes.push_back(c);
      continue;
    }
    const auto& dets = by_class[c];
    rep.ap50[c] = average_precision(dets, git->second, 0.5, opt.interp);
    if (opt.coco_map) {
      double acc = 0.0;
      int n_thr = 0;
      for (int t = 0; t < 10; ++t) {
        const double thr = 0.5 + 0.05 * t;
        acc += average_precision(dets, git->second, thr, opt.interp);
        ++n_thr;
      }
      rep.ap_coco[c] = acc / n_thr;
    }
  }

  auto mean_over = [&](const std::map<int, double>& ap,
                       const std::vector<int>& subset) {
    double acc = 0.0;
    int n = 0;
    for (int c : subset) {
      auto it = ap.find(c);
      if (it != ap.end()) {
        acc += it->second;
        ++n;
      }
    }
    return n ? acc / n : 0.0;
  };

  rep.map50 = mean_over(rep.ap50, classes);
  if (opt.coco_map) rep.map_coco = mean_over(rep.ap_coco, classes);
  if (groups) {
    rep.old_map50 = mean_over(rep.ap50, groups->old_classes);
    rep.new_map50 = mean_over(rep.ap50, groups->new_classes);
  }
  return rep;
}

EvalReport evaluate(const DetectorModel& model,
                    const std::vector<Scene>& test_scenes,
                    const EvalOptions& opt) {
  DetectorFn fn = [&](const Scene& s) {
    return predict_detections(model, s, opt.score_threshold, opt.nms_iou);
  };
  return evaluate_detector(fn, test_scenes, model.class_set.all(),
                           &model.class_set, opt);
}

std::string report_csv_string(
    const std::vector<std::pair<std::string, EvalReport>>& rows) {
  std::ostringstream os;
  char buf[64];
  os << "method,class,AP50\n";
  auto emit = [&](const std::string& method, const std::string& cls, double v) {
    std::snprintf(buf, sizeof(buf), "%.6f", v);
    os << method << "," << cls << "," << buf << "\n";
  };
  for (const auto& [method, rep] : rows) {
    for (const auto& [c, ap] : rep.ap50) emit(method, std::to_string(c), ap);
    if (rep.old_map50 >= 0.0) emit(method, "old", rep.old_map50);
    if (rep.new_map50 >= 0.0) emit(method, "new", rep.new_map50);
    emit(method, "all", rep.map50);
  }
  return os.str();
}

void write_report_csv(
    const std::string& path,
    const std::vector<std::pair<std::string, EvalReport>>& rows) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("write_report_csv: cannot open " + path);
  out << report_csv_string(rows);
  if (!out) throw std::runtime_error("write_report_csv: write failed: " + path);
}

}  // namespace ildet
