// Independent reference implementations used only by tests. Kept naive on
// purpose: triple loops, long-double accumulation, O(n^2) suppression.
#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <vector>

#include "ildet/box.hpp"
#include "ildet/model.hpp"
#include "ildet/tensor.hpp"

namespace oracle {

inline ildet::Tensor ref_matmul_bias(const ildet::Tensor& x,
                                     const ildet::Tensor& W,
                                     const ildet::Tensor& b) {
  const std::size_t n = x.rows(), k = x.shape[1], m = W.shape[1];
  ildet::Tensor out({n, m});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) {
      long double acc = b[j];
      for (std::size_t p = 0; p < k; ++p)
        acc += static_cast<long double>(x(i, p)) * W(p, j);
      out(i, j) = static_cast<double>(acc);
    }
  return out;
}

inline ildet::Tensor ref_softmax(const ildet::Tensor& logits) {
  const std::size_t n = logits.rows(), m = logits.shape[1];
  ildet::Tensor out({n, m});
  for (std::size_t i = 0; i < n; ++i) {
    long double mx = logits(i, 0);
    for (std::size_t j = 1; j < m; ++j) mx = std::max<long double>(mx, logits(i, j));
    long double z = 0.0L;
    for (std::size_t j = 0; j < m; ++j) z += expl(logits(i, j) - mx);
    for (std::size_t j = 0; j < m; ++j)
      out(i, j) = static_cast<double>(expl(logits(i, j) - mx) / z);
  }
  return out;
}

// Quadratic-time greedy NMS: repeatedly pick the best unsuppressed box.
inline std::vector<std::size_t> ref_nms(const std::vector<ildet::Box>& boxes,
                                        const std::vector<double>& scores,
                                        double thr) {
  std::vector<bool> dead(boxes.size(), false);
  std::vector<std::size_t> keep;
  for (;;) {
    std::size_t best = boxes.size();
    for (std::size_t i = 0; i < boxes.size(); ++i) {
      if (dead[i]) continue;
      if (best == boxes.size() || scores[i] > scores[best]) best = i;
    }
    if (best == boxes.size()) break;
    keep.push_back(best);
    dead[best] = true;
    for (std::size_t i = 0; i < boxes.size(); ++i)
      if (!dead[i] && ildet::iou(boxes[best], boxes[i]) > thr) dead[i] = true;
  }
  return keep;
}

// Reference AP: sort detections by descending score, greedily match each to
// the highest-IoU unmatched ground truth of its scene, then integrate the
// precision/recall points.
inline double ref_average_precision(
    std::vector<ildet::Detection> dets,
    const std::map<int, std::vector<ildet::Box>>& gt, double iou_thr,
    bool eleven_point) {
  std::size_t n_gt = 0;
  for (const auto& [sid, boxes] : gt) n_gt += boxes.size();
  std::stable_sort(dets.begin(), dets.end(),
                   [](const ildet::Detection& a, const ildet::Detection& b) {
                     return a.score > b.score;
                   });
  std::map<int, std::vector<bool>> used;
  for (const auto& [sid, boxes] : gt) used[sid].assign(boxes.size(), false);

  std::vector<double> prec, rec;
  std::size_t tp = 0, fp = 0;
  for (const auto& d : dets) {
    // VOC convention: the detection is assigned to the single highest-IoU
    // ground truth; if that one is already claimed, the detection is a FP.
    bool matched = false;
    auto it = gt.find(d.scene_id);
    if (it != gt.end()) {
      double best = 0.0;
      std::size_t best_i = it->second.size();
      for (std::size_t i = 0; i < it->second.size(); ++i) {
        const double v = ildet::iou(d.box, it->second[i]);
        if (v >= iou_thr && v > best) {
          best = v;
          best_i = i;
        }
      }
      if (best_i < it->second.size() && !used[d.scene_id][best_i]) {
        used[d.scene_id][best_i] = true;
        matched = true;
      }
    }
    matched ? ++tp : ++fp;
    prec.push_back(static_cast<double>(tp) / static_cast<double>(tp + fp));
    rec.push_back(n_gt ? static_cast<double>(tp) / static_cast<double>(n_gt)
                       : 0.0);
  }

  if (eleven_point) {
    double ap = 0.0;
    for (int k = 0; k <= 10; ++k) {
      const double r = k / 10.0;
      double p = 0.0;
      for (std::size_t i = 0; i < rec.size(); ++i)
        if (rec[i] >= r) p = std::max(p, prec[i]);
      ap += p / 11.0;
    }
    return ap;
  }
  // all-point: area under the precision envelope
  double ap = 0.0, prev_r = 0.0;
  for (std::size_t i = 0; i < rec.size(); ++i) {
    double env = 0.0;
    for (std::size_t j = i; j < prec.size(); ++j) env = std::max(env, prec[j]);
    ap += (rec[i] - prev_r) * env;
    prev_r = rec[i];
  }
  return ap;
}

// Central-difference gradient of a scalar function w.r.t. one tensor.
inline ildet::Tensor numeric_grad(ildet::Tensor& t,
                                  const std::function<double()>& f,
                                  double h = 1e-5) {
  ildet::Tensor g(t.shape);
  for (std::size_t i = 0; i < t.size(); ++i) {
    const double keep = t.data[i];
    t.data[i] = keep + h;
    const double up = f();
    t.data[i] = keep - h;
    const double down = f();
    t.data[i] = keep;
    g.data[i] = (up - down) / (2.0 * h);
  }
  return g;
}

inline double rel_err(double a, double n) {
  return std::fabs(a - n) / std::max(1e-8, std::fabs(a) + std::fabs(n));
}

}  // namespace oracle
