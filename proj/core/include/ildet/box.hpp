#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <stdexcept>

namespace ildet {

/// Axis-aligned box in unit-square image coordinates.
struct Box {
  double x_min = 0.0, y_min = 0.0, x_max = 0.0, y_max = 0.0;

  double width() const { return x_max - x_min; }
  double height() const { return y_max - y_min; }
  double area() const { return std::max(0.0, width()) * std::max(0.0, height()); }
  bool valid() const { return x_min < x_max && y_min < y_max; }
  double cx() const { return 0.5 * (x_min + x_max); }
  double cy() const { return 0.5 * (y_min + y_max); }
};

inline double iou(const Box& a, const Box& b) {
  const double ix = std::min(a.x_max, b.x_max) - std::max(a.x_min, b.x_min);
  const double iy = std::min(a.y_max, b.y_max) - std::max(a.y_min, b.y_min);
  if (ix <= 0.0 || iy <= 0.0) return 0.0;
  const double inter = ix * iy;
  return inter / (a.area() + b.area() - inter);
}

/// Fast R-CNN box-delta parameterization on centers and log sizes.
inline std::array<double, 4> encode_bbox_target(const Box& proposal,
                                                const Box& gt) {
  if (!proposal.valid() || !gt.valid())
    throw std::invalid_argument("encode_bbox_target: degenerate box");
  const double pw = proposal.width(), ph = proposal.height();
  return {(gt.cx() - proposal.cx()) / pw, (gt.cy() - proposal.cy()) / ph,
          std::log(gt.width() / pw), std::log(gt.height() / ph)};
}

/// Inverse of encode_bbox_target, clipped to the unit square.
inline Box decode_bbox(const Box& proposal, const std::array<double, 4>& d) {
  if (!proposal.valid())
    throw std::invalid_argument("decode_bbox: degenerate proposal");
  const double pw = proposal.width(), ph = proposal.height();
  const double cx = proposal.cx() + d[0] * pw;
  const double cy = proposal.cy() + d[1] * ph;
  const double w = pw * std::exp(d[2]);
  const double h = ph * std::exp(d[3]);
  Box out{cx - 0.5 * w, cy - 0.5 * h, cx + 0.5 * w, cy + 0.5 * h};
  out.x_min = std::clamp(out.x_min, 0.0, 1.0);
  out.y_min = std::clamp(out.y_min, 0.0, 1.0);
  out.x_max = std::clamp(out.x_max, 0.0, 1.0);
  out.y_max = std::clamp(out.y_max, 0.0, 1.0);
  return out;
}

}  // namespace ildet
