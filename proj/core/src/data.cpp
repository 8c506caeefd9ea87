#include "ildet/data.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "ildet/checkpoint.hpp"

namespace ildet {

namespace {

constexpr std::uint64_t kProtoStream = 0x50524F544Full;   // prototypes
constexpr std::uint64_t kSceneStream = 0x5343454E45ull;   // scene layout
constexpr std::uint64_t kNoiseStream = 0x4E4F495345ull;   // feature noise
constexpr std::uint64_t kShiftStream = 0x5348494654ull;   // bg shift dir

double vec_dist(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return std::sqrt(s);
}

}  // namespace

std::vector<std::vector<double>> class_prototypes(const WorldSpec& spec) {
  const double min_dist = 4.0 * spec.noise_sigma;
  for (int attempt = 0; attempt < 200; ++attempt) {
    Rng rng(Rng::derive(spec.seed, kProtoStream, attempt));
    std::vector<std::vector<double>> protos(spec.n_classes + 1);
    for (auto& p : protos) {
      p.resize(spec.feature_dim);
      for (double& v : p) v = spec.prototype_scale * rng.normal();
    }
    bool ok = true;
    for (std::size_t i = 0; i < protos.size() && ok; ++i)
      for (std::size_t j = i + 1; j < protos.size() && ok; ++j)
        if (vec_dist(protos[i], protos[j]) < min_dist) ok = false;
    if (ok) {
      // Index 0 is the background prototype; strip it here.
      std::vector<std::vector<double>> cls(protos.begin() + 1, protos.end());
      return cls;
    }
  }
  throw std::runtime_error(
      "class_prototypes: could not satisfy the separation constraint; "
      "reduce noise_sigma or raise prototype_scale");
}

std::vector<double> background_prototype(const WorldSpec& spec, bool shifted) {
  // Same draw order as class_prototypes: slot 0 of the accepted attempt.
  const double min_dist = 4.0 * spec.noise_sigma;
  for (int attempt = 0; attempt < 200; ++attempt) {
    Rng rng(Rng::derive(spec.seed, kProtoStream, attempt));
    std::vector<std::vector<double>> protos(spec.n_classes + 1);
    for (auto& p : protos) {
      p.resize(spec.feature_dim);
      for (double& v : p) v = spec.prototype_scale * rng.normal();
    }
    bool ok = true;
    for (std::size_t i = 0; i < protos.size() && ok; ++i)
      for (std::size_t j = i + 1; j < protos.size() && ok; ++j)
        if (vec_dist(protos[i], protos[j]) < min_dist) ok = false;
    if (!ok) continue;
    std::vector<double> mu0 = protos[0];
    if (shifted) {
      Rng srng(Rng::derive(spec.seed, kShiftStream));
      for (double& v : mu0) v += spec.background_shift * srng.normal();
    }
    return mu0;
  }
  throw std::runtime_error("background_prototype: separation constraint failed");
}

std::vector<double> featurize_proposal(const WorldSpec& spec, const Box& box,
                                       const std::vector<GroundTruth>& gt,
                                       Rng& noise_rng, bool shifted) {
  struct ProtoKey {
    std::uint64_t seed;
    int n_classes, feature_dim;
    double sigma, scale, bg_shift;
    bool shifted;
    bool operator==(const ProtoKey&) const = default;
  };
  const ProtoKey key{spec.seed, spec.n_classes, spec.feature_dim,
                     spec.noise_sigma, spec.prototype_scale,
                     spec.background_shift, shifted};
  static thread_local ProtoKey cached_key{};
  static thread_local bool cached = false;
  static thread_local std::vector<std::vector<double>> cls_protos;
  static thread_local std::vector<double> bg_proto;
  if (!cached || !(cached_key == key)) {
    cls_protos = class_prototypes(spec);
    bg_proto = background_prototype(spec, shifted);
    cached_key = key;
    cached = true;
  }

  std::vector<double> f(spec.input_dim(), 0.0);
  double max_iou = 0.0;
  for (const auto& g : gt) {
    const double w = iou(box, g.box);
    max_iou = std::max(max_iou, w);
    if (w == 0.0) continue;
    const auto& mu = cls_protos[g.class_id - 1];
    for (int i = 0; i < spec.feature_dim; ++i) f[i] += w * mu[i];
  }
  for (int i = 0; i < spec.feature_dim; ++i)
    f[i] += (1.0 - max_iou) * bg_proto[i] + spec.noise_sigma * noise_rng.normal();
  f[spec.feature_dim + 0] = box.x_min;
  f[spec.feature_dim + 1] = box.y_min;
  f[spec.feature_dim + 2] = box.x_max;
  f[spec.feature_dim + 3] = box.y_max;
  return f;
}

namespace {

Box clip_unit(Box b) {
  b.x_min = std::clamp(b.x_min, 0.0, 1.0);
  b.y_min = std::clamp(b.y_min, 0.0, 1.0);
  b.x_max = std::clamp(b.x_max, 0.0, 1.0);
  b.y_max = std::clamp(b.y_max, 0.0, 1.0);
  return b;
}

/// A box jittered around gt so that IoU(gt, out) is near target.
Box jitter_box(const Box& gt, double target_iou, Rng& rng) {
  const double w = gt.width(), h = gt.height();
  for (int tries = 0; tries < 80; ++tries) {
    const double shift = (1.0 - target_iou) / (1.0 + target_iou);
    Box c = gt;
    const double dx = rng.uniform(-1.0, 1.0) * shift * w * 1.2;
    const double dy = rng.uniform(-1.0, 1.0) * shift * h * 1.2;
    const double sw = std::exp(rng.uniform(-1.0, 1.0) * 0.6 * (1.0 - target_iou));
    const double sh = std::exp(rng.uniform(-1.0, 1.0) * 0.6 * (1.0 - target_iou));
    const double cx = gt.cx() + dx, cy = gt.cy() + dy;
    c.x_min = cx - 0.5 * w * sw;
    c.x_max = cx + 0.5 * w * sw;
    c.y_min = cy - 0.5 * h * sh;
    c.y_max = cy + 0.5 * h * sh;
    c = clip_unit(c);
    if (!c.valid()) continue;
    const double v = iou(gt, c);
    if (v >= target_iou - 0.07 && v <= target_iou + 0.07) return c;
  }
  // Fallback: pure translation gives the target IoU exactly (up to clipping).
  const double dx = w * (1.0 - target_iou) / (1.0 + target_iou);
  Box c = gt;
  c.x_min += dx;
  c.x_max += dx;
  return clip_unit(c);
}

bool passes_pool_nms(const Box& cand, const std::vector<Box>& kept, double thr) {
  for (const auto& k : kept)
    if (iou(cand, k) >= thr) return false;
  return true;
}

}  // namespace

Scene generate_scene(const WorldSpec& spec, int scene_id) {
  Rng rng(Rng::derive(spec.seed, kSceneStream, static_cast<std::uint64_t>(scene_id)));
  Scene scene;
  scene.id = scene_id;

  const int n_obj =
      spec.min_objects + static_cast<int>(rng.index(spec.max_objects - spec.min_objects + 1));
  for (int o = 0; o < n_obj; ++o) {
    GroundTruth g;
    g.class_id = 1 + static_cast<int>(rng.index(spec.n_classes));
    const double w = rng.uniform(spec.min_obj_size, spec.max_obj_size);
    const double h = rng.uniform(spec.min_obj_size, spec.max_obj_size);
    g.box.x_min = rng.uniform(0.0, 1.0 - w);
    g.box.y_min = rng.uniform(0.0, 1.0 - h);
    g.box.x_max = g.box.x_min + w;
    g.box.y_max = g.box.y_min + h;
    scene.gt.push_back(g);
  }

  // Jittered proposals around each object first (several IoU levels), then
  // uniform background boxes, all filtered so no kept pair overlaps >= 0.7.
  static const double kLevels[] = {0.85, 0.70, 0.55, 0.35, 0.20};
  std::vector<Box> kept;
  for (const auto& g : scene.gt) {
    for (double level : kLevels) {
      for (int j = 0; j < spec.jitters_per_level; ++j) {
        if (static_cast<int>(kept.size()) >= spec.proposals_per_scene) break;
        Box c = jitter_box(g.box, level, rng);
        if (c.valid() && passes_pool_nms(c, kept, spec.proposal_nms_iou))
          kept.push_back(c);
      }
    }
  }
  int attempts = 0;
  while (static_cast<int>(kept.size()) < spec.proposals_per_scene &&
         attempts < spec.proposals_per_scene * 50) {
    ++attempts;
    const double w = rng.uniform(0.05, 0.5);
    const double h = rng.uniform(0.05, 0.5);
    Box c;
    c.x_min = rng.uniform(0.0, 1.0 - w);
    c.y_min = rng.uniform(0.0, 1.0 - h);
    c.x_max = c.x_min + w;
    c.y_max = c.y_min + h;
    if (passes_pool_nms(c, kept, spec.proposal_nms_iou)) kept.push_back(c);
  }

  Rng noise_rng(Rng::derive(spec.seed, kNoiseStream, static_cast<std::uint64_t>(scene_id)));
  scene.proposals.reserve(kept.size());
  for (std::size_t i = 0; i < kept.size(); ++i) {
    Proposal p;
    p.id = static_cast<int>(i);
    p.box = kept[i];
    p.feature = featurize_proposal(spec, p.box, scene.gt, noise_rng,
                                   spec.shifted_background);
    scene.proposals.push_back(std::move(p));
  }
  return scene;
}

Dataset build_split(const WorldSpec& spec, int n_scenes,
                    const std::vector<int>& eligible_classes, int id_start) {
  if (eligible_classes.empty())
    throw std::invalid_argument("build_split: eligible_classes is empty");
  for (int c : eligible_classes)
    if (c < 1 || c > spec.n_classes)
      throw std::invalid_argument("build_split: class " + std::to_string(c) +
                                  " not in world (1.." +
                                  std::to_string(spec.n_classes) + ")");
  Dataset ds;
  ds.spec = spec;
  ds.eligible_classes = eligible_classes;
  int id = id_start;
  const int scan_limit = id_start + n_scenes * 100;
  while (static_cast<int>(ds.scenes.size()) < n_scenes && id < scan_limit) {
    Scene s = generate_scene(spec, id);
    ++id;
    bool has_eligible = false;
    for (int c : eligible_classes)
      if (s.contains_class(c)) has_eligible = true;
    if (has_eligible) ds.scenes.push_back(std::move(s));
  }
  if (static_cast<int>(ds.scenes.size()) < n_scenes)
    throw std::runtime_error("build_split: scan limit reached before filling split");
  return ds;
}

}  // namespace ildet
