#include "ildet/sampling.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>

namespace ildet {

std::vector<RoiTarget> label_proposals(const Scene& scene,
                                       const std::vector<int>& eligible_classes) {
  std::vector<RoiTarget> out(scene.proposals.size());
  for (std::size_t i = 0; i < scene.proposals.size(); ++i) {
    const Box& p = scene.proposals[i].box;
    double best_iou = 0.0;
    const GroundTruth* best = nullptr;
    for (const auto& g : scene.gt) {
      if (std::find(eligible_classes.begin(), eligible_classes.end(),
                    g.class_id) == eligible_classes.end())
        continue;
      const double v = iou(p, g.box);
      if (v > best_iou) {
        best_iou = v;
        best = &g;
      }
    }
    if (best && best_iou >= 0.5) {
      out[i].label = best->class_id;
      out[i].bbox_target = encode_bbox_target(p, best->box);
    }
  }
  return out;
}

std::vector<double> eligible_max_iou(const Scene& scene,
                                     const std::vector<int>& eligible_classes) {
  std::vector<double> out(scene.proposals.size(), 0.0);
  for (std::size_t i = 0; i < scene.proposals.size(); ++i) {
    for (const auto& g : scene.gt) {
      if (std::find(eligible_classes.begin(), eligible_classes.end(),
                    g.class_id) == eligible_classes.end())
        continue;
      out[i] = std::max(out[i], iou(scene.proposals[i].box, g.box));
    }
  }
  return out;
}

namespace {

/// k uniform picks: without replacement when the pool is large enough,
/// with replacement otherwise.
std::vector<std::size_t> sample_k(const std::vector<std::size_t>& pool, int k,
                                  Rng& rng) {
  std::vector<std::size_t> out;
  if (pool.empty() || k <= 0) return out;
  if (static_cast<int>(pool.size()) >= k) {
    std::vector<std::size_t> shuffled = pool;
    for (int i = 0; i < k; ++i) {
      const std::size_t j = i + rng.index(shuffled.size() - i);
      std::swap(shuffled[i], shuffled[j]);
      out.push_back(shuffled[i]);
    }
  } else {
    for (int i = 0; i < k; ++i) out.push_back(pool[rng.index(pool.size())]);
  }
  return out;
}

}  // namespace

LabeledBatch compose_training_batch(const std::vector<const Scene*>& scenes,
                                    const std::vector<int>& eligible_classes,
                                    Rng rng, int rois_per_image,
                                    int fg_per_image) {
  LabeledBatch batch;
  for (const Scene* scene : scenes) {
    if (scene->proposals.empty())
      throw std::invalid_argument("compose_training_batch: scene " +
                                  std::to_string(scene->id) +
                                  " has no proposals");
    const auto targets = label_proposals(*scene, eligible_classes);
    const auto max_ious = eligible_max_iou(*scene, eligible_classes);

    std::vector<std::size_t> fg, bg;
    for (std::size_t i = 0; i < targets.size(); ++i) {
      if (targets[i].label >= 1)
        fg.push_back(i);
      else if (max_ious[i] >= 0.1 && max_ious[i] < 0.5)
        bg.push_back(i);
    }
    if (bg.empty()) {
      for (std::size_t i = 0; i < targets.size(); ++i)
        if (targets[i].label == 0 && max_ious[i] < 0.5) bg.push_back(i);
    }

    int want_fg = std::min<int>(fg_per_image, rois_per_image);
    if (fg.empty()) want_fg = 0;
    int want_bg = rois_per_image - want_fg;
    if (bg.empty()) {
      want_bg = 0;
      want_fg = rois_per_image;
    }

    LabeledImage img;
    img.scene = scene;
    auto take = [&](const std::vector<std::size_t>& pool, int k) {
      for (std::size_t idx : sample_k(pool, k, rng)) {
        img.proposal_ids.push_back(scene->proposals[idx].id);
        img.targets.push_back(targets[idx]);
      }
    };
    take(fg, want_fg);
    take(bg, want_bg);
    img.fg_count = want_fg;
    img.bg_count = want_bg;
    batch.images.push_back(std::move(img));
  }
  return batch;
}

namespace {

DistillationRecord build_record(const FrozenSnapshot& teacher,
                                const Scene& scene,
                                const std::vector<std::size_t>& picks,
                                bool include_background) {
  const auto& resp = teacher.respond_scene(scene);
  const int n_old = teacher.class_set().num_classes();
  const std::size_t slice = include_background ? n_old + 1 : n_old;
  const std::size_t col0 = include_background ? 0 : 1;

  DistillationRecord rec;
  rec.n_old_classes = n_old;
  rec.includes_background = include_background;
  rec.centered_logits = Tensor({picks.size(), slice});
  rec.deltas = Tensor({picks.size(), static_cast<std::size_t>(4 * n_old)});
  for (std::size_t r = 0; r < picks.size(); ++r) {
    const std::size_t i = picks[r];
    rec.roi_ids.push_back(scene.proposals[i].id);
    double mean = 0.0;
    for (std::size_t j = 0; j < slice; ++j) mean += resp.logits(i, col0 + j);
    mean /= static_cast<double>(slice);
    for (std::size_t j = 0; j < slice; ++j)
      rec.centered_logits(r, j) = resp.logits(i, col0 + j) - mean;
    for (std::size_t j = 0; j < static_cast<std::size_t>(4 * n_old); ++j)
      rec.deltas(r, j) = resp.deltas(i, j);
  }
  return rec;
}

}  // namespace

DistillationRecord select_distillation_rois(const FrozenSnapshot& teacher,
                                            const Scene& scene, Rng rng,
                                            int n_pool, int n_pick,
                                            bool include_background) {
  const std::size_t n = scene.proposals.size();
  if (static_cast<int>(n) < n_pick)
    throw std::invalid_argument(
        "select_distillation_rois: scene " + std::to_string(scene.id) +
        " has fewer than " + std::to_string(n_pick) + " proposals");
  const auto& resp = teacher.respond_scene(scene);
  const Tensor probs = softmax(resp.logits);

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (probs(a, 0) != probs(b, 0)) return probs(a, 0) < probs(b, 0);
    return scene.proposals[a].id < scene.proposals[b].id;
  });
  order.resize(std::min<std::size_t>(order.size(), n_pool));

  std::vector<std::size_t> picks = [&] {
    std::vector<std::size_t> shuffled = order;
    std::vector<std::size_t> out;
    for (int i = 0; i < n_pick; ++i) {
      const std::size_t j = i + rng.index(shuffled.size() - i);
      std::swap(shuffled[i], shuffled[j]);
      out.push_back(shuffled[i]);
    }
    return out;
  }();
  return build_record(teacher, scene, picks, include_background);
}

DistillationRecord select_unbiased_rois(const FrozenSnapshot& teacher,
                                        const Scene& scene, Rng rng, int n_pick,
                                        bool include_background) {
  const std::size_t n = scene.proposals.size();
  if (static_cast<int>(n) < n_pick)
    throw std::invalid_argument(
        "select_unbiased_rois: scene " + std::to_string(scene.id) +
        " has fewer than " + std::to_string(n_pick) + " proposals");
  std::vector<std::size_t> all(n);
  std::iota(all.begin(), all.end(), 0);
  std::vector<std::size_t> picks;
  for (int i = 0; i < n_pick; ++i) {
    const std::size_t j = i + rng.index(all.size() - i);
    std::swap(all[i], all[j]);
    picks.push_back(all[i]);
  }
  return build_record(teacher, scene, picks, include_background);
}

}  // namespace ildet
