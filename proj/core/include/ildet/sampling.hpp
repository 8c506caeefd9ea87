#pragma once

#include <vector>

#include "ildet/data.hpp"
#include "ildet/losses.hpp"
#include "ildet/model.hpp"
#include "ildet/rng.hpp"

namespace ildet {

/// Fast R-CNN proposal labels against the eligible classes only:
/// max-IoU >= 0.5 with an eligible ground-truth box gives its class and
/// encoded bbox target, anything else is background. Ground truth of
/// non-eligible classes is invisible.
std::vector<RoiTarget> label_proposals(const Scene& scene,
                                       const std::vector<int>& eligible_classes);

/// Per-proposal max IoU over eligible ground truth (used for the
/// background sampling window).
std::vector<double> eligible_max_iou(const Scene& scene,
                                     const std::vector<int>& eligible_classes);

struct LabeledImage {
  const Scene* scene = nullptr;
  std::vector<int> proposal_ids;
  std::vector<RoiTarget> targets;
  int fg_count = 0;
  int bg_count = 0;
};

struct LabeledBatch {
  std::vector<LabeledImage> images;
};

/// 64 RoIs per image: 16 foreground (IoU >= 0.5, resampled with replacement
/// when fewer exist) and 48 background drawn from the [0.1, 0.5) max-IoU
/// window, widened to [0, 0.5) when that window is empty.
LabeledBatch compose_training_batch(const std::vector<const Scene*>& scenes,
                                    const std::vector<int>& eligible_classes,
                                    Rng rng, int rois_per_image = 64,
                                    int fg_per_image = 16);

/// Biased selection: rank proposals by the teacher's softmax background
/// probability (ascending, ties by proposal id), keep the first n_pool,
/// sample n_pick of them uniformly. Teacher centered logits and old-class
/// deltas are recorded for the selection.
DistillationRecord select_distillation_rois(const FrozenSnapshot& teacher,
                                            const Scene& scene, Rng rng,
                                            int n_pool = 128, int n_pick = 64,
                                            bool include_background = true);

/// Unbiased ablation: uniform sample without replacement over the whole
/// proposal set; teacher responses recorded identically.
DistillationRecord select_unbiased_rois(const FrozenSnapshot& teacher,
                                        const Scene& scene, Rng rng,
                                        int n_pick = 64,
                                        bool include_background = true);

}  // namespace ildet
