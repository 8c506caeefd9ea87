#pragma once

#include <map>
#include <memory>
#include <optional>
#include <utility>
#include <vector>

#include "ildet/box.hpp"
#include "ildet/data.hpp"
#include "ildet/nn.hpp"
#include "ildet/tensor.hpp"

namespace ildet {

/// Old/new class bookkeeping. Background is reserved id 0 and never
/// appears in either list. Head column order is [background, old..., new...].
struct ClassSet {
  std::vector<int> old_classes;
  std::vector<int> new_classes;

  std::vector<int> all() const {
    std::vector<int> v = old_classes;
    v.insert(v.end(), new_classes.begin(), new_classes.end());
    return v;
  }
  int num_classes() const {
    return static_cast<int>(old_classes.size() + new_classes.size());
  }
  /// Logit column of a class id (background = 0). Throws if unknown.
  int logit_col(int class_id) const;
  /// Position of a class id among the non-background classes (0-based).
  int class_index(int class_id) const;
  bool contains(int class_id) const;
  void validate() const;
};

struct ForwardCache {
  Tensor x;
  std::vector<Tensor> pre;     // pre-activation of each hidden layer
  std::vector<Tensor> act;     // post-ReLU of each hidden layer
  Tensor logits;
  Tensor deltas;
};

/// Shared MLP trunk over per-proposal features feeding two sibling heads:
/// class logits (incl. background) and per-class box deltas.
class DetectorModel {
 public:
  DetectorModel() = default;
  DetectorModel(int input_dim, std::vector<int> hidden_widths, ClassSet cs,
                std::uint64_t init_seed);

  std::pair<Tensor, Tensor> forward_rois(const Tensor& features) const;
  ForwardCache forward_cached(const Tensor& features) const;
  /// Accumulates parameter gradients; requires a cache from forward_cached.
  void backward(const ForwardCache& cache, const Tensor& dlogits,
                const Tensor& ddeltas);

  /// New model with sibling columns for the added classes. Old columns of
  /// both heads and the trunk are bit-identical to this model.
  DetectorModel extend(const std::vector<int>& added, std::uint64_t seed) const;

  int input_dim() const { return input_dim_; }
  const std::vector<int>& hidden_widths() const { return hidden_widths_; }
  int num_logits() const { return class_set.num_classes() + 1; }
  int num_deltas() const { return 4 * class_set.num_classes(); }

  /// Marks a parameter subset untrainable. Columns of the heads belonging
  /// to old classes (and background) can be frozen separately.
  void freeze_trunk();
  void freeze_old_head_columns();

  ParamStore params;
  ClassSet class_set;

 private:
  void rebuild_layer_names();
  int input_dim_ = 0;
  std::vector<int> hidden_widths_;
};

struct Detection {
  int class_id = 0;
  Box box;
  double score = 0.0;
  int scene_id = 0;
};

/// Thresholded, bbox-refined, per-class-NMS detections. Background is
/// never emitted and degenerate boxes are dropped.
std::vector<Detection> predict_detections(const DetectorModel& model,
                                          const Scene& scene,
                                          double score_threshold = 0.5,
                                          double nms_iou = 0.3);

/// Immutable deep copy of a model used as distillation teacher. Optionally
/// caches per-scene responses (raw logits and deltas for every proposal).
class FrozenSnapshot {
 public:
  explicit FrozenSnapshot(const DetectorModel& source, bool enable_cache = true);

  const ClassSet& class_set() const { return model_.class_set; }
  const DetectorModel& model() const { return model_; }

  /// Fresh forward pass (never cached).
  std::pair<Tensor, Tensor> respond(const Tensor& features) const;

  struct SceneResponse {
    Tensor logits;  // [P x (|C_A|+1)]
    Tensor deltas;  // [P x 4|C_A|]
  };
  /// Responses for every proposal of the scene, cached by scene id.
  const SceneResponse& respond_scene(const Scene& scene) const;

  void clear_cache() const { cache_.clear(); }

 private:
  DetectorModel model_;
  bool cache_enabled_;
  mutable std::map<int, SceneResponse> cache_;
  mutable SceneResponse scratch_;
};

/// Stacks proposal features into an [n x d] tensor.
Tensor gather_features(const Scene& scene);
Tensor gather_features(const Scene& scene, const std::vector<int>& proposal_ids);

}  // namespace ildet
