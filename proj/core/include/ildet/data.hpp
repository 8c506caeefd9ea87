#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ildet/box.hpp"
#include "ildet/rng.hpp"
#include "ildet/tensor.hpp"

namespace ildet {

struct GroundTruth {
  int class_id = 0;  // 1-based; 0 is reserved for background
  Box box;
};

struct Proposal {
  int id = 0;
  Box box;
  std::vector<double> feature;
};

/// A synthetic "image": ground-truth objects plus a proposal pool with
/// per-proposal feature vectors standing in for pooled CNN features.
struct Scene {
  int id = 0;
  std::vector<GroundTruth> gt;
  std::vector<Proposal> proposals;

  bool contains_class(int class_id) const {
    for (const auto& g : gt)
      if (g.class_id == class_id) return true;
    return false;
  }
};

/// Parameters of the synthetic detection world. The whole dataset is a
/// pure function of this struct.
struct WorldSpec {
  int n_classes = 8;
  int feature_dim = 32;          // prototype dimension; +4 positional coords
  double noise_sigma = 0.35;
  double prototype_scale = 1.0;  // must keep min pairwise distance >= 4*sigma
  // dense, overlapping scenes: unannotated old objects must co-occur with
  // (and overlap) new ones for fine-tuning to push them toward background
  int min_objects = 3, max_objects = 7;
  double min_obj_size = 0.28, max_obj_size = 0.60;
  int proposals_per_scene = 200;
  int jitters_per_level = 3;
  double proposal_nms_iou = 0.7;
  std::uint64_t seed = 1;
  /// Perturbs the background prototype for phase-2 data (mismatched
  /// background distribution mode).
  bool shifted_background = false;
  double background_shift = 0.5;

  int input_dim() const { return feature_dim + 4; }
};

/// Class prototype vectors mu_1..mu_K, deterministic in spec.seed.
std::vector<std::vector<double>> class_prototypes(const WorldSpec& spec);
/// Background prototype mu_0 (optionally shifted for phase-2 data).
std::vector<double> background_prototype(const WorldSpec& spec, bool shifted);

/// IoU-weighted prototype mixture plus noise, with 4 normalized box
/// coordinates appended. noise_rng supplies the N(0, sigma^2) term.
std::vector<double> featurize_proposal(const WorldSpec& spec, const Box& box,
                                       const std::vector<GroundTruth>& gt,
                                       Rng& noise_rng, bool shifted = false);

/// Deterministic in (spec, scene_id).
Scene generate_scene(const WorldSpec& spec, int scene_id);

struct Dataset {
  WorldSpec spec;
  std::vector<int> eligible_classes;
  std::vector<Scene> scenes;
};

/// Scenes containing at least one eligible object, scanned deterministically
/// from id_start. Annotations of other classes are retained in the scene but
/// hidden by the labeling stage.
Dataset build_split(const WorldSpec& spec, int n_scenes,
                    const std::vector<int>& eligible_classes, int id_start);

void save_dataset(const std::string& path, const Dataset& ds);
Dataset load_dataset(const std::string& path);

}  // namespace ildet
