#pragma once

#include <array>
#include <map>
#include <string>
#include <vector>

#include "ildet/data.hpp"
#include "ildet/model.hpp"
#include "ildet/tensor.hpp"

namespace ildet {

/// Per-RoI training target. label 0 is background; bbox_target is only
/// meaningful for foreground RoIs.
struct RoiTarget {
  int label = 0;
  std::array<double, 4> bbox_target{0.0, 0.0, 0.0, 0.0};
};

/// Teacher responses for the RoIs selected for distillation. Logit rows
/// are mean-centered over the class dimension (they sum to ~0).
struct DistillationRecord {
  std::vector<int> roi_ids;
  Tensor centered_logits;  // [N x (|C_A|+1)] (or [N x |C_A|] w/o background)
  Tensor deltas;           // [N x 4|C_A|]
  int n_old_classes = 0;
  bool includes_background = true;
};

/// Scalar loss plus gradients with respect to the network outputs.
struct LossGrad {
  double value = 0.0;
  Tensor dlogits;
  Tensor ddeltas;
};

double smooth_l1(double x);
double smooth_l1_grad(double x);

/// Subtracts the per-row mean.
Tensor center_rows(const Tensor& t);

/// -log p_{k*} + [k* >= 1] * smoothL1(t - t*) for one RoI; the localization
/// term only touches the 4 deltas of class k*. Used directly by tests; the
/// batch form below is what training consumes.
double frcnn_loss_single(const Tensor& probs_row, const RoiTarget& target,
                         const Tensor& deltas_row, const ClassSet& cs);

/// Mean Fast R-CNN loss over the batch with gradients w.r.t. raw logits
/// and deltas.
LossGrad frcnn_loss(const Tensor& logits, const Tensor& deltas,
                    const std::vector<RoiTarget>& targets, const ClassSet& cs);

/// L2 distillation loss: (1/(N|C_A|)) sum[(ybar_A - ybar_B)^2 + (t_A - t_B)^2]
/// over the student's old head. Student logits are centered the same way as
/// the teacher's; new-class outputs receive zero gradient.
LossGrad distillation_loss(const DistillationRecord& record,
                           const Tensor& student_logits,
                           const Tensor& student_deltas,
                           const ClassSet& student_cs,
                           bool include_bbox_term = true);

/// Cross-entropy variant of the logit term (softmax targets from the
/// teacher, no temperature), averaged over RoIs. The bbox term stays L2.
LossGrad crossentropy_distillation_loss(const DistillationRecord& record,
                                        const Tensor& student_logits,
                                        const Tensor& student_deltas,
                                        const ClassSet& student_cs,
                                        bool include_bbox_term = true);

/// L = L_rcnn + lambda * L_dist; gradients are summed elementwise.
LossGrad joint_loss(const LossGrad& rcnn, const LossGrad& dist, double lambda);

/// Diagonal Fisher estimate with the anchor parameters it was taken at.
struct FisherDiagonal {
  std::map<std::string, Tensor> fisher;
  std::map<std::string, Tensor> anchor;
};

/// F_i = mean over sampled RoI batches of (dL_rcnn/dtheta_i)^2, with the
/// current parameters snapshotted as the anchor.
FisherDiagonal estimate_fisher(DetectorModel& model, const Dataset& dataset,
                               int n_batches, std::uint64_t seed);

/// (strength/2) * sum_i F_i (theta_i - theta*_i)^2, with gradients
/// accumulated into the model's parameter store.
double ewc_penalty(DetectorModel& model, const FisherDiagonal& fisher,
                   double strength);

}  // namespace ildet
