#include "ildet/losses.hpp"

#include <cmath>
#include <stdexcept>

#include "ildet/sampling.hpp"

namespace ildet {

double smooth_l1(double x) {
  const double a = std::abs(x);
  return a < 1.0 ? 0.5 * x * x : a - 0.5;
}

double smooth_l1_grad(double x) {
  if (x > 1.0) return 1.0;
  if (x < -1.0) return -1.0;
  return x;
}

Tensor center_rows(const Tensor& t) {
  Tensor out = t;
  const std::size_t n = t.rows(), c = t.shape.size() >= 2 ? t.shape[1] : 0;
  for (std::size_t i = 0; i < n; ++i) {
    double mean = 0.0;
    for (std::size_t j = 0; j < c; ++j) mean += out(i, j);
    mean /= static_cast<double>(c);
    for (std::size_t j = 0; j < c; ++j) out(i, j) -= mean;
  }
  return out;
}

double frcnn_loss_single(const Tensor& probs_row, const RoiTarget& target,
                         const Tensor& deltas_row, const ClassSet& cs) {
  if (target.label != 0 && !cs.contains(target.label))
    throw std::invalid_argument("frcnn_loss: label " +
                                std::to_string(target.label) +
                                " is not a class of the model");
  const int col = cs.logit_col(target.label);
  double loss = -std::log(std::max(probs_row[col], 1e-300));
  if (target.label >= 1) {
    const std::size_t ci = static_cast<std::size_t>(cs.class_index(target.label));
    for (std::size_t k = 0; k < 4; ++k)
      loss += smooth_l1(deltas_row[4 * ci + k] - target.bbox_target[k]);
  }
  return loss;
}

LossGrad frcnn_loss(const Tensor& logits, const Tensor& deltas,
                    const std::vector<RoiTarget>& targets, const ClassSet& cs) {
  const std::size_t n = logits.rows();
  if (targets.size() != n)
    throw std::invalid_argument("frcnn_loss: target count != RoI count");
  LossGrad lg;
  lg.dlogits = Tensor(logits.shape);
  lg.ddeltas = Tensor(deltas.shape);
  if (n == 0) return lg;

  const Tensor probs = softmax(logits);
  const std::size_t nc = logits.shape[1];
  const double inv_n = 1.0 / static_cast<double>(n);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const RoiTarget& tgt = targets[i];
    if (tgt.label != 0 && !cs.contains(tgt.label))
      throw std::invalid_argument("frcnn_loss: label " +
                                  std::to_string(tgt.label) +
                                  " is not a class of the model");
    const std::size_t col = static_cast<std::size_t>(cs.logit_col(tgt.label));
    total += -std::log(std::max(probs(i, col), 1e-300));
    // d(-log p_k*)/dlogits = p - one_hot
    for (std::size_t j = 0; j < nc; ++j)
      lg.dlogits(i, j) = probs(i, j) * inv_n;
    lg.dlogits(i, col) -= inv_n;
    if (tgt.label >= 1) {
      const std::size_t ci = static_cast<std::size_t>(cs.class_index(tgt.label));
      for (std::size_t k = 0; k < 4; ++k) {
        const double diff = deltas(i, 4 * ci + k) - tgt.bbox_target[k];
        total += smooth_l1(diff);
        lg.ddeltas(i, 4 * ci + k) = smooth_l1_grad(diff) * inv_n;
      }
    }
  }
  lg.value = total * inv_n;
  return lg;
}

namespace {

void check_record(const DistillationRecord& rec, const Tensor& student_logits,
                  const Tensor& student_deltas, const ClassSet& student_cs) {
  if (static_cast<int>(student_cs.old_classes.size()) != rec.n_old_classes)
    throw std::invalid_argument(
        "distillation: record covers " + std::to_string(rec.n_old_classes) +
        " old classes but the student has " +
        std::to_string(student_cs.old_classes.size()));
  const std::size_t n = rec.centered_logits.rows();
  if (student_logits.rows() != n || student_deltas.rows() != n)
    throw std::invalid_argument("distillation: student rows != record rows");
  const std::size_t slice = rec.centered_logits.shape[1];
  if (student_logits.shape[1] < slice + student_cs.new_classes.size())
    throw std::invalid_argument("distillation: student logit width too small");
  if (student_deltas.shape[1] < static_cast<std::size_t>(4 * rec.n_old_classes))
    throw std::invalid_argument("distillation: student delta width too small");
}

}  // namespace

LossGrad distillation_loss(const DistillationRecord& record,
                           const Tensor& student_logits,
                           const Tensor& student_deltas,
                           const ClassSet& student_cs, bool include_bbox_term) {
  check_record(record, student_logits, student_deltas, student_cs);
  const std::size_t n = record.centered_logits.rows();
  const std::size_t slice = record.centered_logits.shape[1];
  const std::size_t col0 = record.includes_background ? 0 : 1;
  const std::size_t nd = static_cast<std::size_t>(4 * record.n_old_classes);
  const double norm =
      1.0 / (static_cast<double>(n) * static_cast<double>(record.n_old_classes));

  LossGrad lg;
  lg.dlogits = Tensor(student_logits.shape);
  lg.ddeltas = Tensor(student_deltas.shape);

  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    // Center the student's old-head slice the same way as the teacher's.
    double mean = 0.0;
    for (std::size_t j = 0; j < slice; ++j) mean += student_logits(i, col0 + j);
    mean /= static_cast<double>(slice);
    double grad_mean = 0.0;
    for (std::size_t j = 0; j < slice; ++j) {
      const double diff =
          (student_logits(i, col0 + j) - mean) - record.centered_logits(i, j);
      total += diff * diff;
      const double g = 2.0 * diff * norm;
      lg.dlogits(i, col0 + j) = g;
      grad_mean += g;
    }
    // Centering projection: route the mean component back.
    grad_mean /= static_cast<double>(slice);
    for (std::size_t j = 0; j < slice; ++j) lg.dlogits(i, col0 + j) -= grad_mean;

    if (include_bbox_term) {
      for (std::size_t j = 0; j < nd; ++j) {
        const double diff = student_deltas(i, j) - record.deltas(i, j);
        total += diff * diff;
        lg.ddeltas(i, j) = 2.0 * diff * norm;
      }
    }
  }
  lg.value = total * norm;
  return lg;
}

LossGrad crossentropy_distillation_loss(const DistillationRecord& record,
                                        const Tensor& student_logits,
                                        const Tensor& student_deltas,
                                        const ClassSet& student_cs,
                                        bool include_bbox_term) {
  check_record(record, student_logits, student_deltas, student_cs);
  const std::size_t n = record.centered_logits.rows();
  const std::size_t slice = record.centered_logits.shape[1];
  const std::size_t col0 = record.includes_background ? 0 : 1;
  const std::size_t nd = static_cast<std::size_t>(4 * record.n_old_classes);
  const double bbox_norm =
      1.0 / (static_cast<double>(n) * static_cast<double>(record.n_old_classes));
  const double inv_n = 1.0 / static_cast<double>(n);

  // Softmax is shift-invariant, so centered teacher logits give the same
  // target distribution as the raw ones.
  const Tensor teacher_p = softmax(record.centered_logits);

  LossGrad lg;
  lg.dlogits = Tensor(student_logits.shape);
  lg.ddeltas = Tensor(student_deltas.shape);

  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    Tensor srow({1, slice});
    for (std::size_t j = 0; j < slice; ++j) srow[j] = student_logits(i, col0 + j);
    const Tensor sp = softmax(srow);
    for (std::size_t j = 0; j < slice; ++j) {
      total += -teacher_p(i, j) * std::log(std::max(sp[j], 1e-300)) * inv_n;
      lg.dlogits(i, col0 + j) = (sp[j] - teacher_p(i, j)) * inv_n;
    }
    if (include_bbox_term) {
      for (std::size_t j = 0; j < nd; ++j) {
        const double diff = student_deltas(i, j) - record.deltas(i, j);
        total += diff * diff * bbox_norm;
        lg.ddeltas(i, j) = 2.0 * diff * bbox_norm;
      }
    }
  }
  lg.value = total;
  return lg;
}

LossGrad joint_loss(const LossGrad& rcnn, const LossGrad& dist, double lambda) {
  if (lambda < 0.0) throw std::invalid_argument("joint_loss: lambda < 0");
  check_shape(rcnn.dlogits.same_shape(dist.dlogits), "joint_loss logits",
              rcnn.dlogits, dist.dlogits);
  check_shape(rcnn.ddeltas.same_shape(dist.ddeltas), "joint_loss deltas",
              rcnn.ddeltas, dist.ddeltas);
  LossGrad lg;
  lg.value = rcnn.value + lambda * dist.value;
  lg.dlogits = rcnn.dlogits;
  lg.ddeltas = rcnn.ddeltas;
  for (std::size_t i = 0; i < lg.dlogits.size(); ++i)
    lg.dlogits.data[i] += lambda * dist.dlogits.data[i];
  for (std::size_t i = 0; i < lg.ddeltas.size(); ++i)
    lg.ddeltas.data[i] += lambda * dist.ddeltas.data[i];
  return lg;
}

FisherDiagonal estimate_fisher(DetectorModel& model, const Dataset& dataset,
                               int n_batches, std::uint64_t seed) {
  if (dataset.scenes.empty())
    throw std::invalid_argument("estimate_fisher: empty dataset");
  if (n_batches < 1)
    throw std::invalid_argument("estimate_fisher: n_batches < 1");

  FisherDiagonal fd;
  for (const auto& [name, e] : model.params.entries()) {
    fd.fisher[name] = Tensor(e.value.shape);
    fd.anchor[name] = e.value;
  }

  Rng rng(Rng::derive(seed, 0xF15Eull));
  for (int b = 0; b < n_batches; ++b) {
    std::vector<const Scene*> pick;
    for (int i = 0; i < 2; ++i)
      pick.push_back(&dataset.scenes[rng.index(dataset.scenes.size())]);
    LabeledBatch batch = compose_training_batch(pick, dataset.eligible_classes,
                                                rng.fork(b));
    model.params.zero_grads();
    for (const auto& img : batch.images) {
      Tensor feats = gather_features(*img.scene, img.proposal_ids);
      ForwardCache cache = model.forward_cached(feats);
      LossGrad lg =
          frcnn_loss(cache.logits, cache.deltas, img.targets, model.class_set);
      model.backward(cache, lg.dlogits, lg.ddeltas);
    }
    for (auto& [name, e] : model.params.entries()) {
      Tensor& f = fd.fisher[name];
      for (std::size_t i = 0; i < f.size(); ++i)
        f.data[i] += e.grad.data[i] * e.grad.data[i];
    }
  }
  for (auto& [name, f] : fd.fisher)
    for (double& v : f.data) v /= static_cast<double>(n_batches);
  model.params.zero_grads();
  return fd;
}

double ewc_penalty(DetectorModel& model, const FisherDiagonal& fisher,
                   double strength) {
  double total = 0.0;
  for (auto& [name, e] : model.params.entries()) {
    auto fit = fisher.fisher.find(name);
    auto ait = fisher.anchor.find(name);
    if (fit == fisher.fisher.end() || ait == fisher.anchor.end() ||
        !fit->second.same_shape(e.value))
      throw std::invalid_argument("ewc_penalty: fisher key mismatch at " + name);
    for (std::size_t i = 0; i < e.value.size(); ++i) {
      const double d = e.value.data[i] - ait->second.data[i];
      total += 0.5 * strength * fit->second.data[i] * d * d;
      e.grad.data[i] += strength * fit->second.data[i] * d;
    }
  }
  return total;
}

}  // namespace ildet
