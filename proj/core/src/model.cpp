#include "ildet/model.hpp"

#include <algorithm>
#include <stdexcept>

#include "ildet/eval.hpp"

namespace ildet {

namespace {

// Head layers start near zero, Fast R-CNN style: N(0, 0.01^2) for the
// classification layer and N(0, 0.001^2) for the regression layer. A
// full-width random init on the bbox head plants components along
// low-variance directions of the trunk output that SGD cannot wash out
// within the training budget, and that stale noise wrecks box refinement.
constexpr double kClsInitStd = 0.01;
constexpr double kBboxInitStd = 0.001;

Tensor head_init(std::size_t in, std::size_t out, double stddev, Rng& rng) {
  Tensor W({in, out});
  for (double& v : W.data) v = stddev * rng.normal();
  return W;
}

}  // namespace

int ClassSet::logit_col(int class_id) const {
  if (class_id == 0) return 0;
  return 1 + class_index(class_id);
}

int ClassSet::class_index(int class_id) const {
  int idx = 0;
  for (int c : old_classes) {
    if (c == class_id) return idx;
    ++idx;
  }
  for (int c : new_classes) {
    if (c == class_id) return idx;
    ++idx;
  }
  throw std::invalid_argument("ClassSet: unknown class id " +
                              std::to_string(class_id));
}

bool ClassSet::contains(int class_id) const {
  for (int c : old_classes)
    if (c == class_id) return true;
  for (int c : new_classes)
    if (c == class_id) return true;
  return false;
}

void ClassSet::validate() const {
  std::vector<int> seen;
  for (int c : all()) {
    if (c <= 0)
      throw std::invalid_argument("ClassSet: class ids must be positive "
                                  "(0 is reserved for background)");
    if (std::find(seen.begin(), seen.end(), c) != seen.end())
      throw std::invalid_argument("ClassSet: duplicate class id " +
                                  std::to_string(c));
    seen.push_back(c);
  }
}

DetectorModel::DetectorModel(int input_dim, std::vector<int> hidden_widths,
                             ClassSet cs, std::uint64_t init_seed)
    : class_set(std::move(cs)),
      input_dim_(input_dim),
      hidden_widths_(std::move(hidden_widths)) {
  class_set.validate();
  Rng rng(init_seed);
  int in = input_dim_;
  for (std::size_t l = 0; l < hidden_widths_.size(); ++l) {
    const int out = hidden_widths_[l];
    params.add("trunk." + std::to_string(l) + ".W",
               init_weight(in, out, rng));
    params.add("trunk." + std::to_string(l) + ".b", Tensor::vector(out));
    in = out;
  }
  params.add("cls.W", head_init(in, num_logits(), kClsInitStd, rng));
  params.add("cls.b", Tensor::vector(num_logits()));
  params.add("bbox.W", head_init(in, num_deltas(), kBboxInitStd, rng));
  params.add("bbox.b", Tensor::vector(num_deltas()));
}

std::pair<Tensor, Tensor> DetectorModel::forward_rois(
    const Tensor& features) const {
  if (features.shape.size() != 2 ||
      features.shape[1] != static_cast<std::size_t>(input_dim_))
    throw std::invalid_argument("forward_rois: features " +
                                features.shape_str() + " do not match trunk "
                                "input width " + std::to_string(input_dim_));
  Tensor h = features;
  for (std::size_t l = 0; l < hidden_widths_.size(); ++l) {
    const std::string p = "trunk." + std::to_string(l);
    h = relu(affine_forward(h, params.value(p + ".W"), params.value(p + ".b")));
  }
  Tensor logits = affine_forward(h, params.value("cls.W"), params.value("cls.b"));
  Tensor deltas = affine_forward(h, params.value("bbox.W"), params.value("bbox.b"));
  return {std::move(logits), std::move(deltas)};
}

ForwardCache DetectorModel::forward_cached(const Tensor& features) const {
  if (features.shape.size() != 2 ||
      features.shape[1] != static_cast<std::size_t>(input_dim_))
    throw std::invalid_argument("forward_cached: features " +
                                features.shape_str() + " do not match trunk "
                                "input width " + std::to_string(input_dim_));
  ForwardCache c;
  c.x = features;
  Tensor h = features;
  for (std::size_t l = 0; l < hidden_widths_.size(); ++l) {
    const std::string p = "trunk." + std::to_string(l);
    Tensor pre = affine_forward(h, params.value(p + ".W"), params.value(p + ".b"));
    h = relu(pre);
    c.pre.push_back(std::move(pre));
    c.act.push_back(h);
  }
  c.logits = affine_forward(h, params.value("cls.W"), params.value("cls.b"));
  c.deltas = affine_forward(h, params.value("bbox.W"), params.value("bbox.b"));
  return c;
}

void DetectorModel::backward(const ForwardCache& cache, const Tensor& dlogits,
                             const Tensor& ddeltas) {
  if (cache.pre.size() != hidden_widths_.size())
    throw std::logic_error("backward: forward cache missing or stale");
  const Tensor& last = cache.act.empty() ? cache.x : cache.act.back();
  Tensor dh(last.shape);
  affine_backward(last, params.value("cls.W"), dlogits, &dh,
                  params.grad("cls.W"), params.grad("cls.b"));
  affine_backward(last, params.value("bbox.W"), ddeltas, &dh,
                  params.grad("bbox.W"), params.grad("bbox.b"));
  for (int l = static_cast<int>(hidden_widths_.size()) - 1; l >= 0; --l) {
    const std::string p = "trunk." + std::to_string(l);
    Tensor dpre = relu_backward(cache.pre[l], dh);
    const Tensor& in = (l == 0) ? cache.x : cache.act[l - 1];
    Tensor din(in.shape);
    affine_backward(in, params.value(p + ".W"), dpre, &din,
                    params.grad(p + ".W"), params.grad(p + ".b"));
    dh = std::move(din);
  }
}

DetectorModel DetectorModel::extend(const std::vector<int>& added,
                                    std::uint64_t seed) const {
  for (int c : added)
    if (class_set.contains(c) || c <= 0)
      throw std::invalid_argument("extend: invalid or duplicate class id " +
                                  std::to_string(c));
  DetectorModel out = *this;
  out.class_set.old_classes = class_set.all();
  out.class_set.new_classes = added;
  out.class_set.validate();
  if (added.empty()) return out;

  Rng rng(seed);
  const std::size_t h = hidden_widths_.empty()
                            ? static_cast<std::size_t>(input_dim_)
                            : static_cast<std::size_t>(hidden_widths_.back());
  const std::size_t n_add = added.size();

  // Widen the classification head: old columns copied bit-exactly, new
  // sibling columns freshly initialized.
  {
    const Tensor& oldW = params.value("cls.W");
    const Tensor& oldb = params.value("cls.b");
    const std::size_t old_w = oldW.shape[1], new_w = old_w + n_add;
    Tensor fresh = head_init(h, n_add, kClsInitStd, rng);
    Tensor W({h, new_w});
    Tensor b({new_w});
    for (std::size_t r = 0; r < h; ++r) {
      for (std::size_t col = 0; col < old_w; ++col) W(r, col) = oldW(r, col);
      for (std::size_t col = 0; col < n_add; ++col)
        W(r, old_w + col) = fresh(r, col);
    }
    for (std::size_t col = 0; col < old_w; ++col) b[col] = oldb[col];
    auto& e = out.params.at("cls.W");
    e.value = std::move(W);
    e.grad = Tensor({h, new_w});
    e.velocity = Tensor({h, new_w});
    e.mask = Tensor();
    auto& eb = out.params.at("cls.b");
    eb.value = std::move(b);
    eb.grad = Tensor({new_w});
    eb.velocity = Tensor({new_w});
    eb.mask = Tensor();
  }
  // Widen the bbox head (4 new columns per added class).
  {
    const Tensor& oldW = params.value("bbox.W");
    const Tensor& oldb = params.value("bbox.b");
    const std::size_t old_w = oldW.shape[1], new_w = old_w + 4 * n_add;
    Tensor fresh = head_init(h, 4 * n_add, kBboxInitStd, rng);
    Tensor W({h, new_w});
    Tensor b({new_w});
    for (std::size_t r = 0; r < h; ++r) {
      for (std::size_t col = 0; col < old_w; ++col) W(r, col) = oldW(r, col);
      for (std::size_t col = 0; col < 4 * n_add; ++col)
        W(r, old_w + col) = fresh(r, col);
    }
    for (std::size_t col = 0; col < old_w; ++col) b[col] = oldb[col];
    auto& e = out.params.at("bbox.W");
    e.value = std::move(W);
    e.grad = Tensor({h, new_w});
    e.velocity = Tensor({h, new_w});
    e.mask = Tensor();
    auto& eb = out.params.at("bbox.b");
    eb.value = std::move(b);
    eb.grad = Tensor({new_w});
    eb.velocity = Tensor({new_w});
    eb.mask = Tensor();
  }
  return out;
}

void DetectorModel::freeze_trunk() {
  for (auto& [name, e] : params.entries()) {
    if (name.rfind("trunk.", 0) == 0) {
      e.mask = Tensor(e.value.shape);  // all zero
    }
  }
}

void DetectorModel::freeze_old_head_columns() {
  // Background and old-class columns stay put; only the sibling columns for
  // new classes remain trainable.
  auto& clsW = params.at("cls.W");
  auto& clsb = params.at("cls.b");
  auto& bbxW = params.at("bbox.W");
  auto& bbxb = params.at("bbox.b");
  if (clsW.mask.data.empty()) clsW.mask = Tensor(clsW.value.shape);
  if (clsb.mask.data.empty()) clsb.mask = Tensor(clsb.value.shape);
  if (bbxW.mask.data.empty()) bbxW.mask = Tensor(bbxW.value.shape);
  if (bbxb.mask.data.empty()) bbxb.mask = Tensor(bbxb.value.shape);
  clsW.mask.fill(0.0);
  clsb.mask.fill(0.0);
  bbxW.mask.fill(0.0);
  bbxb.mask.fill(0.0);
  for (int c : class_set.new_classes) {
    const std::size_t lc = static_cast<std::size_t>(class_set.logit_col(c));
    const std::size_t ci = static_cast<std::size_t>(class_set.class_index(c));
    for (std::size_t r = 0; r < clsW.value.shape[0]; ++r) clsW.mask(r, lc) = 1.0;
    clsb.mask[lc] = 1.0;
    for (std::size_t k = 0; k < 4; ++k) {
      for (std::size_t r = 0; r < bbxW.value.shape[0]; ++r)
        bbxW.mask(r, 4 * ci + k) = 1.0;
      bbxb.mask[4 * ci + k] = 1.0;
    }
  }
}

std::vector<Detection> predict_detections(const DetectorModel& model,
                                          const Scene& scene,
                                          double score_threshold,
                                          double nms_iou) {
  std::vector<Detection> out;
  if (scene.proposals.empty()) return out;
  auto [logits, deltas] = model.forward_rois(gather_features(scene));
  const Tensor probs = softmax(logits);
  const std::size_t n = scene.proposals.size();

  for (int c : model.class_set.all()) {
    const std::size_t col = static_cast<std::size_t>(model.class_set.logit_col(c));
    const std::size_t ci = static_cast<std::size_t>(model.class_set.class_index(c));
    std::vector<Box> boxes;
    std::vector<double> scores;
    for (std::size_t i = 0; i < n; ++i) {
      const double s = probs(i, col);
      if (s <= score_threshold) continue;
      const std::array<double, 4> d = {deltas(i, 4 * ci + 0), deltas(i, 4 * ci + 1),
                                       deltas(i, 4 * ci + 2), deltas(i, 4 * ci + 3)};
      Box refined = decode_bbox(scene.proposals[i].box, d);
      if (!refined.valid()) continue;
      boxes.push_back(refined);
      scores.push_back(s);
    }
    for (std::size_t idx : nms(boxes, scores, nms_iou)) {
      Detection det;
      det.class_id = c;
      det.box = boxes[idx];
      det.score = scores[idx];
      det.scene_id = scene.id;
      out.push_back(det);
    }
  }
  return out;
}

FrozenSnapshot::FrozenSnapshot(const DetectorModel& source, bool enable_cache)
    : model_(source), cache_enabled_(enable_cache) {
  // Velocity/grad state is irrelevant to a teacher; drop it to keep the
  // snapshot purely a function of the source parameters.
  for (auto& [name, e] : model_.params.entries()) {
    e.grad.fill(0.0);
    e.velocity.fill(0.0);
  }
}

std::pair<Tensor, Tensor> FrozenSnapshot::respond(const Tensor& features) const {
  return model_.forward_rois(features);
}

const FrozenSnapshot::SceneResponse& FrozenSnapshot::respond_scene(
    const Scene& scene) const {
  if (cache_enabled_) {
    auto it = cache_.find(scene.id);
    if (it != cache_.end()) return it->second;
  }
  auto [logits, deltas] = model_.forward_rois(gather_features(scene));
  SceneResponse resp{std::move(logits), std::move(deltas)};
  if (!cache_enabled_) {
    scratch_ = std::move(resp);
    return scratch_;
  }
  auto [it, inserted] = cache_.insert_or_assign(scene.id, std::move(resp));
  return it->second;
}

Tensor gather_features(const Scene& scene) {
  const std::size_t n = scene.proposals.size();
  const std::size_t d = n ? scene.proposals[0].feature.size() : 0;
  Tensor f({n, d});
  for (std::size_t i = 0; i < n; ++i)
    std::copy(scene.proposals[i].feature.begin(),
              scene.proposals[i].feature.end(), &f.data[i * d]);
  return f;
}

Tensor gather_features(const Scene& scene, const std::vector<int>& proposal_ids) {
  const std::size_t d =
      scene.proposals.empty() ? 0 : scene.proposals[0].feature.size();
  Tensor f({proposal_ids.size(), d});
  for (std::size_t i = 0; i < proposal_ids.size(); ++i) {
    const Proposal* p = nullptr;
    for (const auto& cand : scene.proposals)
      if (cand.id == proposal_ids[i]) {
        p = &cand;
        break;
      }
    if (!p)
      throw std::invalid_argument("gather_features: unknown proposal id " +
                                  std::to_string(proposal_ids[i]));
    std::copy(p->feature.begin(), p->feature.end(), &f.data[i * d]);
  }
  return f;
}

}  // namespace ildet
