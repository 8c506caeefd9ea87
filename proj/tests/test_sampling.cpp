#include "doctest.h"

#include <algorithm>
#include <map>
#include <set>

#include "ildet/data.hpp"
#include "ildet/model.hpp"
#include "ildet/nn.hpp"
#include "ildet/sampling.hpp"

using namespace ildet;

namespace {

// A small hand-built scene: two objects (classes 1 and 2), proposals with
// known IoU against them.
Scene toy_scene() {
  Scene s;
  s.id = 500;
  s.gt.push_back({1, {0.1, 0.1, 0.3, 0.3}});
  s.gt.push_back({2, {0.6, 0.6, 0.9, 0.9}});
  auto add = [&](double x0, double y0, double x1, double y1) {
    Proposal p;
    p.id = static_cast<int>(s.proposals.size());
    p.box = {x0, y0, x1, y1};
    p.feature.assign(8, 0.0);
    s.proposals.push_back(p);
  };
  add(0.1, 0.1, 0.3, 0.3);    // exact hit on class 1
  add(0.12, 0.1, 0.32, 0.3);  // high IoU with class 1
  add(0.6, 0.6, 0.9, 0.9);    // exact hit on class 2
  add(0.15, 0.15, 0.45, 0.45);  // partial overlap, below 0.5
  add(0.0, 0.7, 0.2, 0.95);   // background, no overlap
  return s;
}

ClassSet cs_old4() {
  ClassSet cs;
  cs.old_classes = {1, 2, 3, 4};
  return cs;
}

}  // namespace

TEST_CASE("label_proposals respects the eligible class filter") {
  Scene s = toy_scene();
  auto all = label_proposals(s, {1, 2});
  CHECK(all[0].label == 1);
  CHECK(all[1].label == 1);
  CHECK(all[2].label == 2);
  CHECK(all[3].label == 0);  // IoU below 0.5
  CHECK(all[4].label == 0);

  // With class 2 masked out, its object is invisible: proposal 2 is background.
  auto only1 = label_proposals(s, {1});
  CHECK(only1[0].label == 1);
  CHECK(only1[2].label == 0);

  // Foreground targets encode the matched box.
  const auto enc = encode_bbox_target(s.proposals[1].box, s.gt[0].box);
  for (int k = 0; k < 4; ++k)
    CHECK(all[1].bbox_target[k] == doctest::Approx(enc[k]));
}

TEST_CASE("eligible_max_iou ignores masked annotations") {
  Scene s = toy_scene();
  auto m_all = eligible_max_iou(s, {1, 2});
  CHECK(m_all[2] == doctest::Approx(1.0));
  auto m_1 = eligible_max_iou(s, {1});
  CHECK(m_1[2] == doctest::Approx(0.0));  // class-2 object masked
}

TEST_CASE("training batch has the configured fg/bg composition") {
  WorldSpec spec;
  spec.seed = 301;
  Scene a = generate_scene(spec, 0);
  Scene b = generate_scene(spec, 5);
  std::vector<int> eligible{1, 2, 3, 4, 5, 6, 7, 8};
  LabeledBatch batch =
      compose_training_batch({&a, &b}, eligible, Rng(9), 64, 16);
  REQUIRE(batch.images.size() == 2);
  for (const auto& img : batch.images) {
    CHECK(img.proposal_ids.size() == 64);
    CHECK(img.targets.size() == 64);
    CHECK(img.fg_count == 16);
    CHECK(img.bg_count == 48);
    auto ious = eligible_max_iou(*img.scene, eligible);
    for (std::size_t i = 0; i < 64; ++i) {
      const int pid = img.proposal_ids[i];
      if (img.targets[i].label != 0) {
        CHECK(ious[pid] >= 0.5);
        CHECK(std::find(eligible.begin(), eligible.end(),
                        img.targets[i].label) != eligible.end());
      } else {
        CHECK(ious[pid] < 0.5);
      }
    }
  }
  // Deterministic in the rng seed.
  LabeledBatch again =
      compose_training_batch({&a, &b}, eligible, Rng(9), 64, 16);
  for (int i = 0; i < 2; ++i)
    CHECK(batch.images[i].proposal_ids == again.images[i].proposal_ids);
}

TEST_CASE("foreground shortage is padded by resampling with replacement") {
  Scene s = toy_scene();  // only 3 proposals reach IoU 0.5
  LabeledBatch batch = compose_training_batch({&s}, {1, 2}, Rng(3), 8, 4);
  const auto& img = batch.images[0];
  CHECK(img.fg_count == 4);
  std::set<int> fg_ids;
  for (std::size_t i = 0; i < img.proposal_ids.size(); ++i)
    if (img.targets[i].label != 0) fg_ids.insert(img.proposal_ids[i]);
  CHECK(fg_ids.size() <= 3);  // only duplicates can fill the quota
  for (int id : fg_ids) CHECK(id <= 2);
}

TEST_CASE("background window prefers [0.1, 0.5) and falls back to [0, 0.5)") {
  WorldSpec spec;
  spec.seed = 307;
  Scene s = generate_scene(spec, 2);
  std::vector<int> eligible{1, 2, 3, 4, 5, 6, 7, 8};
  LabeledBatch batch = compose_training_batch({&s}, eligible, Rng(5), 64, 16);
  auto ious = eligible_max_iou(s, eligible);
  bool window_nonempty = false;
  for (double v : ious) window_nonempty |= (v >= 0.1 && v < 0.5);
  REQUIRE(window_nonempty);  // typical scene: the strict window applies
  for (std::size_t i = 0; i < 64; ++i) {
    const auto& img = batch.images[0];
    if (img.targets[i].label == 0) {
      const double v = ious[img.proposal_ids[i]];
      CHECK(v >= 0.1);
      CHECK(v < 0.5);
    }
  }

  // A scene whose only annotation is masked out has an empty strict window
  // (every eligible IoU is 0) and must fall back instead of throwing.
  Scene masked = toy_scene();
  masked.gt.resize(1);  // keep only the class-1 object
  LabeledBatch fb = compose_training_batch({&masked}, {2}, Rng(7), 8, 2);
  CHECK(fb.images[0].proposal_ids.size() == 8);
  for (const auto& t : fb.images[0].targets) CHECK(t.label == 0);
}

TEST_CASE("biased selection picks from the lowest-background-score pool") {
  WorldSpec spec;
  spec.seed = 311;
  Scene s = generate_scene(spec, 4);
  DetectorModel m(spec.input_dim(), {16}, cs_old4(), 313);
  FrozenSnapshot teacher(m);

  const int n_pool = 40, n_pick = 16;
  DistillationRecord rec =
      select_distillation_rois(teacher, s, Rng(11), n_pool, n_pick, true);
  CHECK(rec.roi_ids.size() == n_pick);
  CHECK(rec.centered_logits.rows() == n_pick);
  CHECK(rec.deltas.shape[1] == 16);
  CHECK(rec.n_old_classes == 4);

  // Reconstruct the pool independently.
  const auto& resp = teacher.respond_scene(s);
  Tensor probs = softmax(resp.logits);
  std::vector<int> order(s.proposals.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    if (probs(a, 0) != probs(b, 0)) return probs(a, 0) < probs(b, 0);
    return a < b;
  });
  std::set<int> pool(order.begin(), order.begin() + n_pool);
  std::set<int> seen;
  for (int id : rec.roi_ids) {
    CHECK(pool.count(id) == 1);
    CHECK(seen.insert(id).second);  // no repeats
  }

  // Centered teacher logits: each row sums to ~0 and matches the response.
  for (std::size_t i = 0; i < rec.centered_logits.rows(); ++i) {
    double sum = 0.0;
    for (std::size_t j = 0; j < rec.centered_logits.shape[1]; ++j)
      sum += rec.centered_logits(i, j);
    CHECK(std::fabs(sum) < 1e-9);
  }
}

TEST_CASE("unbiased selection is uniform over all proposals") {
  WorldSpec spec;
  spec.seed = 317;
  spec.proposals_per_scene = 50;
  Scene s = generate_scene(spec, 1);
  DetectorModel m(spec.input_dim(), {8}, cs_old4(), 319);
  FrozenSnapshot teacher(m);

  std::map<int, int> hits;
  const int trials = 4000, n_pick = 10;
  for (int t = 0; t < trials; ++t) {
    DistillationRecord rec =
        select_unbiased_rois(teacher, s, Rng(1000 + t), n_pick, true);
    std::set<int> uniq(rec.roi_ids.begin(), rec.roi_ids.end());
    CHECK(uniq.size() == rec.roi_ids.size());
    for (int id : rec.roi_ids) ++hits[id];
  }
  const double expected =
      trials * n_pick / static_cast<double>(s.proposals.size());
  double chi2 = 0.0;
  for (const auto& p : s.proposals) {
    const double o = hits[p.id];
    chi2 += (o - expected) * (o - expected) / expected;
  }
  // ~49 dof; 0.999 quantile is ~85
  CHECK(chi2 < 100.0);
}

TEST_CASE("selection validates the pick size") {
  WorldSpec spec;
  spec.seed = 331;
  spec.proposals_per_scene = 20;
  Scene s = generate_scene(spec, 0);
  DetectorModel m(spec.input_dim(), {8}, cs_old4(), 337);
  FrozenSnapshot teacher(m);
  CHECK_THROWS_AS(select_unbiased_rois(teacher, s, Rng(1), 64, true),
                  std::invalid_argument);
  CHECK_THROWS_AS(select_distillation_rois(teacher, s, Rng(1), 128, 64, true),
                  std::invalid_argument);
}
