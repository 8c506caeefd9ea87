#include "ildet/config.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace ildet {

std::string method_name(Method m) {
  switch (m) {
    case Method::DistillL2: return "distill_l2";
    case Method::DistillCE: return "distill_ce";
    case Method::NoDistill: return "no_distill";
    case Method::FrozenTrunk: return "frozen_trunk";
    case Method::FrozenAll: return "frozen_all";
    case Method::FrozenTrunkDistill: return "frozen_trunk_distill";
    case Method::NoBboxDistill: return "no_bbox_distill";
    case Method::UnbiasedDistill: return "unbiased_distill";
    case Method::Ewc: return "ewc";
    case Method::MultiNetwork: return "multi_network";
    case Method::JointBaseline: return "joint_baseline";
  }
  throw std::logic_error("method_name: unreachable");
}

Method parse_method(const std::string& name) {
  for (Method m : {Method::DistillL2, Method::DistillCE, Method::NoDistill,
                   Method::FrozenTrunk, Method::FrozenAll,
                   Method::FrozenTrunkDistill, Method::NoBboxDistill,
                   Method::UnbiasedDistill, Method::Ewc, Method::MultiNetwork,
                   Method::JointBaseline}) {
    if (method_name(m) == name) return m;
  }
  throw std::invalid_argument("unknown method: " + name);
}

namespace {

std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  std::size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::vector<int> parse_int_list(const std::string& v) {
  std::vector<int> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(std::stoi(item));
  }
  return out;
}

std::vector<double> parse_double_list(const std::string& v) {
  std::vector<double> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(std::stod(item));
  }
  return out;
}

bool parse_bool(const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw std::invalid_argument("invalid boolean: " + v);
}

void apply_key(ExperimentConfig& c, const std::string& key,
               const std::string& v) {
  WorldSpec& w = c.world;
  if (key == "world.n_classes") w.n_classes = std::stoi(v);
  else if (key == "world.feature_dim") w.feature_dim = std::stoi(v);
  else if (key == "world.noise_sigma") w.noise_sigma = std::stod(v);
  else if (key == "world.prototype_scale") w.prototype_scale = std::stod(v);
  else if (key == "world.min_objects") w.min_objects = std::stoi(v);
  else if (key == "world.max_objects") w.max_objects = std::stoi(v);
  else if (key == "world.min_obj_size") w.min_obj_size = std::stod(v);
  else if (key == "world.max_obj_size") w.max_obj_size = std::stod(v);
  else if (key == "world.proposals_per_scene") w.proposals_per_scene = std::stoi(v);
  else if (key == "world.jitters_per_level") w.jitters_per_level = std::stoi(v);
  else if (key == "world.proposal_nms_iou") w.proposal_nms_iou = std::stod(v);
  else if (key == "world.shifted_background") w.shifted_background = parse_bool(v);
  else if (key == "world.background_shift") w.background_shift = std::stod(v);
  else if (key == "world.seed") c.world_seed = std::stoull(v);
  else if (key == "classes.old") c.old_classes = parse_int_list(v);
  else if (key == "classes.new") c.new_classes = parse_int_list(v);
  else if (key == "optimizer.learning_rate") c.optimizer.learning_rate = std::stod(v);
  else if (key == "optimizer.momentum") c.optimizer.momentum = std::stod(v);
  else if (key == "optimizer.weight_decay") c.optimizer.weight_decay = std::stod(v);
  else if (key == "optimizer.phase2_learning_rate") c.phase2_learning_rate = std::stod(v);
  else if (key == "optimizer.lr_decay_fraction") c.lr_decay_fraction = std::stod(v);
  else if (key == "train.phase1_steps") c.phase1_steps = std::stoi(v);
  else if (key == "train.phase2_steps_per_class") c.phase2_steps_per_class = std::stoi(v);
  else if (key == "train.batch_images") c.batch_images = std::stoi(v);
  else if (key == "train.rois_per_image") c.rois_per_image = std::stoi(v);
  else if (key == "train.fg_per_image") c.fg_per_image = std::stoi(v);
  else if (key == "train.eval_every") c.eval_every = std::stoi(v);
  else if (key == "train.train_scenes") c.train_scenes = std::stoi(v);
  else if (key == "train.test_scenes") c.test_scenes = std::stoi(v);
  else if (key == "train.hidden_widths") c.hidden_widths = parse_int_list(v);
  else if (key == "distill.lambda") c.lambda = std::stod(v);
  else if (key == "distill.lambda_sweep") c.lambda_sweep = parse_double_list(v);
  else if (key == "distill.pool") c.distill_pool = std::stoi(v);
  else if (key == "distill.pick") c.distill_pick = std::stoi(v);
  else if (key == "distill.include_background_logit") c.include_background_logit = parse_bool(v);
  else if (key == "distill.teacher_cache") c.teacher_cache = parse_bool(v);
  else if (key == "ewc.strength") c.ewc_strength = std::stod(v);
  else if (key == "ewc.fisher_batches") c.fisher_batches = std::stoi(v);
  else if (key == "experiment.method") c.method = parse_method(v);
  else if (key == "experiment.seed") c.seed = std::stoull(v);
  else if (key == "experiment.out_dir") c.out_dir = v;
  else if (key == "experiment.base_checkpoint") c.base_checkpoint = v;
  else if (key == "eval.score_threshold") c.eval_score_threshold = std::stod(v);
  else if (key == "eval.detect_score_threshold") c.detect_score_threshold = std::stod(v);
  else if (key == "eval.nms_iou") c.eval_nms_iou = std::stod(v);
  else if (key == "eval.interpolation") {
    if (v == "eleven_point") c.interp = ApInterpolation::ElevenPoint;
    else if (v == "all_point") c.interp = ApInterpolation::AllPoint;
    else throw std::invalid_argument("eval.interpolation must be eleven_point or all_point");
  } else {
    throw std::invalid_argument("unknown config key: " + key);
  }
}

}  // namespace

ExperimentConfig parse_config_string(const std::string& text) {
  ExperimentConfig cfg;
  std::istringstream in(text);
  std::string line, section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']')
        throw std::invalid_argument("config line " + std::to_string(lineno) +
                                    ": malformed section header");
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("config line " + std::to_string(lineno) +
                                  ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (section.empty())
      throw std::invalid_argument("config line " + std::to_string(lineno) +
                                  ": key outside any [section]");
    apply_key(cfg, section + "." + key, value);
  }
  return cfg;
}

ExperimentConfig parse_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open config file: " + path);
  std::string text((std::istreambuf_iterator<char>(in)),
                   std::istreambuf_iterator<char>());
  return parse_config_string(text);
}

namespace {

std::string fmt_double(double v) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

template <typename T>
std::string fmt_list(const std::vector<T>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) s += ",";
    if constexpr (std::is_same_v<T, double>)
      s += fmt_double(v[i]);
    else
      s += std::to_string(v[i]);
  }
  return s;
}

}  // namespace

std::string canonical_config(const ExperimentConfig& c) {
  std::ostringstream os;
  const WorldSpec& w = c.world;
  os << "classes.new = " << fmt_list(c.new_classes) << "\n"
     << "classes.old = " << fmt_list(c.old_classes) << "\n"
     << "distill.include_background_logit = " << (c.include_background_logit ? "true" : "false") << "\n"
     << "distill.lambda = " << fmt_double(c.lambda) << "\n"
     << "distill.lambda_sweep = " << fmt_list(c.lambda_sweep) << "\n"
     << "distill.pick = " << c.distill_pick << "\n"
     << "distill.pool = " << c.distill_pool << "\n"
     << "distill.teacher_cache = " << (c.teacher_cache ? "true" : "false") << "\n"
     << "eval.detect_score_threshold = " << fmt_double(c.detect_score_threshold) << "\n"
     << "eval.interpolation = "
     << (c.interp == ApInterpolation::ElevenPoint ? "eleven_point" : "all_point") << "\n"
     << "eval.nms_iou = " << fmt_double(c.eval_nms_iou) << "\n"
     << "eval.score_threshold = " << fmt_double(c.eval_score_threshold) << "\n"
     << "ewc.fisher_batches = " << c.fisher_batches << "\n"
     << "ewc.strength = " << fmt_double(c.ewc_strength) << "\n"
     << "experiment.method = " << method_name(c.method) << "\n"
     << "experiment.seed = " << c.seed << "\n"
     << "optimizer.learning_rate = " << fmt_double(c.optimizer.learning_rate) << "\n"
     << "optimizer.lr_decay_fraction = " << fmt_double(c.lr_decay_fraction) << "\n"
     << "optimizer.momentum = " << fmt_double(c.optimizer.momentum) << "\n"
     << "optimizer.phase2_learning_rate = " << fmt_double(c.phase2_learning_rate) << "\n"
     << "optimizer.weight_decay = " << fmt_double(c.optimizer.weight_decay) << "\n"
     << "train.batch_images = " << c.batch_images << "\n"
     << "train.eval_every = " << c.eval_every << "\n"
     << "train.fg_per_image = " << c.fg_per_image << "\n"
     << "train.hidden_widths = " << fmt_list(c.hidden_widths) << "\n"
     << "train.phase1_steps = " << c.phase1_steps << "\n"
     << "train.phase2_steps_per_class = " << c.phase2_steps_per_class << "\n"
     << "train.rois_per_image = " << c.rois_per_image << "\n"
     << "train.test_scenes = " << c.test_scenes << "\n"
     << "train.train_scenes = " << c.train_scenes << "\n"
     << "world.background_shift = " << fmt_double(w.background_shift) << "\n"
     << "world.feature_dim = " << w.feature_dim << "\n"
     << "world.jitters_per_level = " << w.jitters_per_level << "\n"
     << "world.max_obj_size = " << fmt_double(w.max_obj_size) << "\n"
     << "world.max_objects = " << w.max_objects << "\n"
     << "world.min_obj_size = " << fmt_double(w.min_obj_size) << "\n"
     << "world.min_objects = " << w.min_objects << "\n"
     << "world.n_classes = " << w.n_classes << "\n"
     << "world.noise_sigma = " << fmt_double(w.noise_sigma) << "\n"
     << "world.proposal_nms_iou = " << fmt_double(w.proposal_nms_iou) << "\n"
     << "world.proposals_per_scene = " << w.proposals_per_scene << "\n"
     << "world.prototype_scale = " << fmt_double(w.prototype_scale) << "\n"
     << "world.seed = " << c.effective_world_seed() << "\n"
     << "world.shifted_background = " << (w.shifted_background ? "true" : "false") << "\n";
  return os.str();
}

std::uint64_t config_hash(const ExperimentConfig& cfg) {
  const std::string s = canonical_config(cfg);
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  return h;
}

}  // namespace ildet
