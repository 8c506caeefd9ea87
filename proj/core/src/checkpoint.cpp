#include "ildet/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>

#include "json.hpp"

#include "ildet/data.hpp"

namespace ildet {
namespace container {

namespace {

constexpr char kMagic[6] = {'I', 'L', 'D', 'E', 'T', '1'};
constexpr std::uint32_t kVersion = 1;

void put_u32_le(std::string& out, std::uint32_t v) {
  out.push_back(static_cast<char>(v & 0xFF));
  out.push_back(static_cast<char>((v >> 8) & 0xFF));
  out.push_back(static_cast<char>((v >> 16) & 0xFF));
  out.push_back(static_cast<char>((v >> 24) & 0xFF));
}

std::uint32_t get_u32_le(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) |
         (static_cast<std::uint32_t>(p[3]) << 24);
}

void put_f64_le(std::string& out, double d) {
  std::uint64_t bits;
  std::memcpy(&bits, &d, sizeof(bits));
  for (int i = 0; i < 8; ++i)
    out.push_back(static_cast<char>((bits >> (8 * i)) & 0xFF));
}

double get_f64_le(const unsigned char* p) {
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  double d;
  std::memcpy(&d, &bits, sizeof(d));
  return d;
}

}  // namespace

void write(const std::string& path, const std::string& header_json,
           const std::vector<std::pair<std::string, const Tensor*>>& tensors) {
  nlohmann::json header = header_json.empty()
                              ? nlohmann::json::object()
                              : nlohmann::json::parse(header_json);
  nlohmann::json manifest = nlohmann::json::array();
  std::uint64_t offset = 0;
  for (const auto& [name, t] : tensors) {
    manifest.push_back({{"name", name}, {"shape", t->shape}, {"offset", offset}});
    offset += t->size() * 8;
  }
  header["manifest"] = std::move(manifest);
  const std::string hdr = header.dump();

  std::string buf;
  buf.append(kMagic, sizeof(kMagic));
  put_u32_le(buf, kVersion);
  put_u32_le(buf, static_cast<std::uint32_t>(hdr.size()));
  buf += hdr;
  for (const auto& [name, t] : tensors)
    for (double v : t->data) put_f64_le(buf, v);

  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("container::write: cannot open " + path);
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!out) throw std::runtime_error("container::write: write failed: " + path);
}

File read(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("container::read: cannot open " + path);
  std::string buf((std::istreambuf_iterator<char>(in)),
                  std::istreambuf_iterator<char>());
  const auto* p = reinterpret_cast<const unsigned char*>(buf.data());
  if (buf.size() < 14 || std::memcmp(p, kMagic, sizeof(kMagic)) != 0)
    throw std::runtime_error("container::read: bad magic in " + path);
  const std::uint32_t version = get_u32_le(p + 6);
  if (version != kVersion)
    throw std::runtime_error("container::read: unsupported version " +
                             std::to_string(version));
  const std::uint32_t hlen = get_u32_le(p + 10);
  if (buf.size() < 14 + hlen)
    throw std::runtime_error("container::read: truncated header in " + path);
  const std::string hdr = buf.substr(14, hlen);
  nlohmann::json header = nlohmann::json::parse(hdr);
  const std::size_t payload_start = 14 + hlen;

  File f;
  for (const auto& entry : header.at("manifest")) {
    const std::string name = entry.at("name");
    std::vector<std::size_t> shape =
        entry.at("shape").get<std::vector<std::size_t>>();
    const std::uint64_t offset = entry.at("offset");
    Tensor t(shape);
    if (payload_start + offset + t.size() * 8 > buf.size())
      throw std::runtime_error("container::read: truncated payload in " + path);
    for (std::size_t i = 0; i < t.size(); ++i)
      t.data[i] = get_f64_le(p + payload_start + offset + 8 * i);
    f.tensors.emplace_back(name, std::move(t));
  }
  header.erase("manifest");
  f.header_json = header.dump();
  return f;
}

}  // namespace container

void save_checkpoint(const std::string& path, const DetectorModel& model) {
  nlohmann::json header = {
      {"kind", "model"},
      {"class_set",
       {{"old", model.class_set.old_classes},
        {"new", model.class_set.new_classes}}},
      {"arch",
       {{"input_dim", model.input_dim()}, {"hidden", model.hidden_widths()}}}};
  std::vector<std::pair<std::string, const Tensor*>> tensors;
  for (const auto& [name, e] : model.params.entries())
    tensors.emplace_back(name, &e.value);
  container::write(path, header.dump(), tensors);
}

DetectorModel load_checkpoint(const std::string& path) {
  container::File f = container::read(path);
  nlohmann::json header = nlohmann::json::parse(f.header_json);
  if (header.value("kind", "") != "model")
    throw std::runtime_error("load_checkpoint: " + path + " is not a model file");
  ClassSet cs;
  cs.old_classes = header["class_set"]["old"].get<std::vector<int>>();
  cs.new_classes = header["class_set"]["new"].get<std::vector<int>>();
  DetectorModel model(header["arch"]["input_dim"].get<int>(),
                      header["arch"]["hidden"].get<std::vector<int>>(), cs, 0);
  for (auto& [name, t] : f.tensors) {
    if (!model.params.has(name))
      throw std::runtime_error("load_checkpoint: unexpected tensor " + name);
    auto& e = model.params.at(name);
    if (!e.value.same_shape(t))
      throw std::runtime_error("load_checkpoint: shape mismatch for " + name);
    e.value = std::move(t);
  }
  return model;
}

void save_fisher(const std::string& path, const FisherDiagonal& fisher) {
  nlohmann::json header = {{"kind", "fisher"}};
  std::vector<std::pair<std::string, const Tensor*>> tensors;
  for (const auto& [name, t] : fisher.fisher) tensors.emplace_back("F." + name, &t);
  for (const auto& [name, t] : fisher.anchor) tensors.emplace_back("A." + name, &t);
  container::write(path, header.dump(), tensors);
}

FisherDiagonal load_fisher(const std::string& path) {
  container::File f = container::read(path);
  nlohmann::json header = nlohmann::json::parse(f.header_json);
  if (header.value("kind", "") != "fisher")
    throw std::runtime_error("load_fisher: " + path + " is not a fisher file");
  FisherDiagonal fd;
  for (auto& [name, t] : f.tensors) {
    if (name.rfind("F.", 0) == 0)
      fd.fisher[name.substr(2)] = std::move(t);
    else if (name.rfind("A.", 0) == 0)
      fd.anchor[name.substr(2)] = std::move(t);
  }
  return fd;
}

namespace {

nlohmann::json world_to_json(const WorldSpec& w) {
  return {{"n_classes", w.n_classes},
          {"feature_dim", w.feature_dim},
          {"noise_sigma", w.noise_sigma},
          {"prototype_scale", w.prototype_scale},
          {"min_objects", w.min_objects},
          {"max_objects", w.max_objects},
          {"min_obj_size", w.min_obj_size},
          {"max_obj_size", w.max_obj_size},
          {"proposals_per_scene", w.proposals_per_scene},
          {"jitters_per_level", w.jitters_per_level},
          {"proposal_nms_iou", w.proposal_nms_iou},
          {"seed", w.seed},
          {"shifted_background", w.shifted_background},
          {"background_shift", w.background_shift}};
}

WorldSpec world_from_json(const nlohmann::json& j) {
  WorldSpec w;
  w.n_classes = j.at("n_classes");
  w.feature_dim = j.at("feature_dim");
  w.noise_sigma = j.at("noise_sigma");
  w.prototype_scale = j.at("prototype_scale");
  w.min_objects = j.at("min_objects");
  w.max_objects = j.at("max_objects");
  w.min_obj_size = j.at("min_obj_size");
  w.max_obj_size = j.at("max_obj_size");
  w.proposals_per_scene = j.at("proposals_per_scene");
  w.jitters_per_level = j.at("jitters_per_level");
  w.proposal_nms_iou = j.at("proposal_nms_iou");
  w.seed = j.at("seed");
  w.shifted_background = j.at("shifted_background");
  w.background_shift = j.at("background_shift");
  return w;
}

}  // namespace

void save_dataset(const std::string& path, const Dataset& ds) {
  nlohmann::json scenes = nlohmann::json::array();
  std::vector<Tensor> storage;
  storage.reserve(2 * ds.scenes.size());
  std::vector<std::pair<std::string, const Tensor*>> tensors;
  for (const Scene& s : ds.scenes) {
    nlohmann::json gt = nlohmann::json::array();
    for (const auto& g : s.gt)
      gt.push_back({g.class_id, g.box.x_min, g.box.y_min, g.box.x_max,
                    g.box.y_max});
    scenes.push_back({{"id", s.id}, {"gt", std::move(gt)}});

    const std::size_t n = s.proposals.size();
    const std::size_t d = n ? s.proposals[0].feature.size() : 0;
    Tensor boxes({n, 4});
    Tensor feats({n, d});
    for (std::size_t i = 0; i < n; ++i) {
      boxes(i, 0) = s.proposals[i].box.x_min;
      boxes(i, 1) = s.proposals[i].box.y_min;
      boxes(i, 2) = s.proposals[i].box.x_max;
      boxes(i, 3) = s.proposals[i].box.y_max;
      std::copy(s.proposals[i].feature.begin(), s.proposals[i].feature.end(),
                &feats.data[i * d]);
    }
    storage.push_back(std::move(boxes));
    storage.push_back(std::move(feats));
  }
  for (std::size_t i = 0; i < ds.scenes.size(); ++i) {
    const std::string base = "s" + std::to_string(ds.scenes[i].id);
    tensors.emplace_back(base + ".boxes", &storage[2 * i]);
    tensors.emplace_back(base + ".feat", &storage[2 * i + 1]);
  }
  nlohmann::json header = {{"kind", "dataset"},
                           {"world", world_to_json(ds.spec)},
                           {"eligible", ds.eligible_classes},
                           {"scenes", std::move(scenes)}};
  container::write(path, header.dump(), tensors);
}

Dataset load_dataset(const std::string& path) {
  container::File f = container::read(path);
  nlohmann::json header = nlohmann::json::parse(f.header_json);
  if (header.value("kind", "") != "dataset")
    throw std::runtime_error("load_dataset: " + path + " is not a dataset file");
  Dataset ds;
  ds.spec = world_from_json(header.at("world"));
  ds.eligible_classes = header.at("eligible").get<std::vector<int>>();

  std::map<std::string, Tensor> by_name;
  for (auto& [name, t] : f.tensors) by_name[name] = std::move(t);

  for (const auto& sj : header.at("scenes")) {
    Scene s;
    s.id = sj.at("id");
    for (const auto& g : sj.at("gt")) {
      GroundTruth gt;
      gt.class_id = g[0];
      gt.box = {g[1], g[2], g[3], g[4]};
      s.gt.push_back(gt);
    }
    const std::string base = "s" + std::to_string(s.id);
    const Tensor& boxes = by_name.at(base + ".boxes");
    const Tensor& feats = by_name.at(base + ".feat");
    const std::size_t n = boxes.rows(), d = feats.shape[1];
    for (std::size_t i = 0; i < n; ++i) {
      Proposal p;
      p.id = static_cast<int>(i);
      p.box = {boxes(i, 0), boxes(i, 1), boxes(i, 2), boxes(i, 3)};
      p.feature.assign(&feats.data[i * d], &feats.data[(i + 1) * d]);
      s.proposals.push_back(std::move(p));
    }
    ds.scenes.push_back(std::move(s));
  }
  return ds;
}

}  // namespace ildet
