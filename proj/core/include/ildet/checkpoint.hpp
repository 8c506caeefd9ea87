#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "ildet/losses.hpp"
#include "ildet/model.hpp"
#include "ildet/tensor.hpp"

namespace ildet {

/// ILDET1 container: magic "ILDET1", version u32 LE, length-prefixed UTF-8
/// JSON header carrying metadata and a tensor manifest (name, shape, byte
/// offset into the payload), then raw little-endian float64 payloads.
/// Round-trips are bit-exact.
namespace container {

struct File {
  std::string header_json;
  std::vector<std::pair<std::string, Tensor>> tensors;
};

void write(const std::string& path, const std::string& header_json,
           const std::vector<std::pair<std::string, const Tensor*>>& tensors);
File read(const std::string& path);

}  // namespace container

void save_checkpoint(const std::string& path, const DetectorModel& model);
DetectorModel load_checkpoint(const std::string& path);

void save_fisher(const std::string& path, const FisherDiagonal& fisher);
FisherDiagonal load_fisher(const std::string& path);

}  // namespace ildet
