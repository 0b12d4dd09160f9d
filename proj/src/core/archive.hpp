#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "core/tensor.hpp"

namespace mduit {

// Binary container for named float64 tensors plus a JSON metadata block.
//
//   bytes 0..7   magic "MDUITAR1"
//   u64 LE       header length N
//   N bytes      UTF-8 JSON: {"meta": {...},
//                "tensors": [{"name", "shape", "offset"}, ...]}
//   payload      little-endian IEEE-754 doubles; offset counts doubles
struct TensorArchive {
  nlohmann::json meta = nlohmann::json::object();
  std::vector<std::pair<std::string, Tensor>> tensors;

  const Tensor& get(const std::string& name) const;
  bool contains(const std::string& name) const;
};

void write_archive(const std::filesystem::path& path,
                   const TensorArchive& archive);
TensorArchive read_archive(const std::filesystem::path& path);

}  // namespace mduit
