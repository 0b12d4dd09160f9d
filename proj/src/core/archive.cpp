#include "core/archive.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>

#include "core/error.hpp"

namespace mduit {

static_assert(std::endian::native == std::endian::little,
              "archive IO assumes a little-endian host");

namespace {
constexpr char kMagic[8] = {'M', 'D', 'U', 'I', 'T', 'A', 'R', '1'};
}

const Tensor& TensorArchive::get(const std::string& name) const {
  for (const auto& [n, t] : tensors)
    if (n == name) return t;
  fail(ErrorCode::kParse, "archive has no tensor named '" + name + "'");
}

bool TensorArchive::contains(const std::string& name) const {
  for (const auto& [n, t] : tensors)
    if (n == name) return true;
  return false;
}

void write_archive(const std::filesystem::path& path,
                   const TensorArchive& archive) {
  nlohmann::json header;
  header["meta"] = archive.meta;
  header["tensors"] = nlohmann::json::array();
  std::uint64_t offset = 0;
  for (const auto& [name, t] : archive.tensors) {
    header["tensors"].push_back(
        {{"name", name}, {"shape", t.shape()}, {"offset", offset}});
    offset += t.size();
  }
  const std::string text = header.dump();
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) fail(ErrorCode::kIo, "cannot write " + tmp.string());
    out.write(kMagic, sizeof kMagic);
    const std::uint64_t n = text.size();
    out.write(reinterpret_cast<const char*>(&n), sizeof n);
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (const auto& [name, t] : archive.tensors)
      out.write(reinterpret_cast<const char*>(t.data()),
                static_cast<std::streamsize>(t.size() * sizeof(double)));
    if (!out) fail(ErrorCode::kIo, "failed writing " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) fail(ErrorCode::kIo, "cannot move archive into " + path.string());
}

TensorArchive read_archive(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::kIo, "cannot open archive " + path.string());
  char magic[8];
  in.read(magic, sizeof magic);
  if (!in || std::memcmp(magic, kMagic, sizeof magic) != 0)
    fail(ErrorCode::kParse, path.string() + " is not an mduit archive");
  std::uint64_t n = 0;
  in.read(reinterpret_cast<char*>(&n), sizeof n);
  if (!in || n > (1ULL << 30))
    fail(ErrorCode::kParse, "corrupt archive header in " + path.string());
  std::string text(n, '\0');
  in.read(text.data(), static_cast<std::streamsize>(n));
  if (!in) fail(ErrorCode::kParse, "truncated archive " + path.string());
  TensorArchive ar;
  try {
    const auto header = nlohmann::json::parse(text);
    ar.meta = header.at("meta");
    const auto payload_start = in.tellg();
    for (const auto& entry : header.at("tensors")) {
      const Shape shape = entry.at("shape").get<Shape>();
      const auto offset = entry.at("offset").get<std::uint64_t>();
      Tensor t(shape);
      in.seekg(payload_start +
               static_cast<std::streamoff>(offset * sizeof(double)));
      in.read(reinterpret_cast<char*>(t.data()),
              static_cast<std::streamsize>(t.size() * sizeof(double)));
      if (!in) fail(ErrorCode::kParse, "truncated archive " + path.string());
      ar.tensors.emplace_back(entry.at("name").get<std::string>(),
                              std::move(t));
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kParse,
         "bad archive header in " + path.string() + ": " + e.what());
  }
  return ar;
}

}  // namespace mduit
