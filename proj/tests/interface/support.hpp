#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <utility>

#include <unistd.h>

// Helpers for tests that only see the public header and the CLI binary.
namespace iface {

class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("mduit_iface_" + tag + "_" + std::to_string(::getpid()) + "_" +
             std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::string operator/(const std::string& name) const { return (path_ / name).string(); }

 private:
  std::filesystem::path path_;
};

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Width and height from the IHDR chunk.
inline std::pair<int, int> png_size(const std::filesystem::path& p) {
  const std::string b = read_file(p);
  if (b.size() < 24 || b.compare(1, 3, "PNG") != 0) return {-1, -1};
  auto be32 = [&](std::size_t o) {
    return (static_cast<std::uint32_t>(static_cast<unsigned char>(b[o])) << 24) |
           (static_cast<std::uint32_t>(static_cast<unsigned char>(b[o + 1])) << 16) |
           (static_cast<std::uint32_t>(static_cast<unsigned char>(b[o + 2])) << 8) |
           static_cast<std::uint32_t>(static_cast<unsigned char>(b[o + 3]));
  };
  return {static_cast<int>(be32(16)), static_cast<int>(be32(20))};
}

}  // namespace iface
