#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>

#include "lfp/render.hpp"

namespace lfp::test {

inline Frame random_frame(std::mt19937_64& gen, int w, int h) {
  Frame f(w, h);
  for (auto& b : f.pixels())
    b = static_cast<std::uint8_t>(gen() & 0xff);
  return f;
}

// Fresh empty directory under the system temp dir, removed on destruction.
class TempDir {
public:
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            ("lfp_" + tag + "_" + std::to_string(rd()) + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& s) const { return path_ / s; }

private:
  std::filesystem::path path_;
};

} // namespace lfp::test
