#pragma once

#include <filesystem>
#include <string>

#include "loglab/rng.hpp"
#include "loglab/tensor.hpp"

namespace test_support {

inline loglab::nn::Matrix random_matrix(std::size_t rows, std::size_t cols, loglab::Rng& rng, double scale = 1.0) {
  loglab::nn::Matrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = scale * rng.normal();
  return m;
}

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("loglab_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace test_support
