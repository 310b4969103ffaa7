#include "loglab/encodings.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "loglab/error.hpp"

namespace loglab::encodings {

std::string to_string(EncodingMode mode) {
  switch (mode) {
    case EncodingMode::none: return "none";
    case EncodingMode::positional: return "positional";
    case EncodingMode::rtee: return "rtee";
    case EncodingMode::time2vec: return "time2vec";
  }
  return "?";
}

EncodingMode mode_from_string(const std::string& name) {
  if (name == "none") return EncodingMode::none;
  if (name == "positional") return EncodingMode::positional;
  if (name == "rtee") return EncodingMode::rtee;
  if (name == "time2vec") return EncodingMode::time2vec;
  throw ConfigError("unknown encoding '" + name + "' (expected none|positional|rtee|time2vec)");
}

nn::Matrix sinusoidal_encode(std::span<const double> values, std::size_t d_model, double base) {
  if (d_model == 0 || d_model % 2 != 0)
    throw ConfigError("sinusoidal encoding needs an even d_model, got " + std::to_string(d_model));
  nn::Matrix out(static_cast<Eigen::Index>(values.size()), static_cast<Eigen::Index>(d_model));
  const auto d = static_cast<double>(d_model);
  for (std::size_t i = 0; i < d_model / 2; ++i) {
    const double denom = std::pow(base, static_cast<double>(2 * i) / d);
    for (std::size_t p = 0; p < values.size(); ++p) {
      const double angle = values[p] / denom;
      out(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(2 * i)) = std::sin(angle);
      out(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(2 * i + 1)) = std::cos(angle);
    }
  }
  return out;
}

nn::Matrix rtee_encode(std::span<const double> elapsed, std::size_t d_model) {
  return sinusoidal_encode(elapsed, d_model);
}

Time2VecParams init_time2vec(std::size_t d, double median_positive_elapsed, Rng& rng) {
  if (d == 0) throw ConfigError("time2vec dimension must be positive");
  const double scale = median_positive_elapsed > 0.0 ? 1.0 / median_positive_elapsed : 1.0;
  Time2VecParams p{nn::Matrix(1, static_cast<Eigen::Index>(d)), nn::Matrix(1, static_cast<Eigen::Index>(d))};
  for (Eigen::Index i = 0; i < p.omega.cols(); ++i) p.omega(0, i) = rng.uniform(-1.0, 1.0) * scale;
  for (Eigen::Index i = 0; i < p.phi.cols(); ++i) p.phi(0, i) = rng.uniform(-std::numbers::pi, std::numbers::pi);
  return p;
}

nn::Matrix time2vec_encode(std::span<const double> tau, const Time2VecParams& params) {
  if (params.omega.rows() != 1 || params.phi.rows() != 1 || params.omega.cols() != params.phi.cols())
    throw ConfigError("time2vec omega and phi must both be 1 x d");
  nn::Matrix out(static_cast<Eigen::Index>(tau.size()), params.omega.cols());
  for (std::size_t r = 0; r < tau.size(); ++r) {
    const auto row = static_cast<Eigen::Index>(r);
    for (Eigen::Index i = 0; i < out.cols(); ++i) {
      const double arg = params.omega(0, i) * tau[r] + params.phi(0, i);
      out(row, i) = i == 0 ? arg : std::sin(arg);
    }
  }
  return out;
}

double median_positive(std::span<const std::int64_t> elapsed) {
  std::vector<std::int64_t> positive;
  for (const auto e : elapsed)
    if (e > 0) positive.push_back(e);
  if (positive.empty()) return 1.0;
  const std::size_t mid = positive.size() / 2;
  std::nth_element(positive.begin(), positive.begin() + static_cast<std::ptrdiff_t>(mid), positive.end());
  return static_cast<double>(positive[mid]);
}

}  // namespace loglab::encodings
