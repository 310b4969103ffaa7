#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "loglab/rng.hpp"
#include "loglab/tensor.hpp"

namespace loglab::encodings {

enum class EncodingMode { none, positional, rtee, time2vec };

std::string to_string(EncodingMode mode);
/// Throws ConfigError on an unknown name.
EncodingMode mode_from_string(const std::string& name);

inline constexpr double kSinusoidBase = 10000.0;

/// out[p][2i] = sin(v_p / base^(2i/d)), out[p][2i+1] = cos(v_p / base^(2i/d)).
/// Throws ConfigError when d_model is odd or zero.
nn::Matrix sinusoidal_encode(std::span<const double> values, std::size_t d_model, double base = kSinusoidBase);

/// Sinusoidal encoding evaluated at elapsed seconds (-1 marks special tokens).
nn::Matrix rtee_encode(std::span<const double> elapsed, std::size_t d_model);

/// Trainable Time2Vec parameters, both of length d (= k + 1).
struct Time2VecParams {
  nn::Matrix omega;  // 1 x d
  nn::Matrix phi;    // 1 x d
};

/// omega ~ U(-1,1) / median_positive_elapsed, phi ~ U(-pi, pi).
Time2VecParams init_time2vec(std::size_t d, double median_positive_elapsed, Rng& rng);

/// Plain evaluation: column 0 = omega0*tau + phi0, column i = sin(omega_i*tau + phi_i).
nn::Matrix time2vec_encode(std::span<const double> tau, const Time2VecParams& params);

/// Median of the strictly positive elapsed values, or 1 when there are none.
double median_positive(std::span<const std::int64_t> elapsed);

}  // namespace loglab::encodings
