#pragma once

#include <Eigen/Core>
#include <array>
#include <filesystem>
#include <string_view>

#include "sigver/signature.hpp"

namespace sigver {

inline constexpr int kFeatureCount = 23;

// Epsilon guard used in every division and logarithm of the feature
// definitions.
inline constexpr double kFeatureEpsilon = 1e-8;

// Fixed channel order; this enumeration is the repo's feature contract.
//  1 x, 2 y, 3 p,
//  4 theta = atan2(dy, dx), 5 v = speed, 6 rho = ln(v/(|dtheta|+eps)+eps),
//  7 a = sqrt(dv^2 + (v*dtheta)^2),
//  8-14 first derivatives of channels 1-7,
//  15 ddx, 16 ddy,
//  17 min/max speed ratio over a centered 5-sample window,
//  18 alpha = consecutive-sample direction angle, 19 dalpha,
//  20 sin(alpha), 21 cos(alpha),
//  22 stroke length over window extent, 5-sample window,
//  23 the same ratio over a 7-sample window.
inline constexpr std::array<std::string_view, kFeatureCount>
    kFeatureChannelNames = {
        "x",           "y",          "p",           "theta",
        "v",           "rho",        "a",           "dx",
        "dy",          "dp",         "dtheta",      "dv",
        "drho",        "da",         "ddx",         "ddy",
        "v_ratio_w5",  "alpha",      "dalpha",      "sin_alpha",
        "cos_alpha",   "path_ratio_w5", "path_ratio_w7"};

struct FeatureSequence {
  Eigen::MatrixXd values;  // T x 23, columns in kFeatureChannelNames order

  Eigen::Index length() const { return values.rows(); }
};

// Derivatives use the central stencil (f[n+1]-f[n-1])/2 with one-sided
// differences at the endpoints; angular differences wrap into (-pi, pi].
// Requires length >= 7 (the largest window).
FeatureSequence extract_time_functions(const UniformSignature& sig);

// Per-channel z-normalization with population statistics; channels whose
// standard deviation falls below 1e-8 become all zeros.
FeatureSequence znormalize_channels(const FeatureSequence& fs);

// resample -> extract -> znormalize, the standard preprocessing path.
FeatureSequence features_of(const RawSignature& sig,
                            double rate_hz = kDefaultRateHz);

void write_feature_tsv(const FeatureSequence& fs,
                       const std::filesystem::path& path);

}  // namespace sigver
