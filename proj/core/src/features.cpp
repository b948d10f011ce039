#include "sigver/features.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "sigver/errors.hpp"

namespace sigver {

namespace {

constexpr double kPi = 3.14159265358979323846;

// Wraps an angle difference into (-pi, pi].
double wrap_angle(double d) {
  d = std::fmod(d, 2.0 * kPi);
  if (d <= -kPi) d += 2.0 * kPi;
  if (d > kPi) d -= 2.0 * kPi;
  return d;
}

using Vec = Eigen::VectorXd;

Vec central_diff(const Vec& f) {
  const Eigen::Index n = f.size();
  Vec d(n);
  d(0) = f(1) - f(0);
  d(n - 1) = f(n - 1) - f(n - 2);
  for (Eigen::Index i = 1; i + 1 < n; ++i) d(i) = 0.5 * (f(i + 1) - f(i - 1));
  return d;
}

Vec central_diff_angular(const Vec& f) {
  const Eigen::Index n = f.size();
  Vec d(n);
  d(0) = wrap_angle(f(1) - f(0));
  d(n - 1) = wrap_angle(f(n - 1) - f(n - 2));
  for (Eigen::Index i = 1; i + 1 < n; ++i) {
    d(i) = 0.5 * wrap_angle(f(i + 1) - f(i - 1));
  }
  return d;
}

}  // namespace

FeatureSequence extract_time_functions(const UniformSignature& sig) {
  const auto n = static_cast<Eigen::Index>(sig.size());
  if (n < 7) {
    throw ValidationError("signature too short");
  }
  const double eps = kFeatureEpsilon;

  Vec x = Eigen::Map<const Vec>(sig.x.data(), n);
  Vec y = Eigen::Map<const Vec>(sig.y.data(), n);
  Vec p = Eigen::Map<const Vec>(sig.pressure.data(), n);

  const Vec dx = central_diff(x);
  const Vec dy = central_diff(y);
  const Vec dp = central_diff(p);

  Vec theta(n), v(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    theta(i) = std::atan2(dy(i), dx(i));
    v(i) = std::hypot(dx(i), dy(i));
  }
  const Vec dtheta = central_diff_angular(theta);
  const Vec dv = central_diff(v);

  Vec rho(n), a(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    rho(i) = std::log(v(i) / (std::abs(dtheta(i)) + eps) + eps);
    a(i) = std::hypot(dv(i), v(i) * dtheta(i));
  }
  const Vec drho = central_diff(rho);
  const Vec da = central_diff(a);
  const Vec ddx = central_diff(dx);
  const Vec ddy = central_diff(dy);

  // Consecutive-sample direction angle; the first sample replicates the
  // first defined value so the channel keeps length T.
  Vec alpha(n);
  for (Eigen::Index i = 1; i < n; ++i) {
    alpha(i) = std::atan2(y(i) - y(i - 1), x(i) - x(i - 1));
  }
  alpha(0) = alpha(1);
  const Vec dalpha = central_diff_angular(alpha);

  auto window_bounds = [n](Eigen::Index i, Eigen::Index half) {
    return std::pair<Eigen::Index, Eigen::Index>{std::max<Eigen::Index>(0, i - half),
                                                 std::min(n - 1, i + half)};
  };

  Vec v_ratio(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto [lo, hi] = window_bounds(i, 2);
    double vmin = v(lo), vmax = v(lo);
    for (Eigen::Index k = lo + 1; k <= hi; ++k) {
      vmin = std::min(vmin, v(k));
      vmax = std::max(vmax, v(k));
    }
    v_ratio(i) = vmin / (vmax + eps);
  }

  // Stroke length over the window's spatial extent (largest pairwise point
  // distance), so the ratio is rigid-motion invariant.
  auto path_ratio = [&](Eigen::Index i, Eigen::Index half) {
    const auto [lo, hi] = window_bounds(i, half);
    double length = 0.0;
    for (Eigen::Index k = lo + 1; k <= hi; ++k) {
      length += std::hypot(x(k) - x(k - 1), y(k) - y(k - 1));
    }
    double extent = 0.0;
    for (Eigen::Index u = lo; u <= hi; ++u) {
      for (Eigen::Index w = u + 1; w <= hi; ++w) {
        extent = std::max(extent, std::hypot(x(w) - x(u), y(w) - y(u)));
      }
    }
    return length / (extent + eps);
  };

  Vec ratio5(n), ratio7(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    ratio5(i) = path_ratio(i, 2);
    ratio7(i) = path_ratio(i, 3);
  }

  FeatureSequence fs;
  fs.values.resize(n, kFeatureCount);
  fs.values.col(0) = x;
  fs.values.col(1) = y;
  fs.values.col(2) = p;
  fs.values.col(3) = theta;
  fs.values.col(4) = v;
  fs.values.col(5) = rho;
  fs.values.col(6) = a;
  fs.values.col(7) = dx;
  fs.values.col(8) = dy;
  fs.values.col(9) = dp;
  fs.values.col(10) = dtheta;
  fs.values.col(11) = dv;
  fs.values.col(12) = drho;
  fs.values.col(13) = da;
  fs.values.col(14) = ddx;
  fs.values.col(15) = ddy;
  fs.values.col(16) = v_ratio;
  fs.values.col(17) = alpha;
  fs.values.col(18) = dalpha;
  fs.values.col(19) = alpha.array().sin();
  fs.values.col(20) = alpha.array().cos();
  fs.values.col(21) = ratio5;
  fs.values.col(22) = ratio7;

  if (!fs.values.allFinite()) {
    throw ValidationError("feature extraction produced a non-finite value");
  }
  return fs;
}

FeatureSequence znormalize_channels(const FeatureSequence& fs) {
  const Eigen::Index n = fs.values.rows();
  FeatureSequence out;
  out.values.resizeLike(fs.values);
  for (Eigen::Index c = 0; c < fs.values.cols(); ++c) {
    const double mean = fs.values.col(c).mean();
    const double var =
        (fs.values.col(c).array() - mean).square().sum() / static_cast<double>(n);
    const double stddev = std::sqrt(var);
    if (stddev < 1e-8) {
      out.values.col(c).setZero();
    } else {
      out.values.col(c) = (fs.values.col(c).array() - mean) / stddev;
    }
  }
  return out;
}

FeatureSequence features_of(const RawSignature& sig, double rate_hz) {
  return znormalize_channels(
      extract_time_functions(resample_uniform(sig, rate_hz)));
}

void write_feature_tsv(const FeatureSequence& fs,
                       const std::filesystem::path& path) {
  std::string out;
  for (int c = 0; c < kFeatureCount; ++c) {
    if (c > 0) out += '\t';
    out += kFeatureChannelNames[c];
  }
  out += '\n';
  char buf[64];
  for (Eigen::Index i = 0; i < fs.values.rows(); ++i) {
    for (Eigen::Index c = 0; c < fs.values.cols(); ++c) {
      std::snprintf(buf, sizeof(buf), "%.9g", fs.values(i, c));
      if (c > 0) out += '\t';
      out += buf;
    }
    out += '\n';
  }
  atomic_write_file(path, out);
}

}  // namespace sigver
