#include "sigver/signature.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "sigver/errors.hpp"
#include "sigver/rng.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace sigver {

namespace {

constexpr double kTwoPi = 6.283185307179586476925;

std::string format_fixed6(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

double parse_double(const std::string& field, std::size_t line,
                    const fs::path& path) {
  std::size_t consumed = 0;
  double v = 0.0;
  try {
    v = std::stod(field, &consumed);
  } catch (const std::exception&) {
    throw ValidationError(path.string() + ": malformed line " +
                          std::to_string(line) + ": cannot parse '" + field +
                          "'");
  }
  if (consumed != field.size()) {
    throw ValidationError(path.string() + ": malformed line " +
                          std::to_string(line) + ": cannot parse '" + field +
                          "'");
  }
  return v;
}

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (;;) {
    const std::size_t pos = line.find('\t', start);
    if (pos == std::string::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
}

std::vector<std::string> split_whitespace(const std::string& line) {
  std::vector<std::string> out;
  std::istringstream in(line);
  std::string field;
  while (in >> field) out.push_back(field);
  return out;
}

std::string strip_cr(std::string line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
  return line;
}

RawSignature parse_canonical_tsv(const fs::path& path) {
  std::ifstream in(path);
  std::string line;
  if (!std::getline(in, line)) {
    throw ValidationError(path.string() + ": empty file");
  }
  if (strip_cr(line) != "x\ty\ttimestamp_ms\tpressure") {
    throw ValidationError(path.string() +
                          ": malformed header, expected "
                          "'x\\ty\\ttimestamp_ms\\tpressure'");
  }
  RawSignature sig;
  std::size_t row = 0;  // 1-based sample index, header excluded
  while (std::getline(in, line)) {
    line = strip_cr(line);
    if (line.empty()) continue;
    ++row;
    const auto fields = split_tabs(line);
    if (fields.size() != 4) {
      throw ValidationError(path.string() + ": malformed line " +
                            std::to_string(row) + ": expected 4 columns, got " +
                            std::to_string(fields.size()));
    }
    sig.x.push_back(parse_double(fields[0], row, path));
    sig.y.push_back(parse_double(fields[1], row, path));
    sig.timestamp_ms.push_back(parse_double(fields[2], row, path));
    sig.pressure.push_back(parse_double(fields[3], row, path));
  }
  return sig;
}

RawSignature parse_legacy7(const fs::path& path) {
  std::ifstream in(path);
  std::string line;
  if (!std::getline(in, line)) {
    throw ValidationError(path.string() + ": empty file");
  }
  const auto head = split_whitespace(strip_cr(line));
  if (head.size() != 1) {
    throw ValidationError(path.string() +
                          ": malformed count line, expected a single integer");
  }
  const long declared = std::strtol(head[0].c_str(), nullptr, 10);
  RawSignature sig;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    line = strip_cr(line);
    if (line.empty()) continue;
    ++row;
    const auto fields = split_whitespace(line);
    if (fields.size() != 7) {
      throw ValidationError(path.string() + ": malformed line " +
                            std::to_string(row) + ": expected 7 columns, got " +
                            std::to_string(fields.size()));
    }
    // X Y TIMESTAMP BUTTON_STATUS AZIMUTH ALTITUDE PRESSURE
    sig.x.push_back(parse_double(fields[0], row, path));
    sig.y.push_back(parse_double(fields[1], row, path));
    sig.timestamp_ms.push_back(parse_double(fields[2], row, path));
    const double button = parse_double(fields[3], row, path);
    const double pressure = parse_double(fields[6], row, path);
    sig.pressure.push_back(button == 0.0 ? 0.0 : pressure);
  }
  if (declared != static_cast<long>(row)) {
    throw ValidationError(path.string() + ": point count mismatch: header says " +
                          std::to_string(declared) + ", found " +
                          std::to_string(row));
  }
  return sig;
}

}  // namespace

std::string to_string(SampleLabel label) {
  return label == SampleLabel::genuine ? "genuine" : "skilled_forgery";
}

SampleLabel sample_label_from_string(const std::string& s) {
  if (s == "genuine") return SampleLabel::genuine;
  if (s == "skilled_forgery") return SampleLabel::skilled_forgery;
  throw ValidationError("unknown sample label '" + s + "'");
}

SignatureFormat signature_format_from_string(const std::string& s) {
  if (s == "canonical_tsv") return SignatureFormat::canonical_tsv;
  if (s == "legacy7") return SignatureFormat::legacy7;
  throw ValidationError("unknown signature format '" + s + "'");
}

void RawSignature::validate() const {
  const std::size_t n = x.size();
  if (y.size() != n || pressure.size() != n || timestamp_ms.size() != n) {
    throw ValidationError("signature channels have unequal lengths");
  }
  if (n < 2) {
    throw ValidationError("signature has fewer than 2 points");
  }
  for (std::size_t i = 1; i < n; ++i) {
    if (timestamp_ms[i] < timestamp_ms[i - 1]) {
      throw ValidationError("non-monotonic timestamp at line " +
                            std::to_string(i + 1));
    }
  }
  if (timestamp_ms.back() == timestamp_ms.front()) {
    throw ValidationError("signature has fewer than 2 distinct timestamps");
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (pressure[i] < 0.0) {
      throw ValidationError("negative pressure at line " +
                            std::to_string(i + 1));
    }
    if (!std::isfinite(x[i]) || !std::isfinite(y[i]) ||
        !std::isfinite(pressure[i]) || !std::isfinite(timestamp_ms[i])) {
      throw ValidationError("non-finite value at line " + std::to_string(i + 1));
    }
  }
}

RawSignature parse_signature(const fs::path& path, SignatureFormat format) {
  if (!fs::exists(path)) {
    throw IoError("no such file: " + path.string());
  }
  RawSignature sig = format == SignatureFormat::canonical_tsv
                         ? parse_canonical_tsv(path)
                         : parse_legacy7(path);
  sig.sample_id = path.stem().string();
  sig.validate();
  return sig;
}

void write_signature(const RawSignature& sig, const fs::path& path) {
  std::string out = "x\ty\ttimestamp_ms\tpressure\n";
  for (std::size_t i = 0; i < sig.size(); ++i) {
    out += format_fixed6(sig.x[i]);
    out += '\t';
    out += format_fixed6(sig.y[i]);
    out += '\t';
    out += format_fixed6(sig.timestamp_ms[i]);
    out += '\t';
    out += format_fixed6(sig.pressure[i]);
    out += '\n';
  }
  atomic_write_file(path, out);
}

UniformSignature resample_uniform(const RawSignature& sig, double rate_hz) {
  if (!(rate_hz > 0.0)) {
    throw ValidationError("resample rate must be positive");
  }
  sig.validate();
  const auto& t = sig.timestamp_ms;
  const double t0 = t.front();
  const double t1 = t.back();
  if (t1 == t0) {
    throw ValidationError("zero duration");
  }
  const auto n =
      static_cast<std::size_t>(std::floor((t1 - t0) * rate_hz / 1000.0)) + 1;

  UniformSignature out;
  out.rate_hz = rate_hz;
  out.x.resize(n);
  out.y.resize(n);
  out.pressure.resize(n);

  auto interpolate = [&](const std::vector<double>& v, double tq) {
    if (tq <= t0) return v.front();
    if (tq >= t1) return v.back();
    // Last index with t[i] <= tq; t[i+1] > tq, so the segment has width > 0.
    const auto it = std::upper_bound(t.begin(), t.end(), tq);
    const auto i = static_cast<std::size_t>(it - t.begin()) - 1;
    const double w = (tq - t[i]) / (t[i + 1] - t[i]);
    return v[i] + w * (v[i + 1] - v[i]);
  };

  for (std::size_t k = 0; k < n; ++k) {
    const double tq = t0 + (static_cast<double>(k) * 1000.0) / rate_hz;
    out.x[k] = interpolate(sig.x, tq);
    out.y[k] = interpolate(sig.y, tq);
    out.pressure[k] = interpolate(sig.pressure, tq);
  }
  return out;
}

SyntheticSubjectSpec make_subject_spec(std::uint64_t seed) {
  Rng rng(seed);
  SyntheticSubjectSpec spec;
  spec.seed = seed;
  spec.num_harmonics = 2 + static_cast<int>(rng.uniform_int(4));
  spec.duration_s = rng.uniform(2.0, 10.0);
  const double scale = rng.uniform(800.0, 1600.0);
  for (int h = 0; h < spec.num_harmonics; ++h) {
    spec.x_amplitude.push_back(scale * rng.uniform(0.25, 1.0) / (h + 1));
    spec.x_frequency_hz.push_back(rng.uniform(0.35, 2.2));
    spec.x_phase.push_back(rng.uniform(0.0, kTwoPi));
    spec.y_amplitude.push_back(scale * rng.uniform(0.25, 1.0) / (h + 1));
    spec.y_frequency_hz.push_back(rng.uniform(0.35, 2.2));
    spec.y_phase.push_back(rng.uniform(0.0, kTwoPi));
  }
  spec.x_center = rng.uniform(1000.0, 3000.0);
  spec.y_center = rng.uniform(1000.0, 3000.0);
  spec.pressure_frequency_hz = rng.uniform(0.3, 0.9);
  spec.pressure_phase = rng.uniform(0.0, kTwoPi);
  return spec;
}

namespace {

struct RenderOptions {
  double jitter_lo = 0.0;    // relative jitter magnitude bounds per parameter
  double jitter_hi = 0.05;
  bool signed_jitter_band = false;  // true: |delta| in [lo, hi], random sign
  double warp = 0.0;                // velocity-profile warp strength
  double noise_rel = 0.005;         // additive noise relative to amplitude sum
};

double jitter_factor(Rng& rng, const RenderOptions& opt) {
  if (opt.signed_jitter_band) {
    const double mag = rng.uniform(opt.jitter_lo, opt.jitter_hi);
    return 1.0 + (rng.bernoulli(0.5) ? mag : -mag);
  }
  return 1.0 + rng.uniform(-opt.jitter_hi, opt.jitter_hi);
}

RawSignature render_signature(const SyntheticSubjectSpec& spec,
                              const RenderOptions& opt, std::uint64_t seed) {
  Rng rng(seed);
  const int harmonics = spec.num_harmonics;

  std::vector<double> xa(harmonics), xf(harmonics), xp(harmonics);
  std::vector<double> ya(harmonics), yf(harmonics), yp(harmonics);
  for (int h = 0; h < harmonics; ++h) {
    xa[h] = spec.x_amplitude[h] * jitter_factor(rng, opt);
    xf[h] = spec.x_frequency_hz[h] * jitter_factor(rng, opt);
    xp[h] = spec.x_phase[h] * jitter_factor(rng, opt);
    ya[h] = spec.y_amplitude[h] * jitter_factor(rng, opt);
    yf[h] = spec.y_frequency_hz[h] * jitter_factor(rng, opt);
    yp[h] = spec.y_phase[h] * jitter_factor(rng, opt);
  }
  const double pressure_freq =
      spec.pressure_frequency_hz * jitter_factor(rng, opt);
  const double pressure_phase = spec.pressure_phase * jitter_factor(rng, opt);

  // Monotone endpoint-preserving warp of normalized time; derivative stays
  // positive because |w1| + 2|w2| < 1.
  double w1 = 0.0, w2 = 0.0;
  if (opt.warp > 0.0) {
    const double mag = rng.uniform(0.5 * opt.warp, opt.warp);
    w1 = rng.bernoulli(0.5) ? mag : -mag;
    const double mag2 = rng.uniform(0.1 * opt.warp, 0.3 * opt.warp);
    w2 = rng.bernoulli(0.5) ? mag2 : -mag2;
  }

  const double duration = spec.duration_s;
  const auto n = static_cast<std::size_t>(std::lround(duration * 100.0)) + 1;
  double noise_x = 0.0, noise_y = 0.0;
  for (int h = 0; h < harmonics; ++h) {
    noise_x += std::abs(xa[h]);
    noise_y += std::abs(ya[h]);
  }
  noise_x *= opt.noise_rel;
  noise_y *= opt.noise_rel;

  // Pen-up gaps: 1-3 intervals where pressure drops to zero.
  const int gaps = 1 + static_cast<int>(rng.uniform_int(3));
  std::vector<std::pair<double, double>> gap_bounds;
  for (int g = 0; g < gaps; ++g) {
    const double center = rng.uniform(0.1 * duration, 0.9 * duration);
    const double width = rng.uniform(0.05, 0.2);
    gap_bounds.emplace_back(center - 0.5 * width, center + 0.5 * width);
  }

  RawSignature sig;
  sig.x.resize(n);
  sig.y.resize(n);
  sig.pressure.resize(n);
  sig.timestamp_ms.resize(n);
  for (std::size_t k = 0; k < n; ++k) {
    const double s = static_cast<double>(k) / static_cast<double>(n - 1);
    const double warped =
        s + (w1 * std::sin(kTwoPi * s) + w2 * std::sin(2.0 * kTwoPi * s)) /
                kTwoPi;
    const double ts = warped * duration;  // seconds on the warped axis
    double vx = spec.x_center, vy = spec.y_center;
    for (int h = 0; h < harmonics; ++h) {
      vx += xa[h] * std::sin(kTwoPi * xf[h] * ts + xp[h]);
      vy += ya[h] * std::sin(kTwoPi * yf[h] * ts + yp[h]);
    }
    sig.x[k] = vx + rng.normal(0.0, noise_x);
    sig.y[k] = vy + rng.normal(0.0, noise_y);

    const double t_real = s * duration;
    double p =
        0.55 + 0.35 * std::sin(kTwoPi * pressure_freq * t_real + pressure_phase);
    p = std::clamp(p, 0.05, 1.0);
    for (const auto& [lo, hi] : gap_bounds) {
      if (t_real >= lo && t_real <= hi) {
        p = 0.0;
        break;
      }
    }
    sig.pressure[k] = p;
    sig.timestamp_ms[k] = static_cast<double>(k) * 10.0;
  }
  return sig;
}

std::string index_id(const char* prefix, int i) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%s%03d", prefix, i);
  return buf;
}

}  // namespace

std::vector<RawSignature> generate_synthetic_dataset(
    const SyntheticDatasetOptions& options) {
  if (options.num_subjects < 1 || options.genuine_per_subject < 1 ||
      options.forgeries_per_subject < 1) {
    throw ValidationError("synthetic dataset counts must be >= 1");
  }
  std::vector<RawSignature> out;
  out.reserve(static_cast<std::size_t>(options.num_subjects) *
              (options.genuine_per_subject + options.forgeries_per_subject));
  for (int s = 0; s < options.num_subjects; ++s) {
    const auto spec =
        make_subject_spec(derive_seed(options.seed, 1, static_cast<std::uint64_t>(s)));
    const std::string subject = index_id("s", s);

    RenderOptions genuine_opt;
    genuine_opt.jitter_hi = 0.05;
    for (int g = 0; g < options.genuine_per_subject; ++g) {
      RawSignature sig = render_signature(
          spec, genuine_opt,
          derive_seed(options.seed, 2, static_cast<std::uint64_t>(s),
                      static_cast<std::uint64_t>(g)));
      sig.subject_id = subject;
      char buf[32];
      std::snprintf(buf, sizeof(buf), "%s_g%02d", subject.c_str(), g);
      sig.sample_id = buf;
      sig.label = SampleLabel::genuine;
      out.push_back(std::move(sig));
    }

    RenderOptions forgery_opt;
    forgery_opt.jitter_lo = 0.15;
    forgery_opt.jitter_hi = 0.30;
    forgery_opt.signed_jitter_band = true;
    forgery_opt.warp = 0.5;
    for (int f = 0; f < options.forgeries_per_subject; ++f) {
      RawSignature sig = render_signature(
          spec, forgery_opt,
          derive_seed(options.seed, 3, static_cast<std::uint64_t>(s),
                      static_cast<std::uint64_t>(f)));
      sig.subject_id = subject;
      char buf[32];
      std::snprintf(buf, sizeof(buf), "%s_f%02d", subject.c_str(), f);
      sig.sample_id = buf;
      sig.label = SampleLabel::skilled_forgery;
      out.push_back(std::move(sig));
    }
  }
  return out;
}

std::vector<ManifestEntry> read_dataset_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest: " + path.string());
  json doc;
  try {
    in >> doc;
  } catch (const json::exception& e) {
    throw ValidationError("invalid manifest JSON in " + path.string() + ": " +
                          e.what());
  }
  if (!doc.is_array()) {
    throw ValidationError("manifest must be a JSON array: " + path.string());
  }
  std::vector<ManifestEntry> out;
  for (const auto& item : doc) {
    ManifestEntry e;
    e.subject_id = item.at("subject_id").get<std::string>();
    e.sample_id = item.at("sample_id").get<std::string>();
    e.label = sample_label_from_string(item.at("label").get<std::string>());
    e.path = item.at("path").get<std::string>();
    out.push_back(std::move(e));
  }
  return out;
}

void write_dataset_manifest(const std::vector<ManifestEntry>& entries,
                            const fs::path& path) {
  json doc = json::array();
  for (const auto& e : entries) {
    doc.push_back({{"subject_id", e.subject_id},
                   {"sample_id", e.sample_id},
                   {"label", to_string(e.label)},
                   {"path", e.path}});
  }
  atomic_write_file(path, doc.dump(2) + "\n");
}

Dataset Dataset::from_manifest(const fs::path& manifest_path) {
  const auto entries = read_dataset_manifest(manifest_path);
  const fs::path base = manifest_path.parent_path();
  Dataset ds;
  for (const auto& e : entries) {
    fs::path p = e.path;
    if (p.is_relative()) p = base / p;
    RawSignature sig = parse_signature(p, SignatureFormat::canonical_tsv);
    sig.subject_id = e.subject_id;
    sig.sample_id = e.sample_id;
    sig.label = e.label;
    ds.signatures.push_back(std::move(sig));
  }
  return ds;
}

Dataset Dataset::from_signatures(std::vector<RawSignature> sigs) {
  Dataset ds;
  ds.signatures = std::move(sigs);
  return ds;
}

std::set<std::string> Dataset::subjects() const {
  std::set<std::string> out;
  for (const auto& s : signatures) out.insert(s.subject_id);
  return out;
}

std::vector<int> Dataset::genuine_indices(const std::string& subject) const {
  std::vector<int> out;
  for (std::size_t i = 0; i < signatures.size(); ++i) {
    if (signatures[i].subject_id == subject &&
        signatures[i].label == SampleLabel::genuine) {
      out.push_back(static_cast<int>(i));
    }
  }
  return out;
}

std::vector<int> Dataset::forgery_indices(const std::string& subject) const {
  std::vector<int> out;
  for (std::size_t i = 0; i < signatures.size(); ++i) {
    if (signatures[i].subject_id == subject &&
        signatures[i].label == SampleLabel::skilled_forgery) {
      out.push_back(static_cast<int>(i));
    }
  }
  return out;
}

void atomic_write_file(const fs::path& path, const std::string& content) {
  if (path.has_parent_path()) {
    fs::create_directories(path.parent_path());
  }
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write: " + tmp.string());
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw IoError("write failed: " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw IoError("rename failed: " + path.string() + ": " + ec.message());
}

}  // namespace sigver
