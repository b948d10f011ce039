#pragma once

#include <cstdint>
#include <filesystem>
#include <set>
#include <string>
#include <vector>

namespace sigver {

enum class SampleLabel { genuine, skilled_forgery };

std::string to_string(SampleLabel label);
SampleLabel sample_label_from_string(const std::string& s);

// One acquired signature: pen-tablet channels plus identity metadata.
// Pressure 0 encodes pen-up; timestamps are milliseconds, non-decreasing.
struct RawSignature {
  std::string subject_id;
  std::string sample_id;
  SampleLabel label = SampleLabel::genuine;
  std::vector<double> x;
  std::vector<double> y;
  std::vector<double> pressure;
  std::vector<double> timestamp_ms;

  std::size_t size() const { return x.size(); }

  // Throws ValidationError on any invariant violation. Line numbers in
  // diagnostics are 1-based sample indices.
  void validate() const;
};

enum class SignatureFormat { canonical_tsv, legacy7 };

SignatureFormat signature_format_from_string(const std::string& s);

RawSignature parse_signature(const std::filesystem::path& path,
                             SignatureFormat format);
// Canonical TSV, fields rendered with 6 decimal places.
void write_signature(const RawSignature& sig,
                     const std::filesystem::path& path);

inline constexpr double kDefaultRateHz = 100.0;

// Signature on a uniform time grid (fixed sampling rate, unit step between
// consecutive samples as far as downstream consumers are concerned).
struct UniformSignature {
  std::vector<double> x;
  std::vector<double> y;
  std::vector<double> pressure;
  double rate_hz = kDefaultRateHz;

  std::size_t size() const { return x.size(); }
};

// Linear interpolation of x/y/pressure onto a uniform grid spanning
// [t_first, t_last]; output length = floor((t_last-t_first)/1000*rate) + 1.
UniformSignature resample_uniform(const RawSignature& sig, double rate_hz);

// Deterministic per-subject generator parameters: the same spec always
// renders identical signals.
struct SyntheticSubjectSpec {
  std::uint64_t seed = 0;
  int num_harmonics = 3;  // in [2, 5]
  double duration_s = 4.0;  // in [2, 10]
  std::vector<double> x_amplitude, x_frequency_hz, x_phase;
  std::vector<double> y_amplitude, y_frequency_hz, y_phase;
  double x_center = 0.0, y_center = 0.0;
  double pressure_frequency_hz = 0.5, pressure_phase = 0.0;
};

SyntheticSubjectSpec make_subject_spec(std::uint64_t seed);

struct SyntheticDatasetOptions {
  int num_subjects = 1;
  int genuine_per_subject = 1;
  int forgeries_per_subject = 1;
  std::uint64_t seed = 0;
};

// Sum-of-sinusoid subjects; genuine samples carry small parameter jitter,
// skilled forgeries large jitter plus a time-warped velocity profile.
std::vector<RawSignature> generate_synthetic_dataset(
    const SyntheticDatasetOptions& options);

struct ManifestEntry {
  std::string subject_id;
  std::string sample_id;
  SampleLabel label = SampleLabel::genuine;
  std::string path;  // relative paths resolve against the manifest directory
};

std::vector<ManifestEntry> read_dataset_manifest(
    const std::filesystem::path& path);
void write_dataset_manifest(const std::vector<ManifestEntry>& entries,
                            const std::filesystem::path& path);

// In-memory dataset: signatures plus subject bookkeeping.
struct Dataset {
  std::vector<RawSignature> signatures;

  static Dataset from_manifest(const std::filesystem::path& manifest_path);
  static Dataset from_signatures(std::vector<RawSignature> sigs);

  std::set<std::string> subjects() const;
  std::vector<int> genuine_indices(const std::string& subject) const;
  std::vector<int> forgery_indices(const std::string& subject) const;
};

// Writes content to path atomically (temp file + rename).
void atomic_write_file(const std::filesystem::path& path,
                       const std::string& content);

}  // namespace sigver
