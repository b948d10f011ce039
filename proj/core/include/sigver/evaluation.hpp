#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "sigver/checkpoint.hpp"
#include "sigver/dtw.hpp"
#include "sigver/training_pairs.hpp"

namespace sigver {

// Verification scores bucketed by comparison type; all scores in (0,1).
struct ScoreSet {
  std::vector<double> genuine;
  std::vector<double> impostor_random;
  std::vector<double> impostor_skilled;

  std::vector<double> impostor_pooled() const;
};

struct EerResult {
  double eer = 0.0;
  double threshold = 0.0;
};

// Threshold sweep over all distinct scores plus +/- infinity. At threshold
// t: FAR = fraction of impostor >= t, FRR = fraction of genuine < t. Returns
// (FAR+FRR)/2 at the threshold minimizing |FAR-FRR|, tie-break lowest
// threshold.
EerResult compute_eer(const std::vector<double>& genuine,
                      const std::vector<double>& impostor);

struct DetPoint {
  double far = 0.0;
  double frr = 0.0;
  double threshold = 0.0;
};

// (FAR, FRR) at every distinct finite score, threshold-ascending; FAR is
// non-increasing and FRR non-decreasing along the curve.
struct DetCurve {
  std::vector<DetPoint> points;
};

DetCurve det_curve(const std::vector<double>& genuine,
                   const std::vector<double>& impostor);

void write_det_csv(const DetCurve& curve, const std::filesystem::path& path);
void write_det_svg(const DetCurve& random_curve, const DetCurve& skilled_curve,
                   const DetCurve& overall_curve,
                   const std::filesystem::path& path);

// Symmetrized score (mean of both argument orders) per comparison, routed
// into the ScoreSet bucket by label. Unlabeled comparisons are rejected.
ScoreSet compute_scores(const nn::SiameseModel<float>& model,
                        const Dataset& dataset,
                        const std::vector<PairSpec>& comparisons,
                        PairAligner& aligner);

struct ProtocolReport {
  EerResult random;
  EerResult skilled;
  EerResult overall;
  DetCurve det_random;
  DetCurve det_skilled;
  DetCurve det_overall;
  std::size_t genuine_count = 0;
  std::size_t impostor_random_count = 0;
  std::size_t impostor_skilled_count = 0;
  // Overall pools both impostor lists before the sweep.
  std::string impostor_pooling = "pooled";
};

ProtocolReport report_from_scores(const ScoreSet& scores);

std::string protocol_report_to_json(const ProtocolReport& report);
ProtocolReport protocol_report_from_json(const std::string& text);

// One comparison read from a comparison manifest. Subject ids are optional;
// the subject-disjointness guard applies whenever they are known.
struct Comparison {
  std::string enrolled_path;
  std::string questioned_path;
  PairLabel label = PairLabel::unlabeled;
  std::string enrolled_subject;
  std::string questioned_subject;
};

// Accepts either a comparison manifest ([{enrolled_path, questioned_path,
// label, ...}]) or a dataset manifest, from which labeled comparisons are
// derived deterministically (all genuine-genuine matches plus impostor
// pairs, capped by max_comparisons).
std::vector<Comparison> load_comparisons(const std::filesystem::path& manifest,
                                         std::uint64_t seed,
                                         std::size_t max_comparisons);

// Full protocol: scores every comparison against the model, computes the
// three EERs and DET curves. Throws ProtocolError if any evaluation subject
// appears in the model's training subjects.
ProtocolReport run_protocol(const nn::SiameseModel<float>& model,
                            const std::vector<std::string>& training_subjects,
                            const std::vector<Comparison>& comparisons,
                            double rate_hz = kDefaultRateHz);

}  // namespace sigver
