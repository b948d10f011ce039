#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <filesystem>
#include <utility>
#include <vector>

#include "sigver/features.hpp"

namespace sigver {

// Monotone, continuous alignment between two sequences: starts at (0,0),
// ends at (T1-1, T2-1), each step increments i, j, or both by exactly 1.
struct WarpingPath {
  std::vector<std::pair<int, int>> steps;
  double cost = 0.0;
};

// Minimal cumulative Euclidean frame distance under
// D(i,j) = d(i,j) + min(D(i-1,j-1), D(i-1,j), D(i,j-1)); backtracking breaks
// ties preferring the diagonal, then (i-1,j), then (i,j-1).
WarpingPath dtw(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b);
WarpingPath dtw(const FeatureSequence& a, const FeatureSequence& b);

enum class PairLabel : std::uint8_t {
  match = 0,
  nonmatch_random = 1,
  nonmatch_skilled = 2,
  unlabeled = 255,
};

std::string to_string(PairLabel label);
PairLabel pair_label_from_string(const std::string& s);

inline constexpr int kAlignedLength = 2000;

using RowMatrixXf =
    Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Two warped sequences expanded along the warping path, tail-truncated to
// the target length and zero-padded; rows >= valid_length are exactly zero.
struct AlignedPair {
  RowMatrixXf a;  // target_length x 23
  RowMatrixXf b;
  int valid_length = 0;
  PairLabel label = PairLabel::unlabeled;
};

AlignedPair prepare_pair(const FeatureSequence& a, const FeatureSequence& b,
                         PairLabel label = PairLabel::unlabeled,
                         int target_length = kAlignedLength);

// Binary record: 16-byte header (8-byte magic "SGVPAIR1", uint32 LE
// valid_length, uint8 label code, 3 zero bytes), then the two matrices as
// little-endian float32, row-major, [a | b].
void write_aligned_pair(const AlignedPair& pair,
                        const std::filesystem::path& path);
AlignedPair read_aligned_pair(const std::filesystem::path& path);

}  // namespace sigver
