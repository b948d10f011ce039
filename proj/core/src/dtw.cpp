#include "sigver/dtw.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>
#include <limits>
#include <string>

#include "sigver/errors.hpp"

namespace sigver {

namespace {

enum Move : std::uint8_t { kDiag = 0, kUp = 1, kLeft = 2 };

}  // namespace

WarpingPath dtw(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  const Eigen::Index n1 = a.rows();
  const Eigen::Index n2 = b.rows();
  if (n1 == 0 || n2 == 0) {
    throw ValidationError("dtw: empty sequence");
  }
  if (a.cols() != b.cols()) {
    throw ValidationError("dtw: channel-count mismatch: " +
                          std::to_string(a.cols()) + " vs " +
                          std::to_string(b.cols()));
  }

  auto dist = [&](Eigen::Index i, Eigen::Index j) {
    return (a.row(i) - b.row(j)).norm();
  };

  // Rolling cost rows plus a full backpointer matrix.
  std::vector<double> prev(static_cast<std::size_t>(n2));
  std::vector<double> cur(static_cast<std::size_t>(n2));
  Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic> move(n1, n2);

  prev[0] = dist(0, 0);
  move(0, 0) = kDiag;  // unused at the origin
  for (Eigen::Index j = 1; j < n2; ++j) {
    prev[static_cast<std::size_t>(j)] =
        prev[static_cast<std::size_t>(j - 1)] + dist(0, j);
    move(0, j) = kLeft;
  }
  for (Eigen::Index i = 1; i < n1; ++i) {
    cur[0] = prev[0] + dist(i, 0);
    move(i, 0) = kUp;
    for (Eigen::Index j = 1; j < n2; ++j) {
      const auto js = static_cast<std::size_t>(j);
      double best = prev[js - 1];
      std::uint8_t m = kDiag;
      if (prev[js] < best) {
        best = prev[js];
        m = kUp;
      }
      if (cur[js - 1] < best) {
        best = cur[js - 1];
        m = kLeft;
      }
      cur[js] = best + dist(i, j);
      move(i, j) = m;
    }
    std::swap(prev, cur);
  }

  WarpingPath path;
  path.cost = prev[static_cast<std::size_t>(n2 - 1)];
  Eigen::Index i = n1 - 1, j = n2 - 1;
  while (true) {
    path.steps.emplace_back(static_cast<int>(i), static_cast<int>(j));
    if (i == 0 && j == 0) break;
    switch (move(i, j)) {
      case kDiag:
        --i;
        --j;
        break;
      case kUp:
        --i;
        break;
      case kLeft:
        --j;
        break;
    }
  }
  std::reverse(path.steps.begin(), path.steps.end());
  return path;
}

WarpingPath dtw(const FeatureSequence& a, const FeatureSequence& b) {
  if (a.values.cols() != kFeatureCount || b.values.cols() != kFeatureCount) {
    throw ValidationError("dtw: feature sequences must have 23 channels");
  }
  return dtw(a.values, b.values);
}

std::string to_string(PairLabel label) {
  switch (label) {
    case PairLabel::match:
      return "match";
    case PairLabel::nonmatch_random:
      return "nonmatch_random";
    case PairLabel::nonmatch_skilled:
      return "nonmatch_skilled";
    case PairLabel::unlabeled:
      return "unlabeled";
  }
  throw ValidationError("unknown pair label");
}

PairLabel pair_label_from_string(const std::string& s) {
  if (s == "match") return PairLabel::match;
  if (s == "nonmatch_random") return PairLabel::nonmatch_random;
  if (s == "nonmatch_skilled") return PairLabel::nonmatch_skilled;
  if (s == "unlabeled") return PairLabel::unlabeled;
  throw ValidationError("unknown pair label '" + s + "'");
}

AlignedPair prepare_pair(const FeatureSequence& a, const FeatureSequence& b,
                         PairLabel label, int target_length) {
  if (target_length < 1) {
    throw ValidationError("prepare_pair: target length must be >= 1");
  }
  const WarpingPath path = dtw(a, b);
  const int valid =
      std::min<int>(static_cast<int>(path.steps.size()), target_length);

  AlignedPair out;
  out.a.setZero(target_length, kFeatureCount);
  out.b.setZero(target_length, kFeatureCount);
  out.valid_length = valid;
  out.label = label;
  for (int k = 0; k < valid; ++k) {
    const auto [i, j] = path.steps[static_cast<std::size_t>(k)];
    out.a.row(k) = a.values.row(i).cast<float>();
    out.b.row(k) = b.values.row(j).cast<float>();
  }
  return out;
}

namespace {
constexpr char kPairMagic[8] = {'S', 'G', 'V', 'P', 'A', 'I', 'R', '1'};
}

void write_aligned_pair(const AlignedPair& pair,
                        const std::filesystem::path& path) {
  if (pair.a.rows() != kAlignedLength || pair.a.cols() != kFeatureCount ||
      pair.b.rows() != kAlignedLength || pair.b.cols() != kFeatureCount) {
    throw ValidationError("aligned-pair record requires 2000x23 matrices");
  }
  std::string payload;
  payload.resize(16 + 2 * sizeof(float) * kAlignedLength * kFeatureCount);
  char* p = payload.data();
  std::memcpy(p, kPairMagic, 8);
  const auto valid = static_cast<std::uint32_t>(pair.valid_length);
  std::memcpy(p + 8, &valid, 4);
  p[12] = static_cast<char>(pair.label);
  p[13] = p[14] = p[15] = 0;
  const std::size_t half = sizeof(float) * kAlignedLength * kFeatureCount;
  std::memcpy(p + 16, pair.a.data(), half);
  std::memcpy(p + 16 + half, pair.b.data(), half);
  atomic_write_file(path, payload);
}

AlignedPair read_aligned_pair(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open aligned pair: " + path.string());
  std::string payload((std::istreambuf_iterator<char>(in)),
                      std::istreambuf_iterator<char>());
  const std::size_t half = sizeof(float) * kAlignedLength * kFeatureCount;
  if (payload.size() != 16 + 2 * half ||
      std::memcmp(payload.data(), kPairMagic, 8) != 0) {
    throw ValidationError("not an aligned-pair record: " + path.string());
  }
  AlignedPair out;
  std::uint32_t valid = 0;
  std::memcpy(&valid, payload.data() + 8, 4);
  out.valid_length = static_cast<int>(valid);
  out.label = static_cast<PairLabel>(static_cast<std::uint8_t>(payload[12]));
  out.a.resize(kAlignedLength, kFeatureCount);
  out.b.resize(kAlignedLength, kFeatureCount);
  std::memcpy(out.a.data(), payload.data() + 16, half);
  std::memcpy(out.b.data(), payload.data() + 16 + half, half);
  return out;
}

}  // namespace sigver
