#pragma once

#include <cstdint>
#include <list>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <vector>

#include "sigver/dtw.hpp"
#include "sigver/features.hpp"
#include "sigver/signature.hpp"

namespace sigver {

// One comparison inside an in-memory dataset. match: same subject, both
// genuine; nonmatch_random: different subjects, questioned genuine;
// nonmatch_skilled: questioned is a skilled forgery of the enrolled subject.
struct PairSpec {
  int enrolled_index = -1;
  int questioned_index = -1;
  PairLabel label = PairLabel::unlabeled;
};

struct PairSample {
  std::vector<PairSpec> pairs;
  // Set when the dataset has no skilled forgeries and the skilled quota was
  // re-allocated to random non-matches.
  bool skilled_reallocated = false;
};

// 50% match / 25% random / 25% skilled (rounding down, remainder to match),
// deterministic under seed; no (enrolled, questioned) identity pair repeats
// within one call unless the pool is exhausted.
PairSample sample_pairs(const Dataset& dataset, int count, std::uint64_t seed);

// Feature extraction + DTW alignment with caching: per-signature features
// are computed once, aligned pairs go through an LRU keyed by the index
// pair. Thread-safe; cached results are bit-identical to fresh ones.
class PairAligner {
 public:
  explicit PairAligner(const Dataset& dataset, double rate_hz = kDefaultRateHz,
                       int target_length = kAlignedLength,
                       std::size_t cache_capacity = 256);

  const FeatureSequence& features(int signature_index);
  AlignedPair aligned(const PairSpec& pair);

  const Dataset& dataset() const { return dataset_; }

 private:
  using Key = std::pair<int, int>;
  using LruList = std::list<std::pair<Key, AlignedPair>>;

  const Dataset& dataset_;
  double rate_hz_;
  int target_length_;
  std::size_t capacity_;

  std::mutex mutex_;
  std::vector<std::unique_ptr<FeatureSequence>> features_;
  LruList lru_;
  std::map<Key, LruList::iterator> index_;
};

}  // namespace sigver
