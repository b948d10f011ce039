#include "sigver/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>

#include <nlohmann/json.hpp>

#include "sigver/errors.hpp"
#include "sigver/rng.hpp"
#include "sigver/threading.hpp"

using nlohmann::json;

namespace sigver {

namespace {

struct SubjectPool {
  std::string id;
  std::vector<int> genuine;
  std::vector<int> forgeries;
};

std::vector<SubjectPool> subject_pools(const Dataset& dataset) {
  std::vector<SubjectPool> pools;
  for (const auto& subject : dataset.subjects()) {
    SubjectPool pool;
    pool.id = subject;
    pool.genuine = dataset.genuine_indices(subject);
    pool.forgeries = dataset.forgery_indices(subject);
    pools.push_back(std::move(pool));
  }
  return pools;
}

nn::Tensor<float> tensor_from(const RowMatrixXf& m) {
  nn::Tensor<float> t = nn::Tensor<float>::zeros({m.rows(), m.cols()});
  std::copy(m.data(), m.data() + m.size(), t.data.begin());
  return t;
}

}  // namespace

PairSample sample_pairs(const Dataset& dataset, int count, std::uint64_t seed) {
  if (count < 1) throw ValidationError("sample_pairs: count must be >= 1");
  const auto pools = subject_pools(dataset);
  if (pools.size() < 2) {
    throw ValidationError("sample_pairs: fewer than 2 subjects");
  }

  std::vector<int> match_subjects;    // >= 2 genuine samples
  std::vector<int> genuine_subjects;  // >= 1 genuine sample
  std::vector<int> skilled_subjects;  // >= 1 genuine and >= 1 forgery
  for (std::size_t i = 0; i < pools.size(); ++i) {
    if (pools[i].genuine.size() >= 2) match_subjects.push_back(static_cast<int>(i));
    if (!pools[i].genuine.empty()) genuine_subjects.push_back(static_cast<int>(i));
    if (!pools[i].genuine.empty() && !pools[i].forgeries.empty()) {
      skilled_subjects.push_back(static_cast<int>(i));
    }
  }
  if (match_subjects.empty()) {
    throw ValidationError("sample_pairs: no subject has 2 genuine signatures");
  }
  if (genuine_subjects.size() < 2) {
    throw ValidationError(
        "sample_pairs: need genuine signatures from 2 subjects");
  }

  int match_quota = count / 2;
  int random_quota = count / 4;
  int skilled_quota = count / 4;
  PairSample out;
  if (skilled_subjects.empty()) {
    random_quota += skilled_quota;
    skilled_quota = 0;
    out.skilled_reallocated = true;
  }
  match_quota += count - match_quota - random_quota - skilled_quota;

  Rng rng(derive_seed(seed, 0x70616972ull));
  std::set<std::pair<int, int>> used;
  constexpr int kMaxAttempts = 128;

  auto draw = [&rng](const std::vector<int>& v) {
    return v[rng.uniform_int(v.size())];
  };

  auto emit = [&](PairLabel label, auto&& make_pair_fn, int quota) {
    for (int n = 0; n < quota; ++n) {
      PairSpec spec;
      spec.label = label;
      for (int attempt = 0;; ++attempt) {
        auto [e, q] = make_pair_fn();
        spec.enrolled_index = e;
        spec.questioned_index = q;
        const auto key = std::make_pair(e, q);
        if (!used.count(key) || attempt >= kMaxAttempts) {
          used.insert(key);
          break;
        }
      }
      out.pairs.push_back(spec);
    }
  };

  emit(PairLabel::match,
       [&]() {
         const auto& pool = pools[static_cast<std::size_t>(draw(match_subjects))];
         const int a = draw(pool.genuine);
         int b = draw(pool.genuine);
         while (b == a) b = draw(pool.genuine);
         return std::make_pair(a, b);
       },
       match_quota);
  emit(PairLabel::nonmatch_random,
       [&]() {
         const int s1 = draw(genuine_subjects);
         int s2 = draw(genuine_subjects);
         while (s2 == s1) s2 = draw(genuine_subjects);
         return std::make_pair(draw(pools[static_cast<std::size_t>(s1)].genuine),
                               draw(pools[static_cast<std::size_t>(s2)].genuine));
       },
       random_quota);
  emit(PairLabel::nonmatch_skilled,
       [&]() {
         const auto& pool =
             pools[static_cast<std::size_t>(draw(skilled_subjects))];
         return std::make_pair(draw(pool.genuine), draw(pool.forgeries));
       },
       skilled_quota);

  // Mix the categories deterministically (Fisher-Yates).
  for (std::size_t i = out.pairs.size(); i > 1; --i) {
    const std::size_t j = rng.uniform_int(i);
    std::swap(out.pairs[i - 1], out.pairs[j]);
  }
  return out;
}

PairAligner::PairAligner(const Dataset& dataset, double rate_hz,
                         int target_length, std::size_t cache_capacity)
    : dataset_(dataset),
      rate_hz_(rate_hz),
      target_length_(target_length),
      capacity_(cache_capacity),
      features_(dataset.signatures.size()) {}

const FeatureSequence& PairAligner::features(int signature_index) {
  const auto i = static_cast<std::size_t>(signature_index);
  if (i >= features_.size()) {
    throw ValidationError("aligner: signature index out of range");
  }
  {
    std::lock_guard<std::mutex> lock(mutex_);
    if (features_[i]) return *features_[i];
  }
  auto fs = std::make_unique<FeatureSequence>(
      features_of(dataset_.signatures[i], rate_hz_));
  std::lock_guard<std::mutex> lock(mutex_);
  if (!features_[i]) features_[i] = std::move(fs);
  return *features_[i];
}

AlignedPair PairAligner::aligned(const PairSpec& pair) {
  const Key key{pair.enrolled_index, pair.questioned_index};
  {
    std::lock_guard<std::mutex> lock(mutex_);
    const auto it = index_.find(key);
    if (it != index_.end()) {
      lru_.splice(lru_.begin(), lru_, it->second);
      AlignedPair result = it->second->second;
      result.label = pair.label;
      return result;
    }
  }
  const FeatureSequence& a = features(pair.enrolled_index);
  const FeatureSequence& b = features(pair.questioned_index);
  AlignedPair result = prepare_pair(a, b, pair.label, target_length_);
  {
    std::lock_guard<std::mutex> lock(mutex_);
    if (!index_.count(key)) {
      lru_.emplace_front(key, result);
      index_[key] = lru_.begin();
      while (lru_.size() > capacity_) {
        index_.erase(lru_.back().first);
        lru_.pop_back();
      }
    }
  }
  return result;
}

std::vector<PairSpec> validation_comparisons(const Dataset& dataset, int count,
                                             std::uint64_t seed) {
  return sample_pairs(dataset, count, derive_seed(seed, 0x76616cull)).pairs;
}

TrainReport train(nn::SiameseModel<float>& model, const Dataset& train_set,
                  const Dataset& validation_set, const TrainOptions& options) {
  // Subject-disjoint splits are part of the protocol contract.
  const auto train_subjects = train_set.subjects();
  for (const auto& subject : validation_set.subjects()) {
    if (train_subjects.count(subject)) {
      throw ProtocolError("protocol error: overlapping subjects ('" + subject +
                          "' is in both train and validation sets)");
    }
  }
  if (options.batch_size < 1 || options.max_epochs < 1 ||
      options.pairs_per_epoch < 1) {
    throw ValidationError("train: batch, epochs and pairs_per_epoch must be >= 1");
  }

  const auto& config = model.config();
  PairAligner train_aligner(train_set, options.rate_hz, config.input_length,
                            options.aligner_cache);
  PairAligner val_aligner(validation_set, options.rate_hz, config.input_length,
                          options.aligner_cache);
  const auto val_pairs = validation_comparisons(
      validation_set, options.validation_comparisons, options.seed);

  nn::AdamOptimizer<float> adam(options.learning_rate);
  TrainReport report;
  report.state.rng_seed = options.seed;

  std::vector<nn::Tensor<float>> best_params;
  auto snapshot = [&]() {
    best_params.clear();
    for (const auto& p : model.params().all()) best_params.push_back(p->value);
  };
  snapshot();
  report.best_epoch = 0;

  std::string log_text;
  for (int epoch = 1; epoch <= options.max_epochs; ++epoch) {
    const auto sample = sample_pairs(
        train_set, options.pairs_per_epoch,
        derive_seed(options.seed, 0x65706f63ull, static_cast<std::uint64_t>(epoch)));
    const auto& pairs = sample.pairs;

    double loss_sum = 0.0;
    int correct = 0;
    for (std::size_t start = 0; start < pairs.size();
         start += static_cast<std::size_t>(options.batch_size)) {
      const std::size_t batch_n = std::min<std::size_t>(
          static_cast<std::size_t>(options.batch_size), pairs.size() - start);

      // Alignment prefetch: results land in index-addressed slots, so the
      // training order is independent of the worker count.
      std::vector<AlignedPair> batch(batch_n);
      parallel_for(batch_n, [&](std::size_t i) {
        batch[i] = train_aligner.aligned(pairs[start + i]);
      });

      model.params().zero_grads();
      const float inv_batch = 1.0f / static_cast<float>(batch_n);
      for (std::size_t i = 0; i < batch_n; ++i) {
        const auto& pair = pairs[start + i];
        nn::Tape<float> tape(
            /*training=*/true,
            derive_seed(options.seed, 0x64726f70ull,
                        static_cast<std::uint64_t>(epoch),
                        static_cast<std::uint64_t>(start + i)));
        const auto e1 = model.embed(tape, tape.input(tensor_from(batch[i].a)));
        const auto e2 = model.embed(tape, tape.input(tensor_from(batch[i].b)));
        const auto s = model.score(tape, e1, e2);
        const float target = pair.label == PairLabel::match ? 1.0f : 0.0f;
        const auto loss = tape.bce_loss(s, target);
        tape.backward(tape.scale(loss, inv_batch));

        const float score = tape.val(s).at(0);
        loss_sum += static_cast<double>(tape.val(loss).at(0));
        correct += ((score >= 0.5f) == (target >= 0.5f)) ? 1 : 0;
        ++report.state.step;
      }
      adam.step(model.params());
    }

    const auto val_scores =
        compute_scores(model, validation_set, val_pairs, val_aligner);
    const auto eer_r =
        compute_eer(val_scores.genuine, val_scores.impostor_random);
    const auto eer_s =
        compute_eer(val_scores.genuine, val_scores.impostor_skilled);
    const auto eer_o =
        compute_eer(val_scores.genuine, val_scores.impostor_pooled());

    EpochLog log;
    log.epoch = epoch;
    log.loss = loss_sum / static_cast<double>(pairs.size());
    log.train_accuracy =
        static_cast<double>(correct) / static_cast<double>(pairs.size());
    log.val_eer_random = eer_r.eer;
    log.val_eer_skilled = eer_s.eer;
    log.val_eer_overall = eer_o.eer;
    report.epochs.push_back(log);
    report.state.epoch = epoch;
    report.final_train_accuracy = log.train_accuracy;

    const json line{{"epoch", log.epoch},
                    {"loss", log.loss},
                    {"val_eer_r", log.val_eer_random},
                    {"val_eer_s", log.val_eer_skilled},
                    {"val_eer_o", log.val_eer_overall}};
    log_text += line.dump() + "\n";
    if (options.verbose) {
      std::fprintf(stderr, "%s\n", line.dump().c_str());
    }

    if (log.val_eer_overall < report.best_validation_eer) {
      report.best_validation_eer = log.val_eer_overall;
      report.state.best_validation_eer = log.val_eer_overall;
      report.best_epoch = epoch;
      report.state.patience_counter = 0;
      snapshot();
    } else {
      ++report.state.patience_counter;
      if (report.state.patience_counter >= options.patience) break;
    }
  }

  // Restore the best checkpointed parameters.
  const auto& params = model.params().all();
  for (std::size_t i = 0; i < params.size(); ++i) {
    params[i]->value = best_params[i];
  }

  report.log_text = log_text;
  if (options.log_path) {
    atomic_write_file(*options.log_path, log_text);
  }
  return report;
}

}  // namespace sigver
