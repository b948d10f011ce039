#pragma once

#include <filesystem>
#include <optional>

#include "sigver/evaluation.hpp"

namespace sigver {

struct TrainOptions {
  double learning_rate = 1e-3;
  int batch_size = 32;
  int max_epochs = 30;
  int patience = 5;  // epochs without validation-EER improvement
  int pairs_per_epoch = 128;
  int validation_comparisons = 200;
  std::uint64_t seed = 0;
  double rate_hz = kDefaultRateHz;
  std::size_t aligner_cache = 256;
  // Per-epoch JSON-lines log {epoch, loss, val_eer_r, val_eer_s, val_eer_o};
  // content is bit-reproducible under a fixed seed.
  std::optional<std::filesystem::path> log_path;
  bool verbose = false;  // epoch lines on stderr
};

struct EpochLog {
  int epoch = 0;
  double loss = 0.0;
  double train_accuracy = 0.0;
  double val_eer_random = 0.0;
  double val_eer_skilled = 0.0;
  double val_eer_overall = 0.0;
};

struct TrainState {
  int epoch = 0;
  std::int64_t step = 0;
  double best_validation_eer = 1.0;
  int patience_counter = 0;
  std::uint64_t rng_seed = 0;
};

struct TrainReport {
  std::vector<EpochLog> epochs;
  int best_epoch = 0;
  double best_validation_eer = 1.0;
  double final_train_accuracy = 0.0;
  TrainState state;
  std::string log_text;  // the JSON-lines log content
};

// Minimizes binary cross-entropy of the pair score with Adam over sampled
// pairs; computes validation EER after each epoch, keeps the best
// parameters, stops early after `patience` epochs without improvement, and
// restores the best parameters before returning. Throws ProtocolError when
// train and validation sets share a subject.
TrainReport train(nn::SiameseModel<float>& model, const Dataset& train_set,
                  const Dataset& validation_set, const TrainOptions& options);

// Deterministic validation comparisons for a dataset (matches, random and
// skilled non-matches), capped at `count`.
std::vector<PairSpec> validation_comparisons(const Dataset& dataset, int count,
                                             std::uint64_t seed);

}  // namespace sigver
