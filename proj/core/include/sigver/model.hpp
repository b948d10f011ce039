#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sigver/layers.hpp"

namespace sigver {

enum class Variant { vanilla, that, gait, vanilla_tc };

std::string to_string(Variant v);
Variant variant_from_string(const std::string& s);

// Encoder hyperparameters and shape constants. Defaults give the full-size
// verification model: 2000x23 input, 250x64 after the CNN front-end, 92-dim
// temporal embedding, 184-dim fused embedding for the two-branch variant.
struct ModelConfig {
  Variant variant = Variant::vanilla;
  int input_length = 2000;
  int input_channels = 23;
  int frontend_out_length = 250;  // input_length / 8
  int d_model = 64;
  int heads = 4;
  int channel_heads = 5;  // head count for the 250-dim channel tokens
  int ffn_dim = 128;
  int num_blocks = 2;
  int gre_ranges = 20;
  int rnn_hidden = 92;
  int head_hidden = 64;
  double dropout = 0.1;
  std::uint64_t seed = 0;

  void validate() const;
  int embedding_size() const;

  // Reduced dimensions for finite-difference verification.
  static ModelConfig reduced(Variant v, std::uint64_t seed = 0);
};

std::string model_config_to_json(const ModelConfig& config);
ModelConfig model_config_from_json(const std::string& json_text);

namespace nn {

// Transformer encoder block: post-norm residual attention plus one of three
// feed-forward sub-blocks (position-wise dense, two-layer kernel-3
// convolution, or summed multi-scale convolutions).
template <typename T>
struct EncoderBlock {
  enum class Ffn { dense, conv_pair, multiscale };

  MultiHeadAttention<T> attn;
  LayerNorm<T> ln1, ln2;
  Ffn ffn_kind = Ffn::dense;
  Linear<T> ffn_in, ffn_out;       // dense
  Conv1d<T> conv_a, conv_b;        // conv_pair
  Conv1d<T> ms1, ms3, ms5;         // multiscale (+ ffn_out projection)
  double dropout = 0.0;

  static EncoderBlock create(ParameterStore<T>& store,
                             const std::string& prefix, std::int64_t dim,
                             int heads, std::int64_t ffn_dim, Ffn kind,
                             double dropout, Rng& rng);
  Var<T> operator()(Tape<T>& tape, Var<T> x) const;
};

// Weight-shared signature encoder with the four variant architectures and
// the verification head. Parameters are built deterministically from
// config.seed; the model is immutable during scoring and may be shared
// across concurrent scoring tapes.
template <typename T>
class SiameseModel {
 public:
  explicit SiameseModel(ModelConfig config);

  const ModelConfig& config() const { return config_; }
  ParameterStore<T>& params() { return store_; }
  const ParameterStore<T>& params() const { return store_; }

  // input_length x input_channels -> frontend_out_length x d_model.
  Var<T> frontend(Tape<T>& tape, Var<T> x) const;
  // Channel-token view of the front-end output: d_model x frontend_out_length.
  Var<T> channel_tokens(Tape<T>& tape, Var<T> frontend_out) const;
  // Temporal encoder stack output, frontend_out_length x d_model.
  Var<T> encode_temporal(Tape<T>& tape, Var<T> frontend_out) const;
  // Temporal embedding (recurrent final state), 1 x rnn_hidden.
  Var<T> temporal_embedding(Tape<T>& tape, Var<T> frontend_out) const;
  // Channel-branch embedding, 1 x rnn_hidden (vanilla_tc only).
  Var<T> channel_branch(Tape<T>& tape, Var<T> frontend_out) const;

  // Full embedding for one aligned signature, 1 x embedding_size().
  Var<T> embed(Tape<T>& tape, Var<T> x) const;
  // Verification head on (enrolled, questioned) embeddings -> scalar (0,1).
  Var<T> score(Tape<T>& tape, Var<T> enrolled, Var<T> questioned) const;

  // Forward-only conveniences on fresh evaluation tapes.
  Tensor<T> embed_value(const Tensor<T>& input) const;
  T score_value(const Tensor<T>& enrolled, const Tensor<T>& questioned) const;
  // Mean of both argument orders; invariant under swap.
  T symmetric_score(const Tensor<T>& a, const Tensor<T>& b) const;

 private:
  Var<T> that_stream(Tape<T>& tape, Var<T> tokens, bool temporal) const;

  ModelConfig config_;
  ParameterStore<T> store_;

  Conv1d<T> conv0_, conv1_, conv2_;

  // Temporal encoder (vanilla, gait, vanilla_tc).
  GaussianRangeEncoding<T> temporal_gre_;
  std::vector<EncoderBlock<T>> temporal_blocks_;
  Gru<T> rnn_;

  // Channel branch (vanilla_tc).
  GaussianRangeEncoding<T> channel_gre_;
  std::vector<EncoderBlock<T>> channel_blocks_;
  Linear<T> channel_proj_;

  // THAT streams.
  GaussianRangeEncoding<T> that_t_gre_, that_c_gre_;
  std::vector<EncoderBlock<T>> that_t_blocks_, that_c_blocks_;
  Linear<T> that_t_proj_, that_c_proj_;

  Linear<T> head0_, head1_;
};

extern template class SiameseModel<float>;
extern template class SiameseModel<double>;
extern template struct EncoderBlock<float>;
extern template struct EncoderBlock<double>;

// Finite-difference verification of a full variant at reduced dimensions:
// the loss is the training objective (binary cross-entropy of the pair
// score) on a seeded random input pair.
GradCheckReport gradcheck_variant_f64(Variant variant, std::uint64_t seed = 0);
GradCheckReport gradcheck_variant_f32(Variant variant, std::uint64_t seed = 0);

}  // namespace nn
}  // namespace sigver
