#include "sigver/model.hpp"

#include <nlohmann/json.hpp>

#include "sigver/errors.hpp"

using nlohmann::json;

namespace sigver {

std::string to_string(Variant v) {
  switch (v) {
    case Variant::vanilla:
      return "vanilla";
    case Variant::that:
      return "that";
    case Variant::gait:
      return "gait";
    case Variant::vanilla_tc:
      return "vanilla-tc";
  }
  throw ConfigError("unknown variant");
}

Variant variant_from_string(const std::string& s) {
  if (s == "vanilla") return Variant::vanilla;
  if (s == "that") return Variant::that;
  if (s == "gait") return Variant::gait;
  if (s == "vanilla-tc" || s == "vanilla_tc") return Variant::vanilla_tc;
  throw ConfigError("unknown variant '" + s + "'");
}

void ModelConfig::validate() const {
  if (input_length < 8 || input_length % 8 != 0) {
    throw ConfigError("input_length must be a positive multiple of 8");
  }
  if (frontend_out_length != input_length / 8) {
    throw ConfigError("frontend_out_length must equal input_length / 8");
  }
  if (input_channels < 1) throw ConfigError("input_channels must be >= 1");
  if (d_model < 1 || heads < 1 || d_model % heads != 0) {
    throw ConfigError("d_model must be a positive multiple of heads");
  }
  if (variant == Variant::vanilla_tc || variant == Variant::that) {
    if (channel_heads < 1 || frontend_out_length % channel_heads != 0) {
      throw ConfigError(
          "frontend_out_length must be a positive multiple of channel_heads");
    }
  }
  if (ffn_dim < 1) throw ConfigError("ffn_dim must be >= 1");
  if (num_blocks < 1) throw ConfigError("num_blocks must be >= 1");
  if (gre_ranges < 2) throw ConfigError("gre_ranges must be >= 2");
  if (rnn_hidden < 1) throw ConfigError("rnn_hidden must be >= 1");
  if (head_hidden < 1) throw ConfigError("head_hidden must be >= 1");
  if (!(dropout >= 0.0 && dropout < 1.0)) {
    throw ConfigError("dropout must be in [0, 1)");
  }
}

int ModelConfig::embedding_size() const {
  switch (variant) {
    case Variant::vanilla:
    case Variant::gait:
      return rnn_hidden;
    case Variant::vanilla_tc:
      return 2 * rnn_hidden;
    case Variant::that:
      return 2 * d_model;
  }
  throw ConfigError("unknown variant");
}

ModelConfig ModelConfig::reduced(Variant v, std::uint64_t seed) {
  ModelConfig c;
  c.variant = v;
  c.input_length = 160;
  c.frontend_out_length = 20;
  c.d_model = 8;
  c.heads = 4;
  c.channel_heads = 5;
  c.ffn_dim = 16;
  c.num_blocks = 2;
  c.gre_ranges = 4;
  c.rnn_hidden = 6;
  c.dropout = 0.0;
  c.seed = seed;
  return c;
}

std::string model_config_to_json(const ModelConfig& c) {
  json j{{"variant", to_string(c.variant)},
         {"input_length", c.input_length},
         {"input_channels", c.input_channels},
         {"frontend_out_length", c.frontend_out_length},
         {"d_model", c.d_model},
         {"heads", c.heads},
         {"channel_heads", c.channel_heads},
         {"ffn_dim", c.ffn_dim},
         {"num_blocks", c.num_blocks},
         {"gre_ranges", c.gre_ranges},
         {"rnn_hidden", c.rnn_hidden},
         {"head_hidden", c.head_hidden},
         {"dropout", c.dropout},
         {"seed", c.seed}};
  return j.dump();
}

ModelConfig model_config_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ValidationError(std::string("invalid model config JSON: ") + e.what());
  }
  ModelConfig c;
  c.variant = variant_from_string(j.at("variant").get<std::string>());
  c.input_length = j.at("input_length").get<int>();
  c.input_channels = j.at("input_channels").get<int>();
  c.frontend_out_length = j.at("frontend_out_length").get<int>();
  c.d_model = j.at("d_model").get<int>();
  c.heads = j.at("heads").get<int>();
  c.channel_heads = j.at("channel_heads").get<int>();
  c.ffn_dim = j.at("ffn_dim").get<int>();
  c.num_blocks = j.at("num_blocks").get<int>();
  c.gre_ranges = j.at("gre_ranges").get<int>();
  c.rnn_hidden = j.at("rnn_hidden").get<int>();
  c.head_hidden = j.at("head_hidden").get<int>();
  c.dropout = j.at("dropout").get<double>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.validate();
  return c;
}

namespace nn {

template <typename T>
EncoderBlock<T> EncoderBlock<T>::create(ParameterStore<T>& store,
                                        const std::string& prefix,
                                        std::int64_t dim, int heads,
                                        std::int64_t ffn_dim, Ffn kind,
                                        double dropout, Rng& rng) {
  EncoderBlock b;
  b.ffn_kind = kind;
  b.dropout = dropout;
  b.attn = MultiHeadAttention<T>::create(store, prefix + ".attn", dim, heads, rng);
  b.ln1 = LayerNorm<T>::create(store, prefix + ".ln1", dim);
  switch (kind) {
    case Ffn::dense:
      b.ffn_in = Linear<T>::create(store, prefix + ".ffn0", dim, ffn_dim, rng);
      b.ffn_out = Linear<T>::create(store, prefix + ".ffn1", ffn_dim, dim, rng);
      break;
    case Ffn::conv_pair:
      b.conv_a = Conv1d<T>::create(store, prefix + ".conv0", 3, dim, ffn_dim, rng);
      b.conv_b = Conv1d<T>::create(store, prefix + ".conv1", 3, ffn_dim, dim, rng);
      break;
    case Ffn::multiscale:
      b.ms1 = Conv1d<T>::create(store, prefix + ".ms1", 1, dim, ffn_dim, rng);
      b.ms3 = Conv1d<T>::create(store, prefix + ".ms3", 3, dim, ffn_dim, rng);
      b.ms5 = Conv1d<T>::create(store, prefix + ".ms5", 5, dim, ffn_dim, rng);
      b.ffn_out = Linear<T>::create(store, prefix + ".proj", ffn_dim, dim, rng);
      break;
  }
  b.ln2 = LayerNorm<T>::create(store, prefix + ".ln2", dim);
  return b;
}

template <typename T>
Var<T> EncoderBlock<T>::operator()(Tape<T>& tape, Var<T> x) const {
  Var<T> a = attn(tape, x);
  a = tape.dropout(a, dropout);
  const Var<T> y1 = ln1(tape, tape.add(x, a));
  Var<T> f{};
  switch (ffn_kind) {
    case Ffn::dense:
      f = ffn_out(tape, tape.relu(ffn_in(tape, y1)));
      break;
    case Ffn::conv_pair:
      f = conv_b(tape, tape.relu(conv_a(tape, y1)));
      break;
    case Ffn::multiscale:
      f = ffn_out(tape,
                  tape.relu(tape.add(tape.add(ms1(tape, y1), ms3(tape, y1)),
                                     ms5(tape, y1))));
      break;
  }
  f = tape.dropout(f, dropout);
  return ln2(tape, tape.add(y1, f));
}

template <typename T>
SiameseModel<T>::SiameseModel(ModelConfig config) : config_(config) {
  config_.validate();
  Rng rng(derive_seed(config_.seed, 0x5347564dull));
  const std::int64_t d = config_.d_model;
  const std::int64_t len = config_.frontend_out_length;
  const std::int64_t ffn = config_.ffn_dim;
  const double drop = config_.dropout;

  conv0_ = Conv1d<T>::create(store_, "frontend.conv0", 5,
                             config_.input_channels, d, rng);
  conv1_ = Conv1d<T>::create(store_, "frontend.conv1", 5, d, d, rng);
  conv2_ = Conv1d<T>::create(store_, "frontend.conv2", 3, d, d, rng);

  const auto dense = EncoderBlock<T>::Ffn::dense;
  const auto conv_pair = EncoderBlock<T>::Ffn::conv_pair;
  const auto multiscale = EncoderBlock<T>::Ffn::multiscale;

  switch (config_.variant) {
    case Variant::vanilla:
    case Variant::gait:
    case Variant::vanilla_tc: {
      const auto kind = config_.variant == Variant::gait ? conv_pair : dense;
      temporal_gre_ = GaussianRangeEncoding<T>::create(
          store_, "temporal.gre", len, d, config_.gre_ranges, rng);
      for (int i = 0; i < config_.num_blocks; ++i) {
        temporal_blocks_.push_back(EncoderBlock<T>::create(
            store_, "temporal.block" + std::to_string(i), d, config_.heads,
            ffn, kind, drop, rng));
      }
      rnn_ = Gru<T>::create(store_, "temporal.rnn", d, config_.rnn_hidden, rng);
      if (config_.variant == Variant::vanilla_tc) {
        channel_gre_ = GaussianRangeEncoding<T>::create(
            store_, "channel.gre", d, len, config_.gre_ranges, rng);
        for (int i = 0; i < config_.num_blocks; ++i) {
          channel_blocks_.push_back(EncoderBlock<T>::create(
              store_, "channel.block" + std::to_string(i), len,
              config_.channel_heads, ffn, dense, drop, rng));
        }
        channel_proj_ = Linear<T>::create(store_, "channel.proj", len,
                                          config_.rnn_hidden, rng);
      }
      break;
    }
    case Variant::that: {
      that_t_gre_ = GaussianRangeEncoding<T>::create(
          store_, "that.temporal.gre", len, d, config_.gre_ranges, rng);
      for (int i = 0; i < config_.num_blocks; ++i) {
        that_t_blocks_.push_back(EncoderBlock<T>::create(
            store_, "that.temporal.block" + std::to_string(i), d,
            config_.heads, ffn, multiscale, drop, rng));
      }
      that_t_proj_ = Linear<T>::create(store_, "that.temporal.proj", d, d, rng);
      that_c_gre_ = GaussianRangeEncoding<T>::create(
          store_, "that.channel.gre", d, len, config_.gre_ranges, rng);
      for (int i = 0; i < config_.num_blocks; ++i) {
        that_c_blocks_.push_back(EncoderBlock<T>::create(
            store_, "that.channel.block" + std::to_string(i), len,
            config_.channel_heads, ffn, multiscale, drop, rng));
      }
      that_c_proj_ = Linear<T>::create(store_, "that.channel.proj", len, d, rng);
      break;
    }
  }

  head0_ = Linear<T>::create(store_, "head.fc0", 2 * config_.embedding_size(),
                             config_.head_hidden, rng);
  head1_ = Linear<T>::create(store_, "head.fc1", config_.head_hidden, 1, rng);
}

template <typename T>
Var<T> SiameseModel<T>::frontend(Tape<T>& tape, Var<T> x) const {
  const auto& v = tape.val(x);
  if (v.view_rows() != config_.input_length ||
      v.view_cols() != config_.input_channels) {
    throw ValidationError(
        "frontend: expected input " + std::to_string(config_.input_length) +
        "x" + std::to_string(config_.input_channels) + ", got " +
        shape_string(v));
  }
  Var<T> h = tape.maxpool2(tape.relu(conv0_(tape, x)));
  h = tape.maxpool2(tape.relu(conv1_(tape, h)));
  return tape.maxpool2(tape.relu(conv2_(tape, h)));
}

template <typename T>
Var<T> SiameseModel<T>::channel_tokens(Tape<T>& tape, Var<T> frontend_out) const {
  return tape.transpose(frontend_out);
}

template <typename T>
Var<T> SiameseModel<T>::encode_temporal(Tape<T>& tape, Var<T> frontend_out) const {
  if (config_.variant == Variant::that) {
    throw ConfigError("encode_temporal: not part of the THAT variant");
  }
  Var<T> h = tape.dropout(temporal_gre_.apply(tape, frontend_out),
                          config_.dropout);
  for (const auto& block : temporal_blocks_) h = block(tape, h);
  return h;
}

template <typename T>
Var<T> SiameseModel<T>::temporal_embedding(Tape<T>& tape,
                                           Var<T> frontend_out) const {
  return rnn_.final_state(tape, encode_temporal(tape, frontend_out));
}

template <typename T>
Var<T> SiameseModel<T>::channel_branch(Tape<T>& tape, Var<T> frontend_out) const {
  if (config_.variant != Variant::vanilla_tc) {
    throw ConfigError("channel_branch: only part of the vanilla-tc variant");
  }
  Var<T> h = channel_tokens(tape, frontend_out);
  h = tape.dropout(channel_gre_.apply(tape, h), config_.dropout);
  for (const auto& block : channel_blocks_) h = block(tape, h);
  return channel_proj_(tape, tape.mean_rows(h));
}

template <typename T>
Var<T> SiameseModel<T>::that_stream(Tape<T>& tape, Var<T> tokens,
                                    bool temporal) const {
  const auto& gre = temporal ? that_t_gre_ : that_c_gre_;
  const auto& blocks = temporal ? that_t_blocks_ : that_c_blocks_;
  const auto& proj = temporal ? that_t_proj_ : that_c_proj_;
  Var<T> h = tape.dropout(gre.apply(tape, tokens), config_.dropout);
  for (const auto& block : blocks) h = block(tape, h);
  return proj(tape, tape.mean_rows(h));
}

template <typename T>
Var<T> SiameseModel<T>::embed(Tape<T>& tape, Var<T> x) const {
  const Var<T> f = frontend(tape, x);
  switch (config_.variant) {
    case Variant::vanilla:
    case Variant::gait:
      return temporal_embedding(tape, f);
    case Variant::vanilla_tc:
      return tape.concat_cols(
          {temporal_embedding(tape, f), channel_branch(tape, f)});
    case Variant::that:
      return tape.concat_cols(
          {that_stream(tape, f, true),
           that_stream(tape, channel_tokens(tape, f), false)});
  }
  throw ConfigError("unknown variant");
}

template <typename T>
Var<T> SiameseModel<T>::score(Tape<T>& tape, Var<T> enrolled,
                              Var<T> questioned) const {
  const auto e1 = tape.val(enrolled).numel();
  const auto e2 = tape.val(questioned).numel();
  if (e1 != config_.embedding_size() || e2 != config_.embedding_size()) {
    throw ValidationError("score: embedding size mismatch, expected " +
                          std::to_string(config_.embedding_size()));
  }
  const Var<T> fused = tape.concat_cols({enrolled, questioned});
  return tape.sigmoid_(head1_(tape, tape.relu(head0_(tape, fused))));
}

template <typename T>
Tensor<T> SiameseModel<T>::embed_value(const Tensor<T>& input) const {
  Tape<T> tape;
  return tape.val(embed(tape, tape.input(input)));
}

template <typename T>
T SiameseModel<T>::score_value(const Tensor<T>& enrolled,
                               const Tensor<T>& questioned) const {
  Tape<T> tape;
  const Var<T> e1 = embed(tape, tape.input(enrolled));
  const Var<T> e2 = embed(tape, tape.input(questioned));
  return tape.val(score(tape, e1, e2)).at(0);
}

template <typename T>
T SiameseModel<T>::symmetric_score(const Tensor<T>& a, const Tensor<T>& b) const {
  return (score_value(a, b) + score_value(b, a)) / T(2);
}

template class SiameseModel<float>;
template class SiameseModel<double>;
template struct EncoderBlock<float>;
template struct EncoderBlock<double>;

namespace {

template <typename T>
GradCheckReport gradcheck_variant(Variant variant, std::uint64_t seed,
                                  double h) {
  const ModelConfig config = ModelConfig::reduced(variant, seed);
  SiameseModel<T> model(config);
  Rng rng(derive_seed(seed, 0x47434b00ull));
  Tensor<T> a = Tensor<T>::zeros({config.input_length, config.input_channels});
  Tensor<T> b = Tensor<T>::zeros({config.input_length, config.input_channels});
  init_normal(a, rng, 1.0);
  init_normal(b, rng, 1.0);
  return grad_check<T>(
      model.params(),
      [&](Tape<T>& tape) {
        const Var<T> e1 = model.embed(tape, tape.input(a));
        const Var<T> e2 = model.embed(tape, tape.input(b));
        return tape.bce_loss(model.score(tape, e1, e2), T(1));
      },
      h);
}

}  // namespace

GradCheckReport gradcheck_variant_f64(Variant variant, std::uint64_t seed) {
  return gradcheck_variant<double>(variant, seed, 1e-5);
}

GradCheckReport gradcheck_variant_f32(Variant variant, std::uint64_t seed) {
  return gradcheck_variant<float>(variant, seed, 1e-3);
}

}  // namespace nn
}  // namespace sigver
