#pragma once

#include <string>
#include <vector>

#include "sigver/nn.hpp"

namespace sigver::nn {

// Parameter bundles for the standard layers. create() registers parameters
// under a dotted prefix in declaration order and initializes them from the
// given stream, so a fixed seed pins every weight.

template <typename T>
struct Linear {
  Parameter<T>* w = nullptr;
  Parameter<T>* b = nullptr;

  static Linear create(ParameterStore<T>& store, const std::string& prefix,
                       std::int64_t in, std::int64_t out, Rng& rng) {
    Linear l;
    l.w = &store.create(prefix + ".w", {in, out});
    l.b = &store.create(prefix + ".b", {out});
    init_xavier_uniform(l.w->value, rng, in, out);
    return l;
  }

  Var<T> operator()(Tape<T>& tape, Var<T> x) const {
    return tape.affine(x, tape.param(*w), tape.param(*b));
  }
};

template <typename T>
struct Conv1d {
  Parameter<T>* w = nullptr;  // {kernel, cin, cout}
  Parameter<T>* b = nullptr;
  std::int64_t kernel = 0;

  static Conv1d create(ParameterStore<T>& store, const std::string& prefix,
                       std::int64_t kernel, std::int64_t cin, std::int64_t cout,
                       Rng& rng) {
    Conv1d c;
    c.kernel = kernel;
    c.w = &store.create(prefix + ".w", {kernel, cin, cout});
    c.b = &store.create(prefix + ".b", {cout});
    init_xavier_uniform(c.w->value, rng, kernel * cin, kernel * cout);
    return c;
  }

  Var<T> operator()(Tape<T>& tape, Var<T> x) const {
    return tape.conv1d_same(x, tape.param(*w), tape.param(*b));
  }
};

template <typename T>
struct LayerNorm {
  Parameter<T>* gain = nullptr;
  Parameter<T>* shift = nullptr;

  static LayerNorm create(ParameterStore<T>& store, const std::string& prefix,
                          std::int64_t dim) {
    LayerNorm n;
    n.gain = &store.create(prefix + ".gain", {dim});
    n.shift = &store.create(prefix + ".shift", {dim});
    n.gain->value.fill(T(1));
    return n;
  }

  Var<T> operator()(Tape<T>& tape, Var<T> x) const {
    return tape.layer_norm(x, tape.param(*gain), tape.param(*shift));
  }
};

// Scaled dot-product multi-head attention over a T x d sequence, scale
// 1/sqrt(d/heads). attention_out, when given, receives the per-head weight
// matrices.
template <typename T>
struct MultiHeadAttention {
  Linear<T> q, k, v, o;
  int heads = 1;

  static MultiHeadAttention create(ParameterStore<T>& store,
                                   const std::string& prefix, std::int64_t dim,
                                   int heads, Rng& rng) {
    if (heads < 1 || dim % heads != 0) {
      throw ConfigError("attention: model dim " + std::to_string(dim) +
                        " not divisible by heads " + std::to_string(heads));
    }
    MultiHeadAttention m;
    m.heads = heads;
    m.q = Linear<T>::create(store, prefix + ".wq", dim, dim, rng);
    m.k = Linear<T>::create(store, prefix + ".wk", dim, dim, rng);
    m.v = Linear<T>::create(store, prefix + ".wv", dim, dim, rng);
    m.o = Linear<T>::create(store, prefix + ".wo", dim, dim, rng);
    return m;
  }

  Var<T> operator()(Tape<T>& tape, Var<T> x,
                    std::vector<Var<T>>* attention_out = nullptr) const {
    const std::int64_t dim = tape.val(x).view_cols();
    const std::int64_t dh = dim / heads;
    const Var<T> qs = q(tape, x);
    const Var<T> ks = k(tape, x);
    const Var<T> vs = v(tape, x);
    const T scale = static_cast<T>(1.0 / std::sqrt(static_cast<double>(dh)));
    std::vector<Var<T>> outs;
    outs.reserve(static_cast<std::size_t>(heads));
    for (int h = 0; h < heads; ++h) {
      const std::int64_t c0 = h * dh;
      const Var<T> qh = tape.slice_cols(qs, c0, c0 + dh);
      const Var<T> kh = tape.slice_cols(ks, c0, c0 + dh);
      const Var<T> vh = tape.slice_cols(vs, c0, c0 + dh);
      const Var<T> scores =
          tape.scale(tape.matmul(qh, tape.transpose(kh)), scale);
      const Var<T> weights = tape.softmax_rows(scores);
      if (attention_out) attention_out->push_back(weights);
      outs.push_back(tape.matmul(weights, vh));
    }
    return o(tape, tape.concat_cols(outs));
  }
};

// Gated recurrent unit. Gate order in the fused input projection is
// [update | reset | candidate]; the reset gate applies to the hidden state
// before the candidate matmul. Zero initial state.
template <typename T>
struct Gru {
  Parameter<T>* w_ih = nullptr;  // {d_in, 3H}
  Parameter<T>* u_zr = nullptr;  // {H, 2H}
  Parameter<T>* u_c = nullptr;   // {H, H}
  Parameter<T>* bias = nullptr;  // {3H}
  std::int64_t hidden = 0;

  static Gru create(ParameterStore<T>& store, const std::string& prefix,
                    std::int64_t d_in, std::int64_t hidden, Rng& rng) {
    Gru g;
    g.hidden = hidden;
    g.w_ih = &store.create(prefix + ".w_ih", {d_in, 3 * hidden});
    g.u_zr = &store.create(prefix + ".u_zr", {hidden, 2 * hidden});
    g.u_c = &store.create(prefix + ".u_c", {hidden, hidden});
    g.bias = &store.create(prefix + ".b", {3 * hidden});
    init_xavier_uniform(g.w_ih->value, rng, d_in, hidden);
    init_xavier_uniform(g.u_zr->value, rng, hidden, hidden);
    init_xavier_uniform(g.u_c->value, rng, hidden, hidden);
    return g;
  }

  // x: T x d_in -> final hidden state 1 x H.
  Var<T> final_state(Tape<T>& tape, Var<T> x) const {
    const std::int64_t steps = tape.val(x).view_rows();
    const std::int64_t h = hidden;
    // One fused projection for the whole sequence, sliced per step.
    const Var<T> xp = tape.affine(x, tape.param(*w_ih), tape.param(*bias));
    const Var<T> uzr = tape.param(*u_zr);
    const Var<T> uc = tape.param(*u_c);
    Var<T> state = tape.input(Tensor<T>::zeros({1, h}));
    for (std::int64_t t = 0; t < steps; ++t) {
      const Var<T> xt = tape.slice_rows(xp, t, t + 1);
      const Var<T> gates_zr = tape.sigmoid_(
          tape.add(tape.slice_cols(xt, 0, 2 * h), tape.matmul(state, uzr)));
      const Var<T> z = tape.slice_cols(gates_zr, 0, h);
      const Var<T> r = tape.slice_cols(gates_zr, h, 2 * h);
      const Var<T> candidate = tape.tanh_(
          tape.add(tape.slice_cols(xt, 2 * h, 3 * h),
                   tape.matmul(tape.mul(r, state), uc)));
      state = tape.add(tape.mul(tape.one_minus(z), state),
                       tape.mul(z, candidate));
    }
    return state;
  }
};

// Learnable Gaussian range encoding added to a T x d sequence. Means start
// evenly spaced over [0, T), scales at T/K through an inverse softplus, and
// each range carries a learned d-dim embedding.
template <typename T>
struct GaussianRangeEncoding {
  Parameter<T>* mu = nullptr;         // {K}
  Parameter<T>* sigma_raw = nullptr;  // {K}
  Parameter<T>* embedding = nullptr;  // {K, d}
  std::int64_t positions = 0;

  static GaussianRangeEncoding create(ParameterStore<T>& store,
                                      const std::string& prefix,
                                      std::int64_t positions, std::int64_t dim,
                                      std::int64_t ranges, Rng& rng) {
    if (ranges < 2) {
      throw ConfigError("gaussian range encoding: needs at least 2 ranges");
    }
    GaussianRangeEncoding g;
    g.positions = positions;
    g.mu = &store.create(prefix + ".mu", {ranges});
    g.sigma_raw = &store.create(prefix + ".sigma_raw", {ranges});
    g.embedding = &store.create(prefix + ".e", {ranges, dim});
    const double spacing =
        static_cast<double>(positions) / static_cast<double>(ranges);
    for (std::int64_t k = 0; k < ranges; ++k) {
      g.mu->value.at(k) = static_cast<T>(spacing * static_cast<double>(k));
      g.sigma_raw->value.at(k) = static_cast<T>(inverse_softplus(spacing));
    }
    init_normal(g.embedding->value, rng, 0.02);
    return g;
  }

  Var<T> weights(Tape<T>& tape) const {
    return tape.gre_weights(tape.param(*mu), tape.param(*sigma_raw), positions);
  }

  Var<T> apply(Tape<T>& tape, Var<T> x) const {
    if (tape.val(x).view_rows() != positions) {
      throw ValidationError("gaussian range encoding: expected " +
                            std::to_string(positions) + " positions, got " +
                            shape_string(tape.val(x)));
    }
    return tape.add(x, tape.matmul(weights(tape), tape.param(*embedding)));
  }

  static double inverse_softplus(double y) {
    // softplus(x) = y  =>  x = y + log(1 - exp(-y)), stable for y > 0.
    return y + std::log1p(-std::exp(-y));
  }
};

}  // namespace sigver::nn
