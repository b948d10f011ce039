#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "sigver/tensor.hpp"

namespace sigver::nn {

// Named parameter with a persistent gradient accumulator. Gradients from
// multiple backward passes add up until zero_grad(), which is what makes the
// weight-shared Siamese forward work without any special casing.
template <typename T>
struct Parameter {
  std::string name;
  Tensor<T> value;
  Tensor<T> grad;

  void zero_grad() { grad.set_zero(); }
};

template <typename T>
class Tape;

// Handle to a node on a tape.
template <typename T>
struct Var {
  int id = -1;
};

// Reverse-mode differentiation over a dynamically recorded computation.
// Record ops through the primitive methods, then call backward() on a scalar
// node; analytic gradients accumulate into Parameter::grad. A tape owns its
// intermediate values; build a fresh tape per forward pass.
template <typename T>
class Tape {
 public:
  explicit Tape(bool training = false, std::uint64_t dropout_seed = 0)
      : training_(training), rng_(dropout_seed) {}

  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool training() const { return training_; }
  std::size_t size() const { return nodes_.size(); }

  const Tensor<T>& val(Var<T> v) const { return nodes_[idx(v)].value; }
  const Tensor<T>& grad(Var<T> v) const { return nodes_[idx(v)].grad; }

  Var<T> input(Tensor<T> value) {
    return push(std::move(value), false, nullptr);
  }

  Var<T> param(Parameter<T>& p) {
    Tensor<T> copy = p.value;
    const Var<T> v = push(std::move(copy), true, &p);
    const int id = v.id;
    nodes_[static_cast<std::size_t>(id)].backward = [this, id] {
      Node& n = nodes_[static_cast<std::size_t>(id)];
      auto g = n.bound->grad.mat();
      g += n.grad.mat();
    };
    return v;
  }

  // ---- elementwise ----

  Var<T> add(Var<T> a, Var<T> b) {
    check_same_shape("add", a, b);
    Tensor<T> out = val(a);
    out.mat() += val(b).mat();
    return binary(std::move(out), a, b, [this](Node& n, int pa, int pb) {
      accumulate(pa, n.grad.mat());
      accumulate(pb, n.grad.mat());
    });
  }

  Var<T> sub(Var<T> a, Var<T> b) {
    check_same_shape("sub", a, b);
    Tensor<T> out = val(a);
    out.mat() -= val(b).mat();
    return binary(std::move(out), a, b, [this](Node& n, int pa, int pb) {
      accumulate(pa, n.grad.mat());
      accumulate(pb, -n.grad.mat());
    });
  }

  Var<T> mul(Var<T> a, Var<T> b) {
    check_same_shape("mul", a, b);
    Tensor<T> out = val(a);
    out.mat() = out.mat().cwiseProduct(val(b).mat());
    return binary(std::move(out), a, b, [this](Node& n, int pa, int pb) {
      accumulate(pa, n.grad.mat().cwiseProduct(value_of(pb).mat()));
      accumulate(pb, n.grad.mat().cwiseProduct(value_of(pa).mat()));
    });
  }

  Var<T> scale(Var<T> a, T c) {
    Tensor<T> out = val(a);
    out.mat() *= c;
    return unary(std::move(out), a, [this, c](Node& n, int pa) {
      accumulate(pa, n.grad.mat() * c);
    });
  }

  Var<T> one_minus(Var<T> a) {
    Tensor<T> out = val(a);
    out.mat() = (T(1) - out.mat().array()).matrix();
    return unary(std::move(out), a, [this](Node& n, int pa) {
      accumulate(pa, -n.grad.mat());
    });
  }

  Var<T> relu(Var<T> a) {
    Tensor<T> out = val(a);
    out.mat() = out.mat().cwiseMax(T(0));
    return unary(std::move(out), a, [this](Node& n, int pa) {
      // Subgradient 0 at exactly 0.
      auto mask = (value_of(pa).mat().array() > T(0)).template cast<T>();
      accumulate(pa, (n.grad.mat().array() * mask).matrix());
    });
  }

  Var<T> tanh_(Var<T> a) {
    Tensor<T> out = val(a);
    out.mat() = out.mat().array().tanh().matrix();
    return unary(std::move(out), a, [this](Node& n, int pa) {
      auto y = n.value.mat().array();
      accumulate(pa, (n.grad.mat().array() * (T(1) - y.square())).matrix());
    });
  }

  Var<T> sigmoid_(Var<T> a) {
    Tensor<T> out = val(a);
    out.mat() = (T(1) / (T(1) + (-out.mat().array()).exp())).matrix();
    return unary(std::move(out), a, [this](Node& n, int pa) {
      auto y = n.value.mat().array();
      accumulate(pa, (n.grad.mat().array() * y * (T(1) - y)).matrix());
    });
  }

  // ---- linear algebra ----

  Var<T> matmul(Var<T> a, Var<T> b) {
    const auto& va = val(a);
    const auto& vb = val(b);
    if (va.view_cols() != vb.view_rows()) {
      shape_error("matmul", va, vb);
    }
    Tensor<T> out = Tensor<T>::zeros({va.view_rows(), vb.view_cols()});
    out.mat().noalias() = va.mat() * vb.mat();
    return binary(std::move(out), a, b, [this](Node& n, int pa, int pb) {
      if (needs(pa)) {
        ensure_grad(pa);
        grad_of(pa).mat().noalias() += n.grad.mat() * value_of(pb).mat().transpose();
      }
      if (needs(pb)) {
        ensure_grad(pb);
        grad_of(pb).mat().noalias() += value_of(pa).mat().transpose() * n.grad.mat();
      }
    });
  }

  // y = x*w + b (b broadcast over rows).
  Var<T> affine(Var<T> x, Var<T> w, Var<T> b) {
    const auto& vx = val(x);
    const auto& vw = val(w);
    const auto& vb = val(b);
    if (vx.view_cols() != vw.view_rows() || vw.view_cols() != vb.numel()) {
      throw ValidationError("affine: incompatible shapes x" + shape_string(vx) +
                            " w" + shape_string(vw) + " b" + shape_string(vb));
    }
    Tensor<T> out = Tensor<T>::zeros({vx.view_rows(), vw.view_cols()});
    out.mat().noalias() = vx.mat() * vw.mat();
    out.mat().rowwise() += vb.mat().row(0);
    return ternary(std::move(out), x, w, b,
                   [this](Node& n, int px, int pw, int pb) {
                     if (needs(px)) {
                       ensure_grad(px);
                       grad_of(px).mat().noalias() +=
                           n.grad.mat() * value_of(pw).mat().transpose();
                     }
                     if (needs(pw)) {
                       ensure_grad(pw);
                       grad_of(pw).mat().noalias() +=
                           value_of(px).mat().transpose() * n.grad.mat();
                     }
                     if (needs(pb)) {
                       ensure_grad(pb);
                       grad_of(pb).mat().row(0) += n.grad.mat().colwise().sum();
                     }
                   });
  }

  Var<T> transpose(Var<T> a) {
    const auto& va = val(a);
    Tensor<T> out = Tensor<T>::zeros({va.view_cols(), va.view_rows()});
    out.mat() = va.mat().transpose();
    return unary(std::move(out), a, [this](Node& n, int pa) {
      accumulate(pa, n.grad.mat().transpose());
    });
  }

  // ---- convolution / pooling ----

  // 1-D convolution along rows, stride 1, zero "same" padding.
  // x: L x Cin, w: {K, Cin, Cout} (K odd), b: {Cout} -> L x Cout.
  Var<T> conv1d_same(Var<T> x, Var<T> w, Var<T> b) {
    const auto& vx = val(x);
    const auto& vw = val(w);
    const auto& vb = val(b);
    if (vw.rank() != 3 || vw.shape[0] % 2 == 0 || vw.shape[1] != vx.view_cols() ||
        vw.shape[2] != vb.numel()) {
      throw ValidationError("conv1d: incompatible shapes x" + shape_string(vx) +
                            " w" + shape_string(vw) + " b" + shape_string(vb));
    }
    const std::int64_t kernel = vw.shape[0];
    const std::int64_t cin = vw.shape[1];
    const std::int64_t cout = vw.shape[2];
    const std::int64_t rows = vx.view_rows();

    Tensor<T> cols = im2col(vx, kernel, cin);
    Tensor<T> out = Tensor<T>::zeros({rows, cout});
    out.mat().noalias() = cols.mat() * vw.mat();
    out.mat().rowwise() += vb.mat().row(0);

    return ternary(
        std::move(out), x, w, b,
        [this, kernel, cin](Node& n, int px, int pw, int pb) {
          const auto& vx2 = value_of(px);
          if (needs(pw)) {
            ensure_grad(pw);
            Tensor<T> cols2 = im2col(vx2, kernel, cin);
            grad_of(pw).mat().noalias() += cols2.mat().transpose() * n.grad.mat();
          }
          if (needs(pb)) {
            ensure_grad(pb);
            grad_of(pb).mat().row(0) += n.grad.mat().colwise().sum();
          }
          if (needs(px)) {
            ensure_grad(px);
            Tensor<T> dcols = Tensor<T>::zeros({vx2.view_rows(), kernel * cin});
            dcols.mat().noalias() = n.grad.mat() * value_of(pw).mat().transpose();
            col2im_add(grad_of(px), dcols, kernel, cin);
          }
        });
  }

  // Max-pool, window 2, stride 2 over rows; requires an even row count.
  // Ties resolve to the earlier row.
  Var<T> maxpool2(Var<T> x) {
    const auto& vx = val(x);
    if (vx.view_rows() % 2 != 0) {
      throw ValidationError("maxpool2: odd row count " + shape_string(vx));
    }
    const std::int64_t half = vx.view_rows() / 2;
    const std::int64_t c = vx.view_cols();
    Tensor<T> out = Tensor<T>::zeros({half, c});
    out.mat() = vx.mat()(Eigen::seqN(0, half, 2), Eigen::all)
                    .cwiseMax(vx.mat()(Eigen::seqN(1, half, 2), Eigen::all));
    return unary(std::move(out), x, [this, half, c](Node& n, int px) {
      if (!needs(px)) return;
      ensure_grad(px);
      auto xv = value_of(px).mat();
      auto xg = grad_of(px).mat();
      for (std::int64_t l = 0; l < half; ++l) {
        for (std::int64_t j = 0; j < c; ++j) {
          const std::int64_t r = xv(2 * l, j) >= xv(2 * l + 1, j) ? 2 * l : 2 * l + 1;
          xg(r, j) += n.grad.mat()(l, j);
        }
      }
    });
  }

  // ---- normalization / regularization ----

  Var<T> softmax_rows(Var<T> a) {
    const auto& va = val(a);
    Tensor<T> out = va;
    auto m = out.mat();
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      auto row = m.row(r).array();
      row -= row.maxCoeff();
      row = row.exp();
      row /= row.sum();
    }
    return unary(std::move(out), a, [this](Node& n, int pa) {
      if (!needs(pa)) return;
      ensure_grad(pa);
      auto y = n.value.mat();
      auto g = n.grad.mat();
      auto xg = grad_of(pa).mat();
      for (Eigen::Index r = 0; r < y.rows(); ++r) {
        const T dot = y.row(r).dot(g.row(r));
        xg.row(r).array() +=
            y.row(r).array() * (g.row(r).array() - dot);
      }
    });
  }

  // Row-wise layer normalization with learned scale/shift, eps 1e-5.
  Var<T> layer_norm(Var<T> x, Var<T> gain, Var<T> shift) {
    const auto& vx = val(x);
    const auto& vg = val(gain);
    const auto& vs = val(shift);
    if (vg.numel() != vx.view_cols() || vs.numel() != vx.view_cols()) {
      throw ValidationError("layer_norm: incompatible shapes x" +
                            shape_string(vx) + " gain" + shape_string(vg) +
                            " shift" + shape_string(vs));
    }
    const T eps = static_cast<T>(1e-5);
    const std::int64_t rows = vx.view_rows();
    const std::int64_t cols = vx.view_cols();
    Tensor<T> xhat = Tensor<T>::zeros({rows, cols});
    Tensor<T> istds = Tensor<T>::zeros({rows});
    for (std::int64_t r = 0; r < rows; ++r) {
      auto row = vx.mat().row(r).array();
      const T mean = row.mean();
      const T var = (row - mean).square().mean();
      const T istd = T(1) / std::sqrt(var + eps);
      istds.at(r) = istd;
      xhat.mat().row(r) = ((row - mean) * istd).matrix();
    }
    Tensor<T> out = Tensor<T>::zeros({rows, cols});
    out.mat() =
        (xhat.mat().array().rowwise() * vg.mat().row(0).array()).matrix();
    out.mat().rowwise() += vs.mat().row(0);

    auto xhat_ptr = std::make_shared<Tensor<T>>(std::move(xhat));
    auto istd_ptr = std::make_shared<Tensor<T>>(std::move(istds));
    return ternary(
        std::move(out), x, gain, shift,
        [this, xhat_ptr, istd_ptr, cols](Node& n, int px, int pg, int ps) {
          auto g = n.grad.mat();
          auto xh = xhat_ptr->mat();
          if (needs(pg)) {
            ensure_grad(pg);
            grad_of(pg).mat().row(0) += g.cwiseProduct(xh).colwise().sum();
          }
          if (needs(ps)) {
            ensure_grad(ps);
            grad_of(ps).mat().row(0) += g.colwise().sum();
          }
          if (needs(px)) {
            ensure_grad(px);
            auto xg = grad_of(px).mat();
            auto gamma = value_of(pg).mat().row(0).array();
            const T inv_n = T(1) / static_cast<T>(cols);
            for (Eigen::Index r = 0; r < g.rows(); ++r) {
              auto dxhat = (g.row(r).array() * gamma).eval();
              const T mean_dxhat = dxhat.mean();
              const T mean_dxhat_xhat =
                  (dxhat * xh.row(r).array()).sum() * inv_n;
              xg.row(r).array() += istd_ptr->at(r) *
                                   (dxhat - mean_dxhat -
                                    xh.row(r).array() * mean_dxhat_xhat);
            }
          }
        });
  }

  // Inverted dropout; identity when the tape is in evaluation mode. Masks
  // come from the tape's seeded stream, so a rebuilt identical graph draws
  // identical masks.
  Var<T> dropout(Var<T> x, double rate) {
    if (!training_ || rate <= 0.0) return x;
    if (rate >= 1.0) throw ValidationError("dropout: rate must be < 1");
    const auto& vx = val(x);
    auto mask = std::make_shared<std::vector<std::uint8_t>>(vx.data.size());
    const T keep_scale = static_cast<T>(1.0 / (1.0 - rate));
    Tensor<T> out = vx;
    for (std::size_t i = 0; i < out.data.size(); ++i) {
      const bool keep = rng_.uniform() >= rate;
      (*mask)[i] = keep;
      out.data[i] = keep ? out.data[i] * keep_scale : T(0);
    }
    return unary(std::move(out), x, [this, mask, keep_scale](Node& n, int px) {
      if (!needs(px)) return;
      ensure_grad(px);
      auto& xg = grad_of(px).data;
      for (std::size_t i = 0; i < xg.size(); ++i) {
        if ((*mask)[i]) xg[i] += n.grad.data[i] * keep_scale;
      }
    });
  }

  // ---- reductions / reshaping ----

  Var<T> sum_all(Var<T> a) {
    Tensor<T> out = Tensor<T>::zeros({1, 1});
    out.at(0) = val(a).mat().sum();
    return unary(std::move(out), a, [this](Node& n, int pa) {
      if (!needs(pa)) return;
      ensure_grad(pa);
      grad_of(pa).mat().array() += n.grad.at(0);
    });
  }

  Var<T> mean_rows(Var<T> a) {
    const auto& va = val(a);
    const auto rows = va.view_rows();
    Tensor<T> out = Tensor<T>::zeros({1, va.view_cols()});
    out.mat().row(0) = va.mat().colwise().mean();
    return unary(std::move(out), a, [this, rows](Node& n, int pa) {
      if (!needs(pa)) return;
      ensure_grad(pa);
      grad_of(pa).mat().rowwise() +=
          n.grad.mat().row(0) / static_cast<T>(rows);
    });
  }

  Var<T> slice_rows(Var<T> a, std::int64_t r0, std::int64_t r1) {
    const auto& va = val(a);
    if (r0 < 0 || r1 > va.view_rows() || r0 >= r1) {
      throw ValidationError("slice_rows: bad range on " + shape_string(va));
    }
    Tensor<T> out = Tensor<T>::zeros({r1 - r0, va.view_cols()});
    out.mat() = va.mat().middleRows(r0, r1 - r0);
    return unary(std::move(out), a, [this, r0, r1](Node& n, int pa) {
      if (!needs(pa)) return;
      ensure_grad(pa);
      grad_of(pa).mat().middleRows(r0, r1 - r0) += n.grad.mat();
    });
  }

  Var<T> slice_cols(Var<T> a, std::int64_t c0, std::int64_t c1) {
    const auto& va = val(a);
    if (c0 < 0 || c1 > va.view_cols() || c0 >= c1) {
      throw ValidationError("slice_cols: bad range on " + shape_string(va));
    }
    Tensor<T> out = Tensor<T>::zeros({va.view_rows(), c1 - c0});
    out.mat() = va.mat().middleCols(c0, c1 - c0);
    return unary(std::move(out), a, [this, c0, c1](Node& n, int pa) {
      if (!needs(pa)) return;
      ensure_grad(pa);
      grad_of(pa).mat().middleCols(c0, c1 - c0) += n.grad.mat();
    });
  }

  Var<T> concat_cols(const std::vector<Var<T>>& parts) {
    if (parts.empty()) throw ValidationError("concat_cols: no inputs");
    const auto rows = val(parts[0]).view_rows();
    std::int64_t cols = 0;
    for (const auto& p : parts) {
      if (val(p).view_rows() != rows) {
        throw ValidationError("concat_cols: row mismatch");
      }
      cols += val(p).view_cols();
    }
    Tensor<T> out = Tensor<T>::zeros({rows, cols});
    std::int64_t off = 0;
    std::vector<std::pair<int, std::int64_t>> layout;
    for (const auto& p : parts) {
      const auto w = val(p).view_cols();
      out.mat().middleCols(off, w) = val(p).mat();
      layout.emplace_back(p.id, off);
      off += w;
    }
    return nary(std::move(out), parts,
                [this, layout](Node& n) {
                  for (const auto& [pid, o] : layout) {
                    if (!needs(pid)) continue;
                    ensure_grad(pid);
                    const auto w = value_of(pid).view_cols();
                    grad_of(pid).mat() += n.grad.mat().middleCols(o, w);
                  }
                });
  }

  // ---- losses ----

  // Binary cross-entropy of a scalar score in (0,1) against a 0/1 target.
  // The score is clamped away from {0,1} before the logs.
  Var<T> bce_loss(Var<T> score, T target) {
    const auto& vs = val(score);
    if (vs.numel() != 1) {
      throw ValidationError("bce_loss: score must be scalar, got " +
                            shape_string(vs));
    }
    const T eps = std::is_same_v<T, float> ? T(1e-7) : T(1e-12);
    const T s = std::clamp(vs.at(0), eps, T(1) - eps);
    Tensor<T> out = Tensor<T>::zeros({1, 1});
    out.at(0) = -(target * std::log(s) + (T(1) - target) * std::log(T(1) - s));
    return unary(std::move(out), score, [this, s, target](Node& n, int ps) {
      if (!needs(ps)) return;
      ensure_grad(ps);
      grad_of(ps).at(0) +=
          n.grad.at(0) * (-(target / s) + (T(1) - target) / (T(1) - s));
    });
  }

  // ---- Gaussian range encoding ----

  // Normalized Gaussian range weights: position i gets
  // w_ik = softmax_k( -((i-mu_k)/sigma_k)^2/2 - ln sigma_k ), with
  // sigma = softplus(sigma_raw) keeping scales positive.
  Var<T> gre_weights(Var<T> mu, Var<T> sigma_raw, std::int64_t positions) {
    const auto& vm = val(mu);
    const auto& vs = val(sigma_raw);
    const std::int64_t ranges = vm.numel();
    if (vs.numel() != ranges) {
      throw ValidationError("gre_weights: mu" + shape_string(vm) +
                            " vs sigma" + shape_string(vs));
    }
    if (ranges < 2) {
      throw ConfigError("gre_weights: needs at least 2 ranges");
    }
    std::vector<T> sigma(static_cast<std::size_t>(ranges));
    for (std::int64_t k = 0; k < ranges; ++k) {
      sigma[static_cast<std::size_t>(k)] = softplus(vs.at(k));
    }
    Tensor<T> out = Tensor<T>::zeros({positions, ranges});
    auto w = out.mat();
    for (std::int64_t i = 0; i < positions; ++i) {
      T maxv = std::numeric_limits<T>::lowest();
      for (std::int64_t k = 0; k < ranges; ++k) {
        const T s = sigma[static_cast<std::size_t>(k)];
        const T z = (static_cast<T>(i) - vm.at(k)) / s;
        const T logp = -T(0.5) * z * z - std::log(s);
        w(i, k) = logp;
        maxv = std::max(maxv, logp);
      }
      T total = T(0);
      for (std::int64_t k = 0; k < ranges; ++k) {
        w(i, k) = std::exp(w(i, k) - maxv);
        total += w(i, k);
      }
      w.row(i) /= total;
    }
    return binary(
        std::move(out), mu, sigma_raw,
        [this, positions, ranges](Node& n, int pm, int ps) {
          const auto& vm2 = value_of(pm);
          const auto& vs2 = value_of(ps);
          auto wv = n.value.mat();
          auto g = n.grad.mat();
          if (needs(pm)) ensure_grad(pm);
          if (needs(ps)) ensure_grad(ps);
          for (std::int64_t i = 0; i < positions; ++i) {
            const T dot = wv.row(i).dot(g.row(i));
            for (std::int64_t k = 0; k < ranges; ++k) {
              const T dlogp = wv(i, k) * (g(i, k) - dot);
              const T s = softplus(vs2.at(k));
              const T z = (static_cast<T>(i) - vm2.at(k)) / s;
              if (needs(pm)) grad_of(pm).at(k) += dlogp * z / s;
              if (needs(ps)) {
                const T dsigma = dlogp * (z * z - T(1)) / s;
                grad_of(ps).at(k) += dsigma * sigmoid_scalar(vs2.at(k));
              }
            }
          }
        });
  }

  // ---- backward ----

  void backward(Var<T> loss) {
    Node& top = nodes_[idx(loss)];
    if (top.value.numel() != 1) {
      throw ValidationError("backward: loss must be scalar, got " +
                            shape_string(top.value));
    }
    ensure_grad(loss.id);
    top.grad.at(0) = T(1);
    for (int id = loss.id; id >= 0; --id) {
      Node& n = nodes_[static_cast<std::size_t>(id)];
      if (n.grad.numel() == 0 || !n.backward) continue;
      n.backward();
    }
  }

  static T softplus(T x) {
    return x > T(0) ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
  }

 private:
  struct Node {
    Tensor<T> value;
    Tensor<T> grad;  // empty until the node joins a backward pass
    std::function<void()> backward;
    bool needs_grad = false;
    Parameter<T>* bound = nullptr;
  };

  static std::size_t idx(Var<T> v) { return static_cast<std::size_t>(v.id); }

  Var<T> push(Tensor<T> value, bool needs_grad, Parameter<T>* bound) {
    Node n;
    n.value = std::move(value);
    n.needs_grad = needs_grad;
    n.bound = bound;
    nodes_.push_back(std::move(n));
    return Var<T>{static_cast<int>(nodes_.size() - 1)};
  }

  bool needs(int id) const {
    return nodes_[static_cast<std::size_t>(id)].needs_grad;
  }

  const Tensor<T>& value_of(int id) const {
    return nodes_[static_cast<std::size_t>(id)].value;
  }

  Tensor<T>& grad_of(int id) {
    return nodes_[static_cast<std::size_t>(id)].grad;
  }

  void ensure_grad(int id) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (n.grad.numel() == 0) n.grad = Tensor<T>::zeros(n.value.shape);
  }

  template <typename Expr>
  void accumulate(int id, const Expr& g) {
    if (!needs(id)) return;
    ensure_grad(id);
    grad_of(id).mat() += g;
  }

  template <typename Fn>
  Var<T> unary(Tensor<T> out, Var<T> a, Fn fn) {
    const bool ng = needs(a.id);
    const Var<T> v = push(std::move(out), ng, nullptr);
    if (ng) {
      const int id = v.id;
      const int pa = a.id;
      nodes_[idx(v)].backward = [this, id, pa, fn] {
        fn(nodes_[static_cast<std::size_t>(id)], pa);
      };
    }
    return v;
  }

  template <typename Fn>
  Var<T> binary(Tensor<T> out, Var<T> a, Var<T> b, Fn fn) {
    const bool ng = needs(a.id) || needs(b.id);
    const Var<T> v = push(std::move(out), ng, nullptr);
    if (ng) {
      const int id = v.id;
      const int pa = a.id, pb = b.id;
      nodes_[idx(v)].backward = [this, id, pa, pb, fn] {
        fn(nodes_[static_cast<std::size_t>(id)], pa, pb);
      };
    }
    return v;
  }

  template <typename Fn>
  Var<T> ternary(Tensor<T> out, Var<T> a, Var<T> b, Var<T> c, Fn fn) {
    const bool ng = needs(a.id) || needs(b.id) || needs(c.id);
    const Var<T> v = push(std::move(out), ng, nullptr);
    if (ng) {
      const int id = v.id;
      const int pa = a.id, pb = b.id, pc = c.id;
      nodes_[idx(v)].backward = [this, id, pa, pb, pc, fn] {
        fn(nodes_[static_cast<std::size_t>(id)], pa, pb, pc);
      };
    }
    return v;
  }

  template <typename Fn>
  Var<T> nary(Tensor<T> out, const std::vector<Var<T>>& parents, Fn fn) {
    bool ng = false;
    for (const auto& p : parents) ng = ng || needs(p.id);
    const Var<T> v = push(std::move(out), ng, nullptr);
    if (ng) {
      const int id = v.id;
      nodes_[idx(v)].backward = [this, id, fn] {
        fn(nodes_[static_cast<std::size_t>(id)]);
      };
    }
    return v;
  }

  void check_same_shape(const char* op, Var<T> a, Var<T> b) const {
    if (!val(a).same_shape(val(b))) {
      throw ValidationError(std::string(op) + ": shape mismatch " +
                            shape_string(val(a)) + " vs " +
                            shape_string(val(b)));
    }
  }

  [[noreturn]] void shape_error(const char* op, const Tensor<T>& a,
                                const Tensor<T>& b) const {
    throw ValidationError(std::string(op) + ": incompatible shapes " +
                          shape_string(a) + " x " + shape_string(b));
  }

  static T sigmoid_scalar(T x) { return T(1) / (T(1) + std::exp(-x)); }

  // im2col for "same" zero padding: row l holds the K*Cin window centered
  // at l.
  Tensor<T> im2col(const Tensor<T>& x, std::int64_t kernel,
                   std::int64_t cin) const {
    const std::int64_t rows = x.view_rows();
    const std::int64_t offset = (kernel - 1) / 2;
    Tensor<T> cols = Tensor<T>::zeros({rows, kernel * cin});
    for (std::int64_t k = 0; k < kernel; ++k) {
      const std::int64_t shift = k - offset;
      const std::int64_t l0 = std::max<std::int64_t>(0, -shift);
      const std::int64_t l1 = std::min(rows, rows - shift);
      if (l1 <= l0) continue;
      cols.mat().block(l0, k * cin, l1 - l0, cin) =
          x.mat().block(l0 + shift, 0, l1 - l0, cin);
    }
    return cols;
  }

  void col2im_add(Tensor<T>& dx, const Tensor<T>& dcols, std::int64_t kernel,
                  std::int64_t cin) const {
    const std::int64_t rows = dx.view_rows();
    const std::int64_t offset = (kernel - 1) / 2;
    for (std::int64_t k = 0; k < kernel; ++k) {
      const std::int64_t shift = k - offset;
      const std::int64_t l0 = std::max<std::int64_t>(0, -shift);
      const std::int64_t l1 = std::min(rows, rows - shift);
      if (l1 <= l0) continue;
      dx.mat().block(l0 + shift, 0, l1 - l0, cin) +=
          dcols.mat().block(l0, k * cin, l1 - l0, cin);
    }
  }

  std::vector<Node> nodes_;
  bool training_;
  Rng rng_;
};

}  // namespace sigver::nn
