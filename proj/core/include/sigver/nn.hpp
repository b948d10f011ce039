#pragma once

#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "sigver/tape.hpp"

namespace sigver::nn {

// Registry of uniquely named parameters. Registration order is the
// deterministic initialization and optimizer-state order.
template <typename T>
class ParameterStore {
 public:
  Parameter<T>& create(const std::string& name,
                       std::vector<std::int64_t> shape) {
    if (index_.count(name)) {
      throw ValidationError("duplicate parameter name: " + name);
    }
    auto p = std::make_unique<Parameter<T>>();
    p->name = name;
    p->value = Tensor<T>::zeros(shape);
    p->grad = Tensor<T>::zeros(std::move(shape));
    params_.push_back(std::move(p));
    index_[name] = params_.size() - 1;
    return *params_.back();
  }

  Parameter<T>& at(const std::string& name) {
    const auto it = index_.find(name);
    if (it == index_.end()) {
      throw ValidationError("unknown parameter: " + name);
    }
    return *params_[it->second];
  }

  bool contains(const std::string& name) const { return index_.count(name); }

  const std::vector<std::unique_ptr<Parameter<T>>>& all() const {
    return params_;
  }

  std::int64_t total_parameters() const {
    std::int64_t n = 0;
    for (const auto& p : params_) n += p->value.numel();
    return n;
  }

  void zero_grads() {
    for (auto& p : params_) p->zero_grad();
  }

 private:
  std::vector<std::unique_ptr<Parameter<T>>> params_;
  std::map<std::string, std::size_t> index_;
};

// Adam with bias correction; first/second moments persist across steps,
// ordered like the store.
template <typename T>
class AdamOptimizer {
 public:
  explicit AdamOptimizer(double lr = 1e-3, double beta1 = 0.9,
                         double beta2 = 0.999, double eps = 1e-8)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  double learning_rate() const { return lr_; }
  void set_learning_rate(double lr) { lr_ = lr; }
  std::int64_t step_count() const { return t_; }

  void step(ParameterStore<T>& params) {
    if (state_.empty()) {
      for (const auto& p : params.all()) {
        state_.push_back({Tensor<T>::zeros(p->value.shape),
                          Tensor<T>::zeros(p->value.shape)});
      }
    }
    ++t_;
    const T b1 = static_cast<T>(beta1_);
    const T b2 = static_cast<T>(beta2_);
    const T correction1 =
        static_cast<T>(1.0 - std::pow(beta1_, static_cast<double>(t_)));
    const T correction2 =
        static_cast<T>(1.0 - std::pow(beta2_, static_cast<double>(t_)));
    const T lr = static_cast<T>(lr_);
    const T eps = static_cast<T>(eps_);
    const auto& all = params.all();
    for (std::size_t i = 0; i < all.size(); ++i) {
      auto& p = *all[i];
      auto& m = state_[i].m;
      auto& v = state_[i].v;
      auto g = p.grad.mat().array();
      m.mat().array() = b1 * m.mat().array() + (T(1) - b1) * g;
      v.mat().array() = b2 * v.mat().array() + (T(1) - b2) * g.square();
      auto mhat = m.mat().array() / correction1;
      auto vhat = v.mat().array() / correction2;
      p.value.mat().array() -= lr * mhat / (vhat.sqrt() + eps);
    }
  }

  // Moment access by parameter name, for checkpointing.
  bool has_state() const { return !state_.empty(); }
  const Tensor<T>& first_moment(std::size_t i) const { return state_[i].m; }
  const Tensor<T>& second_moment(std::size_t i) const { return state_[i].v; }
  void restore_state(std::vector<Tensor<T>> m, std::vector<Tensor<T>> v,
                     std::int64_t t) {
    state_.clear();
    for (std::size_t i = 0; i < m.size(); ++i) {
      state_.push_back({std::move(m[i]), std::move(v[i])});
    }
    t_ = t;
  }

 private:
  struct Moments {
    Tensor<T> m, v;
  };
  double lr_, beta1_, beta2_, eps_;
  std::vector<Moments> state_;
  std::int64_t t_ = 0;
};

struct GradCheckReport {
  double max_relative_error = 0.0;
  std::string worst_parameter;
  std::int64_t checked_values = 0;
};

// Central finite differences against the analytic gradients of a scalar
// loss. build_loss must rebuild the same computation on any fresh tape; it
// runs twice per checked parameter value with the value perturbed by +/- h.
// Relative error: |ga - gf| / max(|ga|, |gf|, 1e-8).
template <typename T>
GradCheckReport grad_check(
    ParameterStore<T>& params,
    const std::function<Var<T>(Tape<T>&)>& build_loss, double h = 1e-5) {
  params.zero_grads();
  {
    Tape<T> tape;
    tape.backward(build_loss(tape));
  }
  std::vector<Tensor<T>> analytic;
  for (const auto& p : params.all()) analytic.push_back(p->grad);

  auto eval_loss = [&]() -> double {
    Tape<T> tape;
    const Var<T> loss = build_loss(tape);
    return static_cast<double>(tape.val(loss).at(0));
  };

  GradCheckReport report;
  const auto& all = params.all();
  for (std::size_t pi = 0; pi < all.size(); ++pi) {
    auto& p = *all[pi];
    for (std::int64_t i = 0; i < p.value.numel(); ++i) {
      const T saved = p.value.at(i);
      p.value.at(i) = saved + static_cast<T>(h);
      const double up = eval_loss();
      p.value.at(i) = saved - static_cast<T>(h);
      const double down = eval_loss();
      p.value.at(i) = saved;
      const double fd = (up - down) / (2.0 * h);
      const double ga = static_cast<double>(analytic[pi].at(i));
      const double denom = std::max({std::abs(ga), std::abs(fd), 1e-8});
      const double rel = std::abs(ga - fd) / denom;
      ++report.checked_values;
      if (rel > report.max_relative_error) {
        report.max_relative_error = rel;
        report.worst_parameter = p.name + "[" + std::to_string(i) + "]";
      }
    }
  }
  return report;
}

}  // namespace sigver::nn
