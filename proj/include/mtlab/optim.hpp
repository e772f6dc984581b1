#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "mtlab/tensor.hpp"

namespace mtlab {

// Learning-rate schedules: linear warmup followed by cosine decay to zero, or
// a constant segment followed by inverse-square-root decay.
struct ScheduleSpec {
  enum class Kind { warmup_cosine, constant_inv_sqrt };
  Kind kind = Kind::warmup_cosine;
  long warmup_steps = 0;
  long total_steps = 0;  // cosine only
  double peak_lr = 0.0;  // peak for cosine, base for inv-sqrt

  void validate() const {
    if (peak_lr <= 0.0) throw std::invalid_argument("ScheduleSpec: peak_lr must be positive");
    if (warmup_steps < 0) throw std::invalid_argument("ScheduleSpec: negative warmup");
    if (kind == Kind::warmup_cosine && warmup_steps > total_steps)
      throw std::invalid_argument("ScheduleSpec: warmup exceeds total steps");
  }
};

inline double lr_warmup_cosine(long step, const ScheduleSpec& spec) {
  spec.validate();
  if (step < 0 || step > spec.total_steps)
    throw std::invalid_argument("lr_warmup_cosine: step " + std::to_string(step) +
                                " outside [0," + std::to_string(spec.total_steps) + "]");
  if (step <= spec.warmup_steps) {
    if (spec.warmup_steps == 0) return spec.peak_lr;
    return spec.peak_lr * static_cast<double>(step) / static_cast<double>(spec.warmup_steps);
  }
  const double progress = static_cast<double>(step - spec.warmup_steps) /
                          static_cast<double>(spec.total_steps - spec.warmup_steps);
  return spec.peak_lr * 0.5 * (1.0 + std::cos(3.14159265358979323846 * progress));
}

inline double lr_constant_inv_sqrt(long step, const ScheduleSpec& spec) {
  spec.validate();
  if (step < 0) throw std::invalid_argument("lr_constant_inv_sqrt: negative step");
  if (step <= spec.warmup_steps || spec.warmup_steps == 0) return spec.peak_lr;
  return spec.peak_lr *
         std::sqrt(static_cast<double>(spec.warmup_steps) / static_cast<double>(step));
}

inline double learning_rate(long step, const ScheduleSpec& spec) {
  return spec.kind == ScheduleSpec::Kind::warmup_cosine ? lr_warmup_cosine(step, spec)
                                                        : lr_constant_inv_sqrt(step, spec);
}

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.98;
  double eps = 1e-9;
};

// Adam with bias correction. Moments are shape-congruent with the parameter
// list they were built from; reset() zeroes them and the step counter while
// keeping the hyperparameters.
class AdamState {
 public:
  AdamState() = default;
  AdamState(const std::vector<Tensor>& params, AdamConfig config = {}) : config_(config) {
    m_.reserve(params.size());
    v_.reserve(params.size());
    for (const Tensor& p : params) {
      m_.push_back(Tensor::zeros(p.shape));
      v_.push_back(Tensor::zeros(p.shape));
    }
  }

  long step_count() const { return step_count_; }
  const AdamConfig& config() const { return config_; }
  const std::vector<Tensor>& first_moment() const { return m_; }
  const std::vector<Tensor>& second_moment() const { return v_; }
  std::vector<Tensor>& first_moment() { return m_; }
  std::vector<Tensor>& second_moment() { return v_; }
  void set_step_count(long s) { step_count_ = s; }

  void step(std::vector<Tensor>& params, const std::vector<Tensor>& grads, double lr) {
    if (lr < 0.0) throw std::invalid_argument("adam: negative learning rate");
    if (params.size() != grads.size() || params.size() != m_.size())
      throw std::invalid_argument("adam: parameter/gradient count mismatch");
    ++step_count_;
    const double b1 = config_.beta1, b2 = config_.beta2;
    const double bc1 = 1.0 - std::pow(b1, static_cast<double>(step_count_));
    const double bc2 = 1.0 - std::pow(b2, static_cast<double>(step_count_));
    for (std::size_t i = 0; i < params.size(); ++i) {
      Tensor& p = params[i];
      const Tensor& g = grads[i];
      if (g.shape != p.shape)
        throw std::invalid_argument("adam: gradient shape mismatch at tensor " +
                                    std::to_string(i));
      if (!g.all_finite()) throw std::runtime_error("adam: non-finite gradient");
      double* m = m_[i].data.data();
      double* v = v_[i].data.data();
      double* w = p.data.data();
      const double* gd = g.data.data();
      for (std::size_t j = 0; j < p.size(); ++j) {
        m[j] = b1 * m[j] + (1.0 - b1) * gd[j];
        v[j] = b2 * v[j] + (1.0 - b2) * gd[j] * gd[j];
        const double mhat = m[j] / bc1;
        const double vhat = v[j] / bc2;
        w[j] -= lr * mhat / (std::sqrt(vhat) + config_.eps);
      }
    }
  }

  // Fresh-optimizer semantics: zero moments, step count back to 0,
  // hyperparameters retained.
  void reset() {
    step_count_ = 0;
    for (Tensor& t : m_) std::fill(t.data.begin(), t.data.end(), 0.0);
    for (Tensor& t : v_) std::fill(t.data.begin(), t.data.end(), 0.0);
  }

  friend bool operator==(const AdamState& a, const AdamState& b) {
    return a.step_count_ == b.step_count_ && a.m_ == b.m_ && a.v_ == b.v_ &&
           a.config_.beta1 == b.config_.beta1 && a.config_.beta2 == b.config_.beta2 &&
           a.config_.eps == b.config_.eps;
  }

 private:
  AdamConfig config_;
  long step_count_ = 0;
  std::vector<Tensor> m_;
  std::vector<Tensor> v_;
};

}  // namespace mtlab
