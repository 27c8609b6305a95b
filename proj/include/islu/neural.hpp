#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace islu {

using Vec = std::vector<double>;
using Rng = std::mt19937_64;

/// Row-major dense tensor of doubles. Only rank 1 and 2 are used.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<int> dims, double fill = 0.0);

  static Tensor vector(int n, double fill = 0.0) { return Tensor({n}, fill); }
  static Tensor matrix(int rows, int cols, double fill = 0.0) { return Tensor({rows, cols}, fill); }

  const std::vector<int>& dims() const { return dims_; }
  int rows() const { return dims_.empty() ? 0 : dims_[0]; }
  int cols() const { return dims_.size() < 2 ? 1 : dims_[1]; }
  std::size_t size() const { return values_.size(); }
  bool empty() const { return values_.empty(); }

  double& operator[](std::size_t i) { return values_[i]; }
  double operator[](std::size_t i) const { return values_[i]; }
  double& at(int r, int c) { return values_[static_cast<std::size_t>(r) * cols() + c]; }
  double at(int r, int c) const { return values_[static_cast<std::size_t>(r) * cols() + c]; }

  std::span<double> row(int r) {
    return {values_.data() + static_cast<std::size_t>(r) * cols(), static_cast<std::size_t>(cols())};
  }
  std::span<const double> row(int r) const {
    return {values_.data() + static_cast<std::size_t>(r) * cols(), static_cast<std::size_t>(cols())};
  }

  std::vector<double>& values() { return values_; }
  const std::vector<double>& values() const { return values_; }

  void fill(double v);
  bool same_shape(const Tensor& other) const { return dims_ == other.dims_; }
  bool all_finite() const;

  bool operator==(const Tensor& other) const = default;

 private:
  std::vector<int> dims_;
  std::vector<double> values_;
};

// y = W x (+ y when accumulate)
void matvec(const Tensor& w, std::span<const double> x, std::span<double> y,
            bool accumulate = false);
// y += W^T x
void matvec_transposed_acc(const Tensor& w, std::span<const double> x, std::span<double> y);
// W += a b^T
void outer_acc(Tensor& w, std::span<const double> a, std::span<const double> b);

double sigmoid(double x);
/// Max-subtracted softmax.
Vec softmax(std::span<const double> logits);
/// log softmax(logits)[k], computed via log-sum-exp.
double log_softmax_at(std::span<const double> logits, int k);

/// Gate order in all 4H blocks: input, forget, cell candidate, output.
struct LstmParams {
  Tensor wx;  // 4H x In
  Tensor wh;  // 4H x H
  Tensor b;   // 4H

  LstmParams() = default;
  LstmParams(int input_dim, int hidden_dim);
  int input_dim() const { return wx.cols(); }
  int hidden_dim() const { return wh.cols(); }

  bool operator==(const LstmParams&) const = default;
};

/// Activations kept from one LSTM step for the backward pass.
struct LstmCache {
  Vec x, h_prev, c_prev;
  Vec i, f, g, o;  // post-activation gates
  Vec c, tanh_c, h;
};

struct LstmOutput {
  Vec h;
  Vec c;
};

/// One step of the gated update. Throws std::invalid_argument on dimension mismatch.
LstmOutput lstm_step(std::span<const double> x, std::span<const double> h,
                     std::span<const double> c, const LstmParams& p,
                     LstmCache* cache = nullptr);

/// Backpropagates dh/dc through one step. Accumulates parameter gradients
/// into `grad`, returns dx, and overwrites dh/dc with the gradients for the
/// previous hidden and cell state.
Vec lstm_step_backward(const LstmCache& cache, const LstmParams& p, LstmParams& grad,
                       Vec& dh, Vec& dc);

struct LossInputs {
  const Tensor* intent_logits = nullptr;  // T x C
  const Vec* eos_logits = nullptr;        // T
  std::span<const int> intent_ids;        // T
  std::span<const int> eos_flags;         // T
};

/// Loss and its gradient w.r.t. the logits.
struct LossGrad {
  double loss = 0.0;
  Tensor d_intent_logits;
  Vec d_eos_logits;
  // Set when a sample carries no EOS position, which leaves the intent loss at 0.
  bool degenerate = false;
};

/// Cross-entropy at EOS positions only, summed.
double masked_intent_loss(const LossInputs& in);
/// Per-token sigmoid binary cross-entropy, summed over every position.
double eos_bce_loss(std::span<const double> eos_logits, std::span<const int> eos_flags);
/// masked_intent_loss + eos_bce_loss.
double multitask_loss(const LossInputs& in);

LossGrad masked_intent_loss_grad(const LossInputs& in);
LossGrad eos_bce_loss_grad(std::span<const double> eos_logits, std::span<const int> eos_flags);

/// Inverted dropout: kept units carry 1/(1-rate). All ones unless training and rate > 0.
Vec dropout_mask(int dim, double rate, Rng& rng, bool training);
Vec dropout_mask(int dim, double rate, std::uint64_t seed, bool training);

struct AdamOptions {
  double lr = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamMoments {
  Tensor m;
  Tensor v;
};

/// Bias-corrected Adam update of one tensor; step_count starts at 1.
void adam_step(Tensor& param, const Tensor& grad, AdamMoments& moments,
               const AdamOptions& options, long step_count);

/// |a-n| / max(|a|, |n|, floor): relative error with an absolute floor so
/// that entries whose true gradient is zero are judged in absolute terms.
double relative_error(double analytic, double numeric, double floor = 1e-6);

}  // namespace islu
