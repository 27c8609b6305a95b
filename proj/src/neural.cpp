#include "islu/neural.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace islu {

Tensor::Tensor(std::vector<int> dims, double fill) : dims_(std::move(dims)) {
  std::size_t n = 1;
  for (int d : dims_) {
    if (d < 0) throw std::invalid_argument("negative tensor dimension");
    n *= static_cast<std::size_t>(d);
  }
  values_.assign(n, fill);
}

void Tensor::fill(double v) { std::fill(values_.begin(), values_.end(), v); }

bool Tensor::all_finite() const {
  return std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); });
}

void matvec(const Tensor& w, std::span<const double> x, std::span<double> y, bool accumulate) {
  const int rows = w.rows();
  const int cols = w.cols();
  if (static_cast<int>(x.size()) != cols || static_cast<int>(y.size()) != rows)
    throw std::invalid_argument("matvec: dimension mismatch");
  const double* data = w.values().data();
  for (int r = 0; r < rows; ++r) {
    const double* row = data + static_cast<std::size_t>(r) * cols;
    double acc = 0.0;
    for (int c = 0; c < cols; ++c) acc += row[c] * x[c];
    y[r] = accumulate ? y[r] + acc : acc;
  }
}

void matvec_transposed_acc(const Tensor& w, std::span<const double> x, std::span<double> y) {
  const int rows = w.rows();
  const int cols = w.cols();
  if (static_cast<int>(x.size()) != rows || static_cast<int>(y.size()) != cols)
    throw std::invalid_argument("matvec_transposed_acc: dimension mismatch");
  const double* data = w.values().data();
  for (int r = 0; r < rows; ++r) {
    const double xr = x[r];
    if (xr == 0.0) continue;
    const double* row = data + static_cast<std::size_t>(r) * cols;
    for (int c = 0; c < cols; ++c) y[c] += row[c] * xr;
  }
}

void outer_acc(Tensor& w, std::span<const double> a, std::span<const double> b) {
  const int rows = w.rows();
  const int cols = w.cols();
  if (static_cast<int>(a.size()) != rows || static_cast<int>(b.size()) != cols)
    throw std::invalid_argument("outer_acc: dimension mismatch");
  double* data = w.values().data();
  for (int r = 0; r < rows; ++r) {
    const double ar = a[r];
    if (ar == 0.0) continue;
    double* row = data + static_cast<std::size_t>(r) * cols;
    for (int c = 0; c < cols; ++c) row[c] += ar * b[c];
  }
}

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

Vec softmax(std::span<const double> logits) {
  Vec p(logits.begin(), logits.end());
  if (p.empty()) return p;
  const double mx = *std::max_element(p.begin(), p.end());
  double sum = 0.0;
  for (double& v : p) sum += (v = std::exp(v - mx));
  for (double& v : p) v /= sum;
  return p;
}

double log_softmax_at(std::span<const double> logits, int k) {
  const double mx = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (double v : logits) sum += std::exp(v - mx);
  return logits[k] - mx - std::log(sum);
}

LstmParams::LstmParams(int input_dim, int hidden_dim)
    : wx(Tensor::matrix(4 * hidden_dim, input_dim)),
      wh(Tensor::matrix(4 * hidden_dim, hidden_dim)),
      b(Tensor::vector(4 * hidden_dim)) {}

LstmOutput lstm_step(std::span<const double> x, std::span<const double> h,
                     std::span<const double> c, const LstmParams& p, LstmCache* cache) {
  const int hd = p.hidden_dim();
  if (static_cast<int>(x.size()) != p.input_dim() || static_cast<int>(h.size()) != hd ||
      static_cast<int>(c.size()) != hd || p.wx.rows() != 4 * hd ||
      static_cast<int>(p.b.size()) != 4 * hd)
    throw std::invalid_argument("lstm_step: dimension mismatch");

  Vec z(p.b.values());
  matvec(p.wx, x, z, true);
  matvec(p.wh, h, z, true);

  LstmOutput out{Vec(hd), Vec(hd)};
  Vec gi(hd), gf(hd), gg(hd), go(hd), tc(hd);
  for (int k = 0; k < hd; ++k) {
    gi[k] = sigmoid(z[k]);
    gf[k] = sigmoid(z[hd + k]);
    gg[k] = std::tanh(z[2 * hd + k]);
    go[k] = sigmoid(z[3 * hd + k]);
    out.c[k] = gf[k] * c[k] + gi[k] * gg[k];
    tc[k] = std::tanh(out.c[k]);
    out.h[k] = go[k] * tc[k];
  }
  if (cache) {
    cache->x.assign(x.begin(), x.end());
    cache->h_prev.assign(h.begin(), h.end());
    cache->c_prev.assign(c.begin(), c.end());
    cache->i = std::move(gi);
    cache->f = std::move(gf);
    cache->g = std::move(gg);
    cache->o = std::move(go);
    cache->c = out.c;
    cache->tanh_c = std::move(tc);
    cache->h = out.h;
  }
  return out;
}

Vec lstm_step_backward(const LstmCache& cache, const LstmParams& p, LstmParams& grad,
                       Vec& dh, Vec& dc) {
  const int hd = p.hidden_dim();
  Vec dz(4 * hd);
  for (int k = 0; k < hd; ++k) {
    const double tc = cache.tanh_c[k];
    const double d_o = dh[k] * tc;
    const double dck = dc[k] + dh[k] * cache.o[k] * (1.0 - tc * tc);
    const double d_i = dck * cache.g[k];
    const double d_g = dck * cache.i[k];
    const double d_f = dck * cache.c_prev[k];
    dc[k] = dck * cache.f[k];
    dz[k] = d_i * cache.i[k] * (1.0 - cache.i[k]);
    dz[hd + k] = d_f * cache.f[k] * (1.0 - cache.f[k]);
    dz[2 * hd + k] = d_g * (1.0 - cache.g[k] * cache.g[k]);
    dz[3 * hd + k] = d_o * cache.o[k] * (1.0 - cache.o[k]);
  }
  outer_acc(grad.wx, dz, cache.x);
  outer_acc(grad.wh, dz, cache.h_prev);
  for (int k = 0; k < 4 * hd; ++k) grad.b[k] += dz[k];

  Vec dx(cache.x.size(), 0.0);
  matvec_transposed_acc(p.wx, dz, dx);
  std::fill(dh.begin(), dh.end(), 0.0);
  matvec_transposed_acc(p.wh, dz, dh);
  return dx;
}

namespace {

void check_loss_inputs(const LossInputs& in, bool need_intent, bool need_eos) {
  const std::size_t t = in.eos_flags.size();
  if (t == 0) throw std::invalid_argument("loss: empty sequence");
  if (need_intent) {
    if (!in.intent_logits) throw std::invalid_argument("loss: intent logits missing");
    if (static_cast<std::size_t>(in.intent_logits->rows()) != t || in.intent_ids.size() != t)
      throw std::invalid_argument("loss: intent length mismatch");
    if (in.intent_logits->cols() < 2) throw std::invalid_argument("loss: need C >= 2");
  }
  if (need_eos) {
    if (!in.eos_logits) throw std::invalid_argument("loss: eos logits missing");
    if (in.eos_logits->size() != t) throw std::invalid_argument("loss: eos length mismatch");
  }
}

double bce_term(double z, int y) {
  // -[y log s(z) + (1-y) log(1-s(z))] in log-sum form
  return std::max(z, 0.0) - z * y + std::log1p(std::exp(-std::abs(z)));
}

}  // namespace

double masked_intent_loss(const LossInputs& in) {
  check_loss_inputs(in, true, false);
  const Tensor& logits = *in.intent_logits;
  double loss = 0.0;
  for (std::size_t t = 0; t < in.eos_flags.size(); ++t)
    if (in.eos_flags[t]) loss -= log_softmax_at(logits.row(static_cast<int>(t)), in.intent_ids[t]);
  return loss;
}

double eos_bce_loss(std::span<const double> eos_logits, std::span<const int> eos_flags) {
  if (eos_logits.size() != eos_flags.size()) throw std::invalid_argument("eos_bce_loss: length mismatch");
  double loss = 0.0;
  for (std::size_t t = 0; t < eos_logits.size(); ++t) loss += bce_term(eos_logits[t], eos_flags[t]);
  return loss;
}

double multitask_loss(const LossInputs& in) {
  check_loss_inputs(in, true, true);
  return masked_intent_loss(in) + eos_bce_loss(*in.eos_logits, in.eos_flags);
}

LossGrad masked_intent_loss_grad(const LossInputs& in) {
  check_loss_inputs(in, true, false);
  const Tensor& logits = *in.intent_logits;
  LossGrad out;
  out.d_intent_logits = Tensor::matrix(logits.rows(), logits.cols());
  out.degenerate = true;
  for (std::size_t t = 0; t < in.eos_flags.size(); ++t) {
    if (!in.eos_flags[t]) continue;
    out.degenerate = false;
    const int r = static_cast<int>(t);
    const int gold = in.intent_ids[t];
    out.loss -= log_softmax_at(logits.row(r), gold);
    Vec p = softmax(logits.row(r));
    auto drow = out.d_intent_logits.row(r);
    for (int c = 0; c < logits.cols(); ++c) drow[c] = p[c] - (c == gold ? 1.0 : 0.0);
  }
  return out;
}

LossGrad eos_bce_loss_grad(std::span<const double> eos_logits, std::span<const int> eos_flags) {
  LossGrad out;
  out.loss = eos_bce_loss(eos_logits, eos_flags);
  out.d_eos_logits.resize(eos_logits.size());
  for (std::size_t t = 0; t < eos_logits.size(); ++t)
    out.d_eos_logits[t] = sigmoid(eos_logits[t]) - eos_flags[t];
  return out;
}

Vec dropout_mask(int dim, double rate, Rng& rng, bool training) {
  if (rate < 0.0 || rate >= 1.0) throw std::invalid_argument("dropout rate must be in [0,1)");
  Vec mask(dim, 1.0);
  if (!training || rate == 0.0) return mask;
  std::bernoulli_distribution keep(1.0 - rate);
  const double scale = 1.0 / (1.0 - rate);
  for (double& m : mask) m = keep(rng) ? scale : 0.0;
  return mask;
}

Vec dropout_mask(int dim, double rate, std::uint64_t seed, bool training) {
  Rng rng(seed);
  return dropout_mask(dim, rate, rng, training);
}

void adam_step(Tensor& param, const Tensor& grad, AdamMoments& moments,
               const AdamOptions& opt, long step_count) {
  if (step_count < 1) throw std::invalid_argument("adam_step: step_count must be >= 1");
  if (!param.same_shape(grad)) throw std::invalid_argument("adam_step: shape mismatch");
  if (moments.m.empty() && !param.empty()) {
    moments.m = Tensor(param.dims());
    moments.v = Tensor(param.dims());
  }
  if (!moments.m.same_shape(param) || !moments.v.same_shape(param))
    throw std::invalid_argument("adam_step: moment shape mismatch");
  const double c1 = 1.0 - std::pow(opt.beta1, static_cast<double>(step_count));
  const double c2 = 1.0 - std::pow(opt.beta2, static_cast<double>(step_count));
  auto& p = param.values();
  auto& m = moments.m.values();
  auto& v = moments.v.values();
  const auto& g = grad.values();
  for (std::size_t k = 0; k < p.size(); ++k) {
    m[k] = opt.beta1 * m[k] + (1.0 - opt.beta1) * g[k];
    v[k] = opt.beta2 * v[k] + (1.0 - opt.beta2) * g[k] * g[k];
    p[k] -= opt.lr * (m[k] / c1) / (std::sqrt(v[k] / c2) + opt.eps);
  }
}

double relative_error(double analytic, double numeric, double floor) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / denom;
}

}  // namespace islu
