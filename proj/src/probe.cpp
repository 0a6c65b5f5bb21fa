#include "mirage/probe.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace mirage {

namespace {

constexpr std::uint64_t kBalanceSalt = 0x62616C616E636531ULL;
constexpr std::uint64_t kSplitSalt = 0x73706C6974303031ULL;
constexpr std::uint64_t kInitSalt = 0x696E697430303031ULL;

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

// log(1 + e^z), overflow-safe.
double softplus(double z) {
  if (z > 0.0) return z + std::log1p(std::exp(-z));
  return std::log1p(std::exp(z));
}

// Canonical row order: lexicographic by feature values, labels break ties.
// Sorting first makes training independent of the caller's row order; the
// seeded split below then sees identical content no matter how rows arrived.
std::vector<std::size_t> canonical_order(const Matrix& x, const std::vector<std::uint8_t>& y) {
  std::vector<std::size_t> order(x.rows());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const double* ra = x.row_ptr(a);
    const double* rb = x.row_ptr(b);
    for (std::size_t j = 0; j < x.cols(); ++j) {
      if (ra[j] < rb[j]) return true;
      if (ra[j] > rb[j]) return false;
    }
    return y[a] < y[b];
  });
  return order;
}

struct Split {
  std::vector<std::size_t> train;
  std::vector<std::size_t> eval;
};

// Stratified train/eval split over canonically ordered rows.
Split stratified_split(const std::vector<std::uint8_t>& y, const std::vector<std::size_t>& order,
                       double eval_fraction, Rng& rng) {
  std::vector<std::size_t> by_class[2];
  for (std::size_t i : order) by_class[y[i] ? 1 : 0].push_back(i);
  if (by_class[0].size() < 2 || by_class[1].size() < 2)
    throw std::invalid_argument("probe: degenerate input, each class needs >= 2 samples");

  Split split;
  for (auto& cls : by_class) {
    rng.shuffle(cls);
    const auto n = cls.size();
    auto n_eval = static_cast<std::size_t>(std::llround(eval_fraction * static_cast<double>(n)));
    n_eval = std::clamp<std::size_t>(n_eval, 1, n - 1);
    split.eval.insert(split.eval.end(), cls.begin(), cls.begin() + n_eval);
    split.train.insert(split.train.end(), cls.begin() + n_eval, cls.end());
  }
  return split;
}

double accuracy_on(const ProbeModel& model, const Matrix& x, const std::vector<std::uint8_t>& y,
                   const std::vector<std::size_t>& idx) {
  std::size_t correct = 0;
  for (std::size_t i : idx)
    if (model.predict(x.row_ptr(i), x.cols()) == (y[i] ? 1 : 0)) ++correct;
  return static_cast<double>(correct) / static_cast<double>(idx.size());
}

double max_row_sq(const Matrix& x, const std::vector<std::size_t>& idx) {
  double m = 0.0;
  for (std::size_t i : idx) {
    const double* row = x.row_ptr(i);
    m = std::max(m, dot(row, row, x.cols()));
  }
  return m;
}

}  // namespace

void ProbeConfig::validate() const {
  if (!(reg_c > 0.0)) throw std::invalid_argument("probe config: reg_c must be > 0");
  if (max_iters < 1) throw std::invalid_argument("probe config: max_iters must be >= 1");
  if (!(eval_fraction > 0.0 && eval_fraction < 1.0))
    throw std::invalid_argument("probe config: eval_fraction must be in (0,1)");
  if (kind == Kind::Mlp && hidden_dim < 1)
    throw std::invalid_argument("probe config: hidden_dim must be >= 1");
}

double ProbeModel::predict_proba(const double* x, std::size_t dim) const {
  if (kind == ProbeConfig::Kind::Linear) {
    return sigmoid(b + dot(w.data(), x, dim));
  }
  const std::size_t hidden = b1.size();
  double z = b2;
  for (std::size_t h = 0; h < hidden; ++h) {
    const double pre = b1[h] + dot(w1.row_ptr(h), x, dim);
    if (pre > 0.0) z += w2[h] * pre;
  }
  return sigmoid(z);
}

int ProbeModel::predict(const double* x, std::size_t dim) const {
  return predict_proba(x, dim) > 0.5 ? 1 : 0;
}

std::vector<std::uint8_t> make_membership_labels(const EmbeddingSet& set, const ForgetSpec& spec) {
  spec.validate(set.labels);
  std::vector<std::uint8_t> out(set.size());
  for (std::size_t i = 0; i < set.size(); ++i)
    out[i] = spec.selects(set.labels[i], i) ? 1 : 0;
  return out;
}

void balance_binary(Matrix& features, std::vector<std::uint8_t>& bin_labels, Rng& rng) {
  std::vector<std::size_t> ones, zeros;
  for (std::size_t i = 0; i < bin_labels.size(); ++i)
    (bin_labels[i] ? ones : zeros).push_back(i);
  if (ones.empty() || zeros.empty())
    throw std::invalid_argument("balance_binary: both classes must be nonempty");

  auto& majority = ones.size() > zeros.size() ? ones : zeros;
  const std::size_t target = std::min(ones.size(), zeros.size());
  if (majority.size() > target) {
    const auto keep = rng.sample_without_replacement(majority.size(), target);
    std::vector<std::size_t> kept;
    kept.reserve(target);
    for (std::size_t k : keep) kept.push_back(majority[k]);
    std::sort(kept.begin(), kept.end());
    majority = std::move(kept);
  }

  std::vector<std::size_t> idx;
  idx.reserve(2 * target);
  idx.insert(idx.end(), zeros.begin(), zeros.end());
  idx.insert(idx.end(), ones.begin(), ones.end());
  rng.shuffle(idx);

  Matrix out_f = take_rows(features, idx);
  std::vector<std::uint8_t> out_y(idx.size());
  for (std::size_t i = 0; i < idx.size(); ++i) out_y[i] = bin_labels[idx[i]];
  features = std::move(out_f);
  bin_labels = std::move(out_y);
}

namespace probe_detail {

double linear_loss_grad(const Matrix& x, const std::vector<std::uint8_t>& y, double reg_c,
                        const std::vector<double>& w, double b,
                        std::vector<double>* grad_w, double* grad_b) {
  const std::size_t n = x.rows();
  const std::size_t d = x.cols();
  double loss = 0.0;
  if (grad_w) std::fill(grad_w->begin(), grad_w->end(), 0.0);
  double gb = 0.0;
  double* __restrict gw = grad_w ? grad_w->data() : nullptr;
  const double* __restrict wp = w.data();

  // sigmoid and softplus share one exp(-|z|)
  auto residual = [&](double z, double yi) {
    const double e = std::exp(-std::fabs(z));
    const double log1pe = std::log1p(e);
    const double p = z >= 0.0 ? 1.0 / (1.0 + e) : e / (1.0 + e);
    loss += (z > 0.0 ? z + log1pe : log1pe) - yi * z;
    const double r = p - yi;
    gb += r;
    return r;
  };

  // four rows per pass so the weight/gradient vectors are loaded once per block
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const double* __restrict r0 = x.row_ptr(i);
    const double* __restrict r1 = x.row_ptr(i + 1);
    const double* __restrict r2 = x.row_ptr(i + 2);
    const double* __restrict r3 = x.row_ptr(i + 3);
    double z0 = b, z1 = b, z2 = b, z3 = b;
    for (std::size_t j = 0; j < d; ++j) {
      const double wj = wp[j];
      z0 += wj * r0[j];
      z1 += wj * r1[j];
      z2 += wj * r2[j];
      z3 += wj * r3[j];
    }
    const double g0 = residual(z0, y[i] ? 1.0 : 0.0);
    const double g1 = residual(z1, y[i + 1] ? 1.0 : 0.0);
    const double g2 = residual(z2, y[i + 2] ? 1.0 : 0.0);
    const double g3 = residual(z3, y[i + 3] ? 1.0 : 0.0);
    if (gw)
      for (std::size_t j = 0; j < d; ++j)
        gw[j] += (g0 * r0[j] + g1 * r1[j]) + (g2 * r2[j] + g3 * r3[j]);
  }
  for (; i < n; ++i) {
    const double* __restrict row = x.row_ptr(i);
    const double r = residual(b + dot(wp, row, d), y[i] ? 1.0 : 0.0);
    if (gw)
      for (std::size_t j = 0; j < d; ++j) gw[j] += r * row[j];
  }

  const double inv_n = 1.0 / static_cast<double>(n);
  loss *= inv_n;
  const double reg = 1.0 / (reg_c * static_cast<double>(n));
  double wsq = 0.0;
  for (double v : w) wsq += v * v;
  loss += 0.5 * reg * wsq;
  if (grad_w)
    for (std::size_t j = 0; j < d; ++j) (*grad_w)[j] = (*grad_w)[j] * inv_n + reg * w[j];
  if (grad_b) *grad_b = gb * inv_n;
  return loss;
}

double mlp_loss_grad(const Matrix& x, const std::vector<std::uint8_t>& y, double reg_c,
                     const MlpShape& shape, const std::vector<double>& params,
                     std::vector<double>* grad) {
  const std::size_t n = x.rows();
  const std::size_t d = shape.dim;
  const std::size_t h = shape.hidden;
  const double* W1 = params.data();           // h x d
  const double* b1 = W1 + h * d;               // h
  const double* W2 = b1 + h;                   // h
  const double b2 = *(W2 + h);

  double* gW1 = nullptr;
  double* gb1 = nullptr;
  double* gW2 = nullptr;
  double* gb2 = nullptr;
  if (grad) {
    std::fill(grad->begin(), grad->end(), 0.0);
    gW1 = grad->data();
    gb1 = gW1 + h * d;
    gW2 = gb1 + h;
    gb2 = gW2 + h;
  }

  std::vector<double> act(h);
  double loss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double* row = x.row_ptr(i);
    double z = b2;
    for (std::size_t k = 0; k < h; ++k) {
      const double pre = b1[k] + dot(W1 + k * d, row, d);
      act[k] = pre > 0.0 ? pre : 0.0;
      z += W2[k] * act[k];
    }
    const double yi = y[i] ? 1.0 : 0.0;
    loss += softplus(z) - yi * z;
    if (grad) {
      const double dz = sigmoid(z) - yi;
      *gb2 += dz;
      for (std::size_t k = 0; k < h; ++k) {
        gW2[k] += dz * act[k];
        if (act[k] > 0.0) {
          const double dh = dz * W2[k];
          gb1[k] += dh;
          double* gw = gW1 + k * d;
          for (std::size_t j = 0; j < d; ++j) gw[j] += dh * row[j];
        }
      }
    }
  }

  const double inv_n = 1.0 / static_cast<double>(n);
  loss *= inv_n;
  const double reg = 1.0 / (reg_c * static_cast<double>(n));
  double wsq = 0.0;
  for (std::size_t j = 0; j < h * d; ++j) wsq += W1[j] * W1[j];
  for (std::size_t k = 0; k < h; ++k) wsq += W2[k] * W2[k];
  loss += 0.5 * reg * wsq;
  if (grad) {
    for (std::size_t j = 0; j < grad->size(); ++j) (*grad)[j] *= inv_n;
    for (std::size_t j = 0; j < h * d; ++j) gW1[j] += reg * W1[j];
    for (std::size_t k = 0; k < h; ++k) gW2[k] += reg * W2[k];
  }
  return loss;
}

}  // namespace probe_detail

ProbeModel train_linear_probe(const Matrix& features, const std::vector<std::uint8_t>& bin_labels,
                              const ProbeConfig& config) {
  config.validate();
  if (features.rows() != bin_labels.size())
    throw std::invalid_argument("train_linear_probe: row/label count mismatch");
  if (features.rows() < 10)
    throw std::invalid_argument("train_linear_probe: need at least 10 samples");
  features.require_finite("train_linear_probe");

  const auto order = canonical_order(features, bin_labels);
  Rng split_rng(Rng::mix(config.seed, kSplitSalt));
  const Split split = stratified_split(bin_labels, order, config.eval_fraction, split_rng);

  const std::size_t d = features.cols();
  Matrix xt = take_rows(features, split.train);
  std::vector<std::uint8_t> yt(split.train.size());
  for (std::size_t i = 0; i < split.train.size(); ++i) yt[i] = bin_labels[split.train[i]];

  // Fixed step 1/L; L bounds the gradient's Lipschitz constant via the
  // largest row norm (bias treated as a constant-1 feature), so full-batch
  // descent is monotone.
  const double L = (1.0 + max_row_sq(features, split.train)) / 4.0 +
                   1.0 / (config.reg_c * static_cast<double>(split.train.size()));
  const double step = 1.0 / L;

  ProbeModel model;
  model.kind = ProbeConfig::Kind::Linear;
  model.config = config;
  model.w.assign(d, 0.0);
  model.b = 0.0;

  std::vector<double> grad_w(d, 0.0);
  double grad_b = 0.0;
  for (std::size_t iter = 0; iter < config.max_iters; ++iter) {
    const double loss =
        probe_detail::linear_loss_grad(xt, yt, config.reg_c, model.w, model.b, &grad_w, &grad_b);
    if (!std::isfinite(loss))
      throw std::runtime_error("train_linear_probe: non-finite loss at iteration " +
                               std::to_string(iter));
    model.loss_history.push_back(loss);
    model.iters_run = iter + 1;

    double gn = grad_b * grad_b;
    for (double g : grad_w) gn += g * g;
    if (std::sqrt(gn) < 1e-8) break;

    for (std::size_t j = 0; j < d; ++j) model.w[j] -= step * grad_w[j];
    model.b -= step * grad_b;
  }

  model.n_train = split.train.size();
  model.n_eval = split.eval.size();
  model.train_accuracy = accuracy_on(model, features, bin_labels, split.train);
  model.holdout_accuracy = accuracy_on(model, features, bin_labels, split.eval);
  return model;
}

ProbeModel train_mlp_probe(const Matrix& features, const std::vector<std::uint8_t>& bin_labels,
                           const ProbeConfig& config) {
  config.validate();
  if (features.rows() != bin_labels.size())
    throw std::invalid_argument("train_mlp_probe: row/label count mismatch");
  if (features.rows() < 10)
    throw std::invalid_argument("train_mlp_probe: need at least 10 samples");
  features.require_finite("train_mlp_probe");

  const auto order = canonical_order(features, bin_labels);
  Rng split_rng(Rng::mix(config.seed, kSplitSalt));
  const Split split = stratified_split(bin_labels, order, config.eval_fraction, split_rng);

  const std::size_t d = features.cols();
  const std::size_t h = config.hidden_dim;
  probe_detail::MlpShape shape{d, h};

  Matrix xt = take_rows(features, split.train);
  std::vector<std::uint8_t> yt(split.train.size());
  for (std::size_t i = 0; i < split.train.size(); ++i) yt[i] = bin_labels[split.train[i]];

  // He-style seeded init: uniform(-sqrt(6/fan_in), +sqrt(6/fan_in)), zero biases.
  std::vector<double> params(shape.param_count(), 0.0);
  Rng init_rng(Rng::mix(config.seed, kInitSalt));
  const double lim1 = std::sqrt(6.0 / static_cast<double>(d));
  for (std::size_t j = 0; j < h * d; ++j) params[j] = (2.0 * init_rng.uniform() - 1.0) * lim1;
  const double lim2 = std::sqrt(6.0 / static_cast<double>(h));
  for (std::size_t k = 0; k < h; ++k)
    params[h * d + h + k] = (2.0 * init_rng.uniform() - 1.0) * lim2;

  // Fixed step from a top-layer curvature bound at init (largest hidden
  // activation norm), with heavy-ball momentum.
  double max_act_sq = 1.0;
  for (std::size_t i = 0; i < xt.rows(); ++i) {
    const double* row = xt.row_ptr(i);
    double s = 0.0;
    for (std::size_t k = 0; k < h; ++k) {
      const double pre = params[h * d + k] + dot(params.data() + k * d, row, d);
      if (pre > 0.0) s += pre * pre;
    }
    max_act_sq = std::max(max_act_sq, s);
  }
  const double step = 4.0 / (1.0 + max_act_sq);
  const double momentum = 0.9;

  std::vector<double> grad(params.size(), 0.0);
  std::vector<double> velocity(params.size(), 0.0);

  ProbeModel model;
  model.kind = ProbeConfig::Kind::Mlp;
  model.config = config;

  for (std::size_t iter = 0; iter < config.max_iters; ++iter) {
    const double loss = probe_detail::mlp_loss_grad(xt, yt, config.reg_c, shape, params, &grad);
    if (!std::isfinite(loss))
      throw std::runtime_error("train_mlp_probe: non-finite loss at iteration " +
                               std::to_string(iter));
    model.loss_history.push_back(loss);
    model.iters_run = iter + 1;

    double gn = 0.0;
    for (double g : grad) gn += g * g;
    if (std::sqrt(gn) < 1e-8) break;

    for (std::size_t j = 0; j < params.size(); ++j) {
      velocity[j] = momentum * velocity[j] - step * grad[j];
      params[j] += velocity[j];
    }
  }

  model.w1 = Matrix(h, d);
  std::copy(params.begin(), params.begin() + h * d, model.w1.data().begin());
  model.b1.assign(params.begin() + h * d, params.begin() + h * d + h);
  model.w2.assign(params.begin() + h * d + h, params.begin() + h * d + 2 * h);
  model.b2 = params.back();

  model.n_train = split.train.size();
  model.n_eval = split.eval.size();
  model.train_accuracy = accuracy_on(model, features, bin_labels, split.train);
  model.holdout_accuracy = accuracy_on(model, features, bin_labels, split.eval);
  return model;
}

double lpr(const EmbeddingSet& set, const ForgetSpec& spec, const ProbeConfig& config) {
  config.validate();
  set.validate();
  std::vector<std::uint8_t> y = make_membership_labels(set, spec);
  Matrix x = set.features;
  if (config.balance) {
    Rng balance_rng(Rng::mix(config.seed, kBalanceSalt));
    balance_binary(x, y, balance_rng);
  }
  const ProbeModel model = config.kind == ProbeConfig::Kind::Linear
                               ? train_linear_probe(x, y, config)
                               : train_mlp_probe(x, y, config);
  return model.holdout_accuracy;
}

}  // namespace mirage
