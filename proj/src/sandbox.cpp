#include "mirage/sandbox.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <stdexcept>

namespace mirage::sandbox {

namespace {

constexpr std::uint64_t kInitSalt = 0x766C696E69743031ULL;
constexpr std::uint64_t kShuffleSalt = 0x766C736875663031ULL;
constexpr std::uint64_t kFinetuneSalt = 0x66696E6574756E65ULL;

// Per-sample activation buffers, allocated once per training/tap run.
struct Acts {
  std::vector<std::vector<std::vector<double>>> bottom;  // [party][layer][unit]
  std::vector<double> concat;
  std::vector<std::vector<double>> top;  // [layer][unit]; last entry = logits
  std::vector<double> probs;

  explicit Acts(const TrainedModel& m) {
    bottom.resize(m.bottoms.size());
    for (std::size_t k = 0; k < m.bottoms.size(); ++k) {
      bottom[k].resize(m.bottoms[k].layers.size());
      for (std::size_t l = 0; l < m.bottoms[k].layers.size(); ++l)
        bottom[k][l].resize(m.bottoms[k].layers[l].b.size());
    }
    concat.resize(m.vfl.concat_width());
    top.resize(m.top.layers.size());
    for (std::size_t l = 0; l < m.top.layers.size(); ++l)
      top[l].resize(m.top.layers[l].b.size());
    probs.resize(m.vfl.n_classes);
  }
};

// Gradient accumulators shaped like the model.
struct Grads {
  std::vector<Mlp> bottoms;
  Mlp top;

  explicit Grads(const TrainedModel& m) {
    bottoms.resize(m.bottoms.size());
    for (std::size_t k = 0; k < m.bottoms.size(); ++k) {
      bottoms[k].layers.resize(m.bottoms[k].layers.size());
      for (std::size_t l = 0; l < m.bottoms[k].layers.size(); ++l) {
        bottoms[k].layers[l].w = Matrix(m.bottoms[k].layers[l].w.rows(),
                                        m.bottoms[k].layers[l].w.cols(), 0.0);
        bottoms[k].layers[l].b.assign(m.bottoms[k].layers[l].b.size(), 0.0);
      }
    }
    top.layers.resize(m.top.layers.size());
    for (std::size_t l = 0; l < m.top.layers.size(); ++l) {
      top.layers[l].w = Matrix(m.top.layers[l].w.rows(), m.top.layers[l].w.cols(), 0.0);
      top.layers[l].b.assign(m.top.layers[l].b.size(), 0.0);
    }
  }

  void zero() {
    for (auto& mlp : bottoms)
      for (auto& layer : mlp.layers) {
        std::fill(layer.w.data().begin(), layer.w.data().end(), 0.0);
        std::fill(layer.b.begin(), layer.b.end(), 0.0);
      }
    for (auto& layer : top.layers) {
      std::fill(layer.w.data().begin(), layer.w.data().end(), 0.0);
      std::fill(layer.b.begin(), layer.b.end(), 0.0);
    }
  }
};

void dense_forward(const DenseLayer& layer, const double* in, std::size_t in_dim, double* out,
                   bool relu) {
  for (std::size_t r = 0; r < layer.b.size(); ++r) {
    const double s = layer.b[r] + dot(layer.w.row_ptr(r), in, in_dim);
    out[r] = relu && s < 0.0 ? 0.0 : s;
  }
}

// Forward one sample through the composition, filling all buffers.
void forward_sample(const TrainedModel& m, const double* x, Acts& acts) {
  std::size_t off = 0;
  for (std::size_t k = 0; k < m.bottoms.size(); ++k) {
    const auto [begin, end] = m.vfl.feature_partition[k];
    const double* in = x + begin;
    std::size_t in_dim = end - begin;
    for (std::size_t l = 0; l < m.bottoms[k].layers.size(); ++l) {
      dense_forward(m.bottoms[k].layers[l], in, in_dim, acts.bottom[k][l].data(), true);
      in = acts.bottom[k][l].data();
      in_dim = acts.bottom[k][l].size();
    }
    std::copy(in, in + in_dim, acts.concat.data() + off);
    off += in_dim;
  }

  const double* in = acts.concat.data();
  std::size_t in_dim = acts.concat.size();
  const std::size_t n_top = m.top.layers.size();
  for (std::size_t l = 0; l < n_top; ++l) {
    dense_forward(m.top.layers[l], in, in_dim, acts.top[l].data(), l + 1 < n_top);
    in = acts.top[l].data();
    in_dim = acts.top[l].size();
  }
}

// Softmax cross-entropy on the logits in acts.top.back(); fills acts.probs.
double softmax_loss(Acts& acts, std::uint32_t label) {
  const auto& z = acts.top.back();
  double m = z[0];
  for (double v : z) m = std::max(m, v);
  double sum = 0.0;
  for (std::size_t c = 0; c < z.size(); ++c) {
    acts.probs[c] = std::exp(z[c] - m);
    sum += acts.probs[c];
  }
  for (double& p : acts.probs) p /= sum;
  return std::log(sum) + m - z[label];
}

}  // namespace

std::vector<double> softmax(const std::vector<double>& logits) {
  if (logits.empty()) throw std::invalid_argument("softmax: empty logits");
  std::vector<double> p(logits.size());
  double m = logits[0];
  for (double v : logits) m = std::max(m, v);
  double sum = 0.0;
  for (std::size_t c = 0; c < logits.size(); ++c) {
    p[c] = std::exp(logits[c] - m);
    sum += p[c];
  }
  for (double& v : p) v /= sum;
  return p;
}

namespace {

void dense_backward(const DenseLayer& layer, DenseLayer& grad, const double* in,
                    std::size_t in_dim, const double* delta_out, double* delta_in) {
  if (delta_in) std::fill(delta_in, delta_in + in_dim, 0.0);
  for (std::size_t r = 0; r < layer.b.size(); ++r) {
    const double d = delta_out[r];
    if (d == 0.0) continue;
    grad.b[r] += d;
    double* gw = grad.w.row_ptr(r);
    const double* wrow = layer.w.row_ptr(r);
    for (std::size_t c = 0; c < in_dim; ++c) {
      gw[c] += d * in[c];
      if (delta_in) delta_in[c] += d * wrow[c];
    }
  }
}

// Backward for one sample; forward_sample + softmax_loss must have run.
void backward_sample(const TrainedModel& m, const double* x, std::uint32_t label, Acts& acts,
                     Grads& grads) {
  const std::size_t n_top = m.top.layers.size();
  std::vector<double> delta(acts.probs);
  delta[label] -= 1.0;

  std::vector<double> delta_in;
  for (std::size_t l = n_top; l-- > 0;) {
    const double* in = l == 0 ? acts.concat.data() : acts.top[l - 1].data();
    const std::size_t in_dim = l == 0 ? acts.concat.size() : acts.top[l - 1].size();
    delta_in.assign(in_dim, 0.0);
    dense_backward(m.top.layers[l], grads.top.layers[l], in, in_dim, delta.data(),
                   delta_in.data());
    if (l > 0) {
      // gate through the ReLU that produced this layer's input
      for (std::size_t c = 0; c < in_dim; ++c)
        if (acts.top[l - 1][c] <= 0.0) delta_in[c] = 0.0;
    }
    delta = delta_in;
  }

  // delta now spans the concatenated bottom outputs
  std::size_t off = 0;
  for (std::size_t k = 0; k < m.bottoms.size(); ++k) {
    const auto [begin, end] = m.vfl.feature_partition[k];
    const std::size_t n_layers = m.bottoms[k].layers.size();
    std::vector<double> d(delta.begin() + off, delta.begin() + off + acts.bottom[k].back().size());
    off += d.size();
    for (std::size_t l = n_layers; l-- > 0;) {
      // every bottom layer is ReLU: gate by its own activation
      for (std::size_t r = 0; r < d.size(); ++r)
        if (acts.bottom[k][l][r] <= 0.0) d[r] = 0.0;
      const double* in = l == 0 ? x + begin : acts.bottom[k][l - 1].data();
      const std::size_t in_dim = l == 0 ? end - begin : acts.bottom[k][l - 1].size();
      delta_in.assign(in_dim, 0.0);
      dense_backward(m.bottoms[k].layers[l], grads.bottoms[k].layers[l], in, in_dim, d.data(),
                     l == 0 ? nullptr : delta_in.data());
      if (l > 0) d = delta_in;
    }
  }
}

template <typename Fn>
void for_each_param(TrainedModel& m, Grads& g, Fn&& fn) {
  for (std::size_t k = 0; k < m.bottoms.size(); ++k)
    for (std::size_t l = 0; l < m.bottoms[k].layers.size(); ++l) {
      auto& lw = m.bottoms[k].layers[l];
      auto& gw = g.bottoms[k].layers[l];
      for (std::size_t i = 0; i < lw.w.data().size(); ++i) fn(lw.w.data()[i], gw.w.data()[i]);
      for (std::size_t i = 0; i < lw.b.size(); ++i) fn(lw.b[i], gw.b[i]);
    }
  for (std::size_t l = 0; l < m.top.layers.size(); ++l) {
    auto& lw = m.top.layers[l];
    auto& gw = g.top.layers[l];
    for (std::size_t i = 0; i < lw.w.data().size(); ++i) fn(lw.w.data()[i], gw.w.data()[i]);
    for (std::size_t i = 0; i < lw.b.size(); ++i) fn(lw.b[i], gw.b[i]);
  }
}

// Mini-batch SGD with momentum over the given row subset. Optionally records
// summed parameter deltas of batches containing flagged rows.
void train_engine(TrainedModel& model, const Matrix& x, const LabelVector& labels,
                  const std::vector<std::size_t>& rows, std::size_t epochs, std::size_t batch_size,
                  double lr, double momentum, std::uint64_t shuffle_seed,
                  const std::vector<std::uint8_t>* flagged, UpdateLedger* ledger) {
  if (rows.empty()) throw std::invalid_argument("train: no training rows");
  Acts acts(model);
  Grads grads(model);
  Grads velocity(model);
  Rng shuffle_rng(shuffle_seed);

  if (ledger && ledger->delta.empty()) ledger->delta.assign(model.param_count(), 0.0);

  std::vector<std::size_t> order(rows);
  std::vector<double> before;
  for (std::size_t epoch = 0; epoch < epochs; ++epoch) {
    shuffle_rng.shuffle(order);

    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += batch_size) {
      const std::size_t stop = std::min(order.size(), start + batch_size);
      const double inv_bn = 1.0 / static_cast<double>(stop - start);

      grads.zero();
      bool batch_flagged = false;
      double batch_loss = 0.0;
      for (std::size_t i = start; i < stop; ++i) {
        const std::size_t row = order[i];
        if (flagged && (*flagged)[row]) batch_flagged = true;
        forward_sample(model, x.row_ptr(row), acts);
        batch_loss += softmax_loss(acts, labels[row]);
        backward_sample(model, x.row_ptr(row), labels[row], acts, grads);
      }
      if (!std::isfinite(batch_loss))
        throw std::runtime_error("train: non-finite loss at epoch " + std::to_string(epoch));
      epoch_loss += batch_loss;

      const bool record = ledger && batch_flagged;
      if (record) before = model.flatten_params();

      // v <- momentum*v - lr*grad/batch_n; p <- p + v
      for_each_param(model, velocity, [&](double&, double& v) { v *= momentum; });
      for (std::size_t k = 0; k < model.bottoms.size(); ++k)
        for (std::size_t l = 0; l < model.bottoms[k].layers.size(); ++l) {
          auto& vl = velocity.bottoms[k].layers[l];
          auto& gl = grads.bottoms[k].layers[l];
          for (std::size_t i = 0; i < vl.w.data().size(); ++i)
            vl.w.data()[i] -= lr * inv_bn * gl.w.data()[i];
          for (std::size_t i = 0; i < vl.b.size(); ++i) vl.b[i] -= lr * inv_bn * gl.b[i];
        }
      for (std::size_t l = 0; l < model.top.layers.size(); ++l) {
        auto& vl = velocity.top.layers[l];
        auto& gl = grads.top.layers[l];
        for (std::size_t i = 0; i < vl.w.data().size(); ++i)
          vl.w.data()[i] -= lr * inv_bn * gl.w.data()[i];
        for (std::size_t i = 0; i < vl.b.size(); ++i) vl.b[i] -= lr * inv_bn * gl.b[i];
      }
      for_each_param(model, velocity, [&](double& p, double& v) { p += v; });

      if (record) {
        const std::vector<double> after = model.flatten_params();
        for (std::size_t i = 0; i < after.size(); ++i)
          ledger->delta[i] += after[i] - before[i];
        ++ledger->batches_recorded;
      }
    }
    model.loss_history.push_back(epoch_loss / static_cast<double>(order.size()));
  }
}

std::pair<double, double> two_sum(double a, double b) {
  const double s = a + b;
  const double ap = s - b;
  const double bp = s - ap;
  const double err = (a - ap) + (b - bp);
  return {s, err};
}

}  // namespace

VflSpec VflSpec::equal_split(std::size_t input_dim, std::size_t n_parties,
                             std::vector<std::size_t> bottom, std::vector<std::size_t> top,
                             std::size_t n_classes) {
  VflSpec spec;
  spec.n_parties = n_parties;
  spec.n_classes = n_classes;
  spec.top_dims = std::move(top);
  const std::size_t base = input_dim / n_parties;
  const std::size_t extra = input_dim % n_parties;
  std::size_t begin = 0;
  for (std::size_t k = 0; k < n_parties; ++k) {
    const std::size_t width = base + (k < extra ? 1 : 0);
    spec.feature_partition.emplace_back(begin, begin + width);
    spec.bottom_dims.push_back(bottom);
    begin += width;
  }
  spec.validate(input_dim);
  return spec;
}

void VflSpec::validate(std::size_t input_dim) const {
  if (n_parties < 1) throw std::invalid_argument("vfl spec: need at least one party");
  if (feature_partition.size() != n_parties || bottom_dims.size() != n_parties)
    throw std::invalid_argument("vfl spec: per-party lists must match n_parties");
  std::size_t expect = 0;
  for (std::size_t k = 0; k < n_parties; ++k) {
    const auto [begin, end] = feature_partition[k];
    if (begin != expect || end <= begin)
      throw std::invalid_argument("vfl spec: partition must be contiguous, disjoint, exhaustive");
    expect = end;
    if (bottom_dims[k].empty())
      throw std::invalid_argument("vfl spec: every party needs at least one bottom layer");
  }
  if (expect != input_dim)
    throw std::invalid_argument("vfl spec: partition covers " + std::to_string(expect) +
                                " of " + std::to_string(input_dim) + " input columns");
  if (top_dims.size() < 2)
    throw std::invalid_argument("vfl spec: top model needs >= 2 hidden layers so the mid and "
                                "penultimate taps are distinct");
  if (n_classes < 2) throw std::invalid_argument("vfl spec: need at least 2 classes");
}

std::size_t VflSpec::concat_width() const {
  std::size_t w = 0;
  for (const auto& dims : bottom_dims) w += dims.back();
  return w;
}

void TrainConfig::validate() const {
  if (epochs < 1 || batch_size < 1) throw std::invalid_argument("train config: epochs and batch_size must be >= 1");
  if (!(learning_rate >= 0.0)) throw std::invalid_argument("train config: learning_rate must be >= 0");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw std::invalid_argument("train config: momentum must be in [0,1)");
}

Mlp make_mlp(const std::vector<std::size_t>& dims, Rng& rng) {
  if (dims.size() < 2) throw std::invalid_argument("make_mlp: need input and output dims");
  Mlp mlp;
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    DenseLayer layer;
    layer.w = Matrix(dims[l + 1], dims[l]);
    const double limit = std::sqrt(6.0 / static_cast<double>(dims[l]));
    for (double& v : layer.w.data()) v = (2.0 * rng.uniform() - 1.0) * limit;
    layer.b.assign(dims[l + 1], 0.0);
    mlp.layers.push_back(std::move(layer));
  }
  return mlp;
}

TrainedModel init_model(const VflSpec& vfl, std::size_t input_dim, std::uint64_t seed) {
  vfl.validate(input_dim);
  TrainedModel model;
  model.vfl = vfl;
  Rng rng(Rng::mix(seed, kInitSalt));
  for (std::size_t k = 0; k < vfl.n_parties; ++k) {
    const auto [begin, end] = vfl.feature_partition[k];
    std::vector<std::size_t> dims;
    dims.push_back(end - begin);
    dims.insert(dims.end(), vfl.bottom_dims[k].begin(), vfl.bottom_dims[k].end());
    model.bottoms.push_back(make_mlp(dims, rng));
  }
  std::vector<std::size_t> top;
  top.push_back(vfl.concat_width());
  top.insert(top.end(), vfl.top_dims.begin(), vfl.top_dims.end());
  top.push_back(vfl.n_classes);
  model.top = make_mlp(top, rng);
  return model;
}

std::vector<double> mlp_forward(const Mlp& mlp, const double* x, std::size_t dim) {
  std::vector<double> cur(x, x + dim);
  std::vector<double> next;
  for (std::size_t l = 0; l < mlp.layers.size(); ++l) {
    next.assign(mlp.layers[l].b.size(), 0.0);
    dense_forward(mlp.layers[l], cur.data(), cur.size(), next.data(),
                  l + 1 < mlp.layers.size());
    cur = next;
  }
  return cur;
}

std::vector<double> model_logits(const TrainedModel& model, const double* x) {
  Acts acts(model);
  forward_sample(model, x, acts);
  return acts.top.back();
}

std::size_t TrainedModel::param_count() const {
  std::size_t n = 0;
  for (const auto& mlp : bottoms)
    for (const auto& layer : mlp.layers) n += layer.w.data().size() + layer.b.size();
  for (const auto& layer : top.layers) n += layer.w.data().size() + layer.b.size();
  return n;
}

std::vector<double> TrainedModel::flatten_params() const {
  std::vector<double> flat;
  flat.reserve(param_count());
  auto push = [&](const Mlp& mlp) {
    for (const auto& layer : mlp.layers) {
      flat.insert(flat.end(), layer.w.data().begin(), layer.w.data().end());
      flat.insert(flat.end(), layer.b.begin(), layer.b.end());
    }
  };
  for (const auto& mlp : bottoms) push(mlp);
  push(top);
  return flat;
}

void TrainedModel::load_params(const std::vector<double>& flat) {
  if (flat.size() != param_count())
    throw std::invalid_argument("load_params: size mismatch");
  std::size_t off = 0;
  auto pull = [&](Mlp& mlp) {
    for (auto& layer : mlp.layers) {
      std::copy(flat.begin() + off, flat.begin() + off + layer.w.data().size(),
                layer.w.data().begin());
      off += layer.w.data().size();
      std::copy(flat.begin() + off, flat.begin() + off + layer.b.size(), layer.b.begin());
      off += layer.b.size();
    }
  };
  for (auto& mlp : bottoms) pull(mlp);
  pull(top);
}

TrainedModel train(const EmbeddingSet& data, const VflSpec& vfl, const TrainConfig& cfg) {
  data.validate();
  cfg.validate();
  vfl.validate(data.dim());
  for (std::uint32_t l : data.labels)
    if (l >= vfl.n_classes)
      throw std::invalid_argument("train: label " + std::to_string(l) + " outside n_classes");

  TrainedModel model = init_model(vfl, data.dim(), cfg.seed);
  model.cfg = cfg;
  std::vector<std::size_t> rows(data.size());
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  train_engine(model, data.features, data.labels, rows, cfg.epochs, cfg.batch_size,
               cfg.learning_rate, cfg.momentum, Rng::mix(cfg.seed, kShuffleSalt), nullptr, nullptr);
  return model;
}

TrainedModel train_with_ledger(const EmbeddingSet& data, const VflSpec& vfl,
                               const TrainConfig& cfg, const ForgetSpec& spec,
                               UpdateLedger& ledger) {
  data.validate();
  cfg.validate();
  vfl.validate(data.dim());
  spec.validate(data.labels);

  std::vector<std::uint8_t> flagged(data.size(), 0);
  for (std::size_t i = 0; i < data.size(); ++i)
    flagged[i] = spec.selects(data.labels[i], i) ? 1 : 0;

  TrainedModel model = init_model(vfl, data.dim(), cfg.seed);
  model.cfg = cfg;
  ledger.delta.assign(model.param_count(), 0.0);
  ledger.batches_recorded = 0;
  std::vector<std::size_t> rows(data.size());
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  train_engine(model, data.features, data.labels, rows, cfg.epochs, cfg.batch_size,
               cfg.learning_rate, cfg.momentum, Rng::mix(cfg.seed, kShuffleSalt), &flagged, &ledger);
  return model;
}

TapOutput forward_taps(const TrainedModel& model, const EmbeddingSet& data, ModelTag tag) {
  data.validate();
  const std::size_t n = data.size();
  Acts acts(model);

  TapOutput out;
  const std::size_t mid_dim = model.top.layers.front().b.size();
  const std::size_t pen_dim = model.top.layers[model.top.layers.size() - 2].b.size();
  Matrix early(n, acts.concat.size());
  Matrix mid(n, mid_dim);
  Matrix pen(n, pen_dim);
  out.predictions.resize(n);

  for (std::size_t i = 0; i < n; ++i) {
    forward_sample(model, data.features.row_ptr(i), acts);
    std::copy(acts.concat.begin(), acts.concat.end(), early.row_ptr(i));
    std::copy(acts.top.front().begin(), acts.top.front().end(), mid.row_ptr(i));
    const auto& pen_act = acts.top[model.top.layers.size() - 2];
    std::copy(pen_act.begin(), pen_act.end(), pen.row_ptr(i));
    const auto& logits = acts.top.back();
    std::size_t arg = 0;
    for (std::size_t c = 1; c < logits.size(); ++c)
      if (logits[c] > logits[arg]) arg = c;
    out.predictions[i] = static_cast<std::uint32_t>(arg);
  }

  auto make_set = [&](Matrix m, const char* layer) {
    EmbeddingSet set;
    set.features = std::move(m);
    set.labels = data.labels;
    set.layer_tag = layer;
    set.model_tag = tag;
    return set;
  };
  out.taps.emplace("early", make_set(std::move(early), "early"));
  out.taps.emplace("mid", make_set(std::move(mid), "mid"));
  out.taps.emplace("penultimate", make_set(std::move(pen), "penultimate"));
  return out;
}

TrainedModel unlearn_retrain(const EmbeddingSet& data, const ForgetSpec& spec, const VflSpec& vfl,
                             const TrainConfig& cfg) {
  data.validate();
  cfg.validate();
  auto [fidx, ridx] = forget_partition(data.labels, spec);
  if (ridx.empty()) throw std::invalid_argument("unlearn_retrain: no retained rows");

  TrainedModel model = init_model(vfl, data.dim(), cfg.seed);
  model.cfg = cfg;
  train_engine(model, data.features, data.labels, ridx, cfg.epochs, cfg.batch_size,
               cfg.learning_rate, cfg.momentum, Rng::mix(cfg.seed, kShuffleSalt), nullptr, nullptr);
  return model;
}

TrainedModel unlearn_finetune(const TrainedModel& model, const EmbeddingSet& data,
                              const ForgetSpec& spec, std::size_t epochs) {
  data.validate();
  auto [fidx, ridx] = forget_partition(data.labels, spec);
  if (ridx.empty()) throw std::invalid_argument("unlearn_finetune: no retained rows");

  TrainedModel out = model;
  if (epochs == 0) return out;
  const TrainConfig& cfg = model.cfg;
  train_engine(out, data.features, data.labels, ridx, epochs, cfg.batch_size, cfg.learning_rate,
               cfg.momentum, Rng::mix(cfg.seed, kFinetuneSalt), nullptr, nullptr);
  return out;
}

TrainedModel unlearn_boundary_lite(const TrainedModel& model, const EmbeddingSet& data,
                                   const ForgetSpec& spec, std::size_t epochs, Rng& rng) {
  data.validate();
  if (spec.kind != ForgetSpec::Kind::ClassLevel)
    throw std::invalid_argument("unlearn_boundary_lite: needs a class-level forget spec");
  spec.validate(data.labels);

  std::vector<std::size_t> forgotten_rows;
  for (std::size_t i = 0; i < data.size(); ++i)
    if (spec.classes.count(data.labels[i])) forgotten_rows.push_back(i);

  TrainedModel out = model;
  if (epochs == 0) return out;

  // Shifted labels are assigned once, from the entry model's logits: each
  // forgotten sample moves to its highest-logit class outside the forgotten
  // set. Fine-tuning then runs on retained + relabelled rows.
  LabelVector labels = data.labels;
  {
    Acts acts(model);
    for (std::size_t row : forgotten_rows) {
      forward_sample(model, data.features.row_ptr(row), acts);
      const auto& logits = acts.top.back();
      std::size_t best = 0;
      bool found = false;
      for (std::size_t c = 0; c < logits.size(); ++c) {
        if (spec.classes.count(static_cast<std::uint32_t>(c))) continue;
        if (!found || logits[c] > logits[best]) {
          best = c;
          found = true;
        }
      }
      if (!found)
        throw std::invalid_argument("unlearn_boundary_lite: every class is forgotten");
      labels[row] = static_cast<std::uint32_t>(best);
    }
  }

  // Fine-tune on the relabelled forgotten rows only. Leaving the retained
  // rows out of the objective is what lets boundary damage accumulate with
  // epochs instead of being repaired each pass.
  const TrainConfig& cfg = model.cfg;
  train_engine(out, data.features, labels, forgotten_rows, epochs, cfg.batch_size,
               cfg.learning_rate, cfg.momentum, rng.next_u64(), nullptr, nullptr);
  return out;
}

TrainedModel unlearn_amnesiac_lite(const TrainedModel& original, const UpdateLedger& ledger) {
  if (ledger.delta.size() != original.param_count())
    throw std::invalid_argument("unlearn_amnesiac_lite: ledger missing or shaped for a different model");

  TrainedModel out = original;
  std::vector<double> params = original.flatten_params();
  out.ledger_residual.assign(params.size(), 0.0);
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto [s, err] = two_sum(params[i], -ledger.delta[i]);
    params[i] = s;
    out.ledger_residual[i] = err;
  }
  out.load_params(params);
  return out;
}

TrainedModel reapply_ledger(const TrainedModel& unlearned, const UpdateLedger& ledger) {
  if (ledger.delta.size() != unlearned.param_count())
    throw std::invalid_argument("reapply_ledger: ledger shaped for a different model");
  if (unlearned.ledger_residual.size() != ledger.delta.size())
    throw std::invalid_argument("reapply_ledger: model carries no ledger residuals");

  TrainedModel out = unlearned;
  std::vector<double> params = unlearned.flatten_params();
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto [v, r] = two_sum(params[i], ledger.delta[i]);
    params[i] = v + (r + unlearned.ledger_residual[i]);
  }
  out.load_params(params);
  out.ledger_residual.clear();
  return out;
}

double loss_grad_packed(const TrainedModel& shape, const Matrix& x, const LabelVector& y,
                        const std::vector<double>& params, std::vector<double>* grad) {
  TrainedModel model = shape;
  model.load_params(params);
  Acts acts(model);
  Grads grads(model);

  double loss = 0.0;
  for (std::size_t i = 0; i < x.rows(); ++i) {
    forward_sample(model, x.row_ptr(i), acts);
    loss += softmax_loss(acts, y[i]);
    if (grad) backward_sample(model, x.row_ptr(i), y[i], acts, grads);
  }
  const double inv_n = 1.0 / static_cast<double>(x.rows());
  loss *= inv_n;

  if (grad) {
    grad->clear();
    grad->reserve(params.size());
    auto push = [&](const Mlp& mlp) {
      for (const auto& layer : mlp.layers) {
        for (double v : layer.w.data()) grad->push_back(v * inv_n);
        for (double v : layer.b) grad->push_back(v * inv_n);
      }
    };
    for (const auto& mlp : grads.bottoms) push(mlp);
    push(grads.top);
  }
  return loss;
}

double accuracy(const LabelVector& predictions, const LabelVector& labels) {
  if (predictions.size() != labels.size())
    throw std::invalid_argument("accuracy: length mismatch");
  if (predictions.empty()) throw std::invalid_argument("accuracy: empty inputs");
  std::size_t correct = 0;
  for (std::size_t i = 0; i < predictions.size(); ++i)
    if (predictions[i] == labels[i]) ++correct;
  return static_cast<double>(correct) / static_cast<double>(predictions.size());
}

}  // namespace mirage::sandbox
