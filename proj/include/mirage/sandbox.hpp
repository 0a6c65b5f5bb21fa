#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "mirage/embedding.hpp"
#include "mirage/forget.hpp"
#include "mirage/matrix.hpp"
#include "mirage/rng.hpp"

namespace mirage::sandbox {

// Weights are out x in, row-major; hidden layers are ReLU, the final layer of
// the top model is linear into softmax.
struct DenseLayer {
  Matrix w;
  std::vector<double> b;
};

struct Mlp {
  std::vector<DenseLayer> layers;
};

// Vertical split: party k owns a contiguous column range and a bottom
// encoder; the top classifier consumes the concatenated bottom outputs.
struct VflSpec {
  std::size_t n_parties = 2;
  std::vector<std::pair<std::size_t, std::size_t>> feature_partition;  // [begin,end) per party
  std::vector<std::vector<std::size_t>> bottom_dims;  // per party: hidden..., output width
  std::vector<std::size_t> top_dims;                  // top hidden widths (>= 2 entries)
  std::size_t n_classes = 2;

  // Equal contiguous split of input_dim across n_parties (remainder to the
  // leading parties), same bottom architecture everywhere.
  static VflSpec equal_split(std::size_t input_dim, std::size_t n_parties,
                             std::vector<std::size_t> bottom, std::vector<std::size_t> top,
                             std::size_t n_classes);

  void validate(std::size_t input_dim) const;
  std::size_t concat_width() const;
};

struct TrainConfig {
  std::size_t epochs = 10;
  std::size_t batch_size = 32;
  double learning_rate = 0.05;
  double momentum = 0.9;
  std::uint64_t seed = 0;

  void validate() const;
};

struct TrainedModel {
  VflSpec vfl;
  std::vector<Mlp> bottoms;
  Mlp top;
  std::vector<double> loss_history;  // mean loss per epoch
  TrainConfig cfg;

  // Set by unlearn_amnesiac_lite: rounding residuals that make reapplying the
  // ledger restore the pre-subtraction parameters exactly.
  std::vector<double> ledger_residual;

  std::size_t param_count() const;
  std::vector<double> flatten_params() const;
  void load_params(const std::vector<double>& flat);
};

// Sum of parameter deltas over every batch that contained forgotten rows.
struct UpdateLedger {
  std::vector<double> delta;
  std::size_t batches_recorded = 0;
};

struct TapOutput {
  std::map<std::string, EmbeddingSet> taps;  // early / mid / penultimate
  LabelVector predictions;
};

// Seeded He-style scaled-uniform init (biases zero); draw order is bottoms in
// party order then top, so a K=1 split and the equivalent plain MLP see the
// same stream.
Mlp make_mlp(const std::vector<std::size_t>& dims, Rng& rng);
TrainedModel init_model(const VflSpec& vfl, std::size_t input_dim, std::uint64_t seed);

// Plain MLP forward (hidden ReLU, final linear); used by the composition
// equivalence checks.
std::vector<double> mlp_forward(const Mlp& mlp, const double* x, std::size_t dim);

// Forward through the vertical composition; returns logits.
std::vector<double> model_logits(const TrainedModel& model, const double* x);

// Numerically stable softmax; training consumes these probabilities.
std::vector<double> softmax(const std::vector<double>& logits);

TrainedModel train(const EmbeddingSet& data, const VflSpec& vfl, const TrainConfig& cfg);
TrainedModel train_with_ledger(const EmbeddingSet& data, const VflSpec& vfl,
                               const TrainConfig& cfg, const ForgetSpec& spec,
                               UpdateLedger& ledger);

// Activation snapshots at the early (concatenated bottom output), mid (first
// top hidden) and penultimate (last top hidden) taps, plus argmax predictions.
TapOutput forward_taps(const TrainedModel& model, const EmbeddingSet& data, ModelTag tag);

TrainedModel unlearn_retrain(const EmbeddingSet& data, const ForgetSpec& spec, const VflSpec& vfl,
                             const TrainConfig& cfg);
TrainedModel unlearn_finetune(const TrainedModel& model, const EmbeddingSet& data,
                              const ForgetSpec& spec, std::size_t epochs);

// Boundary-style suppression: each forgotten sample is relabelled once, to
// the entry model's highest-logit class outside the forgotten set, then
// fine-tuning runs on the relabelled forgotten rows only.
TrainedModel unlearn_boundary_lite(const TrainedModel& model, const EmbeddingSet& data,
                                   const ForgetSpec& spec, std::size_t epochs, Rng& rng);

TrainedModel unlearn_amnesiac_lite(const TrainedModel& original, const UpdateLedger& ledger);

// Exact inverse of unlearn_amnesiac_lite (bitwise, using the stored residuals).
TrainedModel reapply_ledger(const TrainedModel& unlearned, const UpdateLedger& ledger);

// Mean softmax cross-entropy and gradient at arbitrary parameters; the
// finite-difference oracle drives this directly.
double loss_grad_packed(const TrainedModel& shape, const Matrix& x, const LabelVector& y,
                        const std::vector<double>& params, std::vector<double>* grad);

double accuracy(const LabelVector& predictions, const LabelVector& labels);

}  // namespace mirage::sandbox
