#pragma once

#include <cstdint>
#include <vector>

#include "mirage/embedding.hpp"
#include "mirage/forget.hpp"
#include "mirage/matrix.hpp"
#include "mirage/rng.hpp"

namespace mirage {

struct ProbeConfig {
  enum class Kind { Linear, Mlp };

  Kind kind = Kind::Linear;
  double reg_c = 1.0;             // inverse regularization strength
  std::size_t max_iters = 1000;
  std::size_t hidden_dim = 256;   // MLP only
  double eval_fraction = 0.2;
  bool balance = true;
  std::uint64_t seed = 0;

  void validate() const;
};

// A trained membership probe. holdout_accuracy is the reported recoverability
// value; weights are kept so decisions can be replayed.
struct ProbeModel {
  ProbeConfig::Kind kind = ProbeConfig::Kind::Linear;

  // Linear: w (dim), b. MLP: w1 (hidden x dim), b1 (hidden), w2 (hidden), b2.
  std::vector<double> w;
  double b = 0.0;
  Matrix w1;
  std::vector<double> b1;
  std::vector<double> w2;
  double b2 = 0.0;

  double train_accuracy = 0.0;
  double holdout_accuracy = 0.0;
  std::size_t n_train = 0;
  std::size_t n_eval = 0;
  std::size_t iters_run = 0;
  std::vector<double> loss_history;  // loss at the start of each iteration
  ProbeConfig config;

  // Probability of membership; threshold 0.5, ties predict 0.
  double predict_proba(const double* x, std::size_t dim) const;
  int predict(const double* x, std::size_t dim) const;
};

// 1 where the row belongs to the forgotten set (by class or by index), else 0.
std::vector<std::uint8_t> make_membership_labels(const EmbeddingSet& set, const ForgetSpec& spec);

// Subsamples the majority class (without replacement) down to the minority
// size and shuffles the result; chance level afterwards is 50%.
void balance_binary(Matrix& features, std::vector<std::uint8_t>& bin_labels, Rng& rng);

ProbeModel train_linear_probe(const Matrix& features, const std::vector<std::uint8_t>& bin_labels,
                              const ProbeConfig& config);
ProbeModel train_mlp_probe(const Matrix& features, const std::vector<std::uint8_t>& bin_labels,
                           const ProbeConfig& config);

// Full pipeline: membership labels -> optional balancing -> probe training.
// Returns the probe's held-out accuracy.
double lpr(const EmbeddingSet& set, const ForgetSpec& spec, const ProbeConfig& config);

namespace probe_detail {

// Loss/gradient evaluation points, shared by training and by the
// finite-difference test oracles. Loss is mean cross-entropy plus
// ||w||^2 / (2 * reg_c * n) over weight (not bias) parameters.
double linear_loss_grad(const Matrix& x, const std::vector<std::uint8_t>& y, double reg_c,
                        const std::vector<double>& w, double b,
                        std::vector<double>* grad_w, double* grad_b);

struct MlpShape {
  std::size_t dim = 0;
  std::size_t hidden = 0;
  std::size_t param_count() const { return hidden * dim + hidden + hidden + 1; }
};

double mlp_loss_grad(const Matrix& x, const std::vector<std::uint8_t>& y, double reg_c,
                     const MlpShape& shape, const std::vector<double>& params,
                     std::vector<double>* grad);

}  // namespace probe_detail

}  // namespace mirage
