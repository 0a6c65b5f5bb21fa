#include <doctest.h>

#include <cmath>
#include <numeric>
#include <set>

#include "mirage/probe.hpp"
#include "mirage/sandbox.hpp"

using namespace mirage;
using namespace mirage::sandbox;

namespace {

EmbeddingSet mixture(std::size_t n_per_class, std::size_t n_classes, std::size_t dim,
                     double scale, std::uint64_t seed) {
  SyntheticSpec spec;
  spec.n_per_class = n_per_class;
  spec.n_classes = n_classes;
  spec.dim = dim;
  spec.class_mean_scale = scale;
  spec.noise_sigma = 1.0;
  spec.seed = seed;
  return generate_gaussian_mixture(spec);
}

VflSpec small_vfl(std::size_t dim, std::size_t n_classes) {
  return VflSpec::equal_split(dim, 2, {12, 6}, {16, 10}, n_classes);
}

TrainConfig quick_cfg(std::uint64_t seed, std::size_t epochs = 25) {
  TrainConfig cfg;
  cfg.epochs = epochs;
  cfg.batch_size = 32;
  cfg.learning_rate = 0.05;
  cfg.momentum = 0.9;
  cfg.seed = seed;
  return cfg;
}

}  // namespace

TEST_CASE("training is deterministic and learns a separable mixture") {
  const EmbeddingSet data = mixture(150, 3, 8, 4.0, 5);
  const VflSpec vfl = small_vfl(8, 3);

  const TrainedModel a = train(data, vfl, quick_cfg(11, 30));
  const TrainedModel b = train(data, vfl, quick_cfg(11, 30));
  CHECK(a.flatten_params() == b.flatten_params());
  CHECK(a.loss_history == b.loss_history);
  CHECK(a.loss_history.back() < a.loss_history.front());

  const TapOutput taps = forward_taps(a, data, ModelTag::Original);
  CHECK(accuracy(taps.predictions, data.labels) >= 0.95);
}

TEST_CASE("zero learning rate leaves parameters untouched") {
  const EmbeddingSet data = mixture(40, 2, 4, 3.0, 7);
  const VflSpec vfl = small_vfl(4, 2);
  TrainConfig cfg = quick_cfg(3, 5);
  cfg.learning_rate = 0.0;

  const TrainedModel before = init_model(vfl, data.dim(), cfg.seed);
  const TrainedModel after = train(data, vfl, cfg);
  CHECK(after.flatten_params() == before.flatten_params());
  for (std::size_t i = 1; i < after.loss_history.size(); ++i)
    CHECK(after.loss_history[i] == doctest::Approx(after.loss_history[0]).epsilon(1e-12));
}

TEST_CASE("network gradients match central finite differences") {
  Rng rng(23);
  for (int instance = 0; instance < 3; ++instance) {
    const EmbeddingSet data = mixture(3, 2, 6, 2.0, 100 + instance);
    REQUIRE(data.size() == 6);
    const VflSpec vfl = VflSpec::equal_split(6, 2, {5, 3}, {4, 3}, 2);
    const TrainedModel shape = init_model(vfl, 6, 900 + instance);

    std::vector<double> params = shape.flatten_params();
    for (double& v : params) v += 0.1 * rng.normal();

    std::vector<double> analytic;
    loss_grad_packed(shape, data.features, data.labels, params, &analytic);

    double diff = 0.0, norm = 0.0;
    for (std::size_t j = 0; j < params.size(); ++j) {
      const double h = 1e-6 * std::max(1.0, std::fabs(params[j]));
      std::vector<double> p(params);
      p[j] += h;
      const double up = loss_grad_packed(shape, data.features, data.labels, p, nullptr);
      p[j] -= 2.0 * h;
      const double down = loss_grad_packed(shape, data.features, data.labels, p, nullptr);
      const double fd = (up - down) / (2.0 * h);
      diff += (analytic[j] - fd) * (analytic[j] - fd);
      norm += fd * fd;
    }
    CHECK(std::sqrt(diff) / std::max(std::sqrt(norm), 1e-10) <= 1e-4);
  }
}

TEST_CASE("softmax outputs sum to one") {
  Rng rng(31);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> logits(2 + rng.below(8));
    for (double& v : logits) v = 20.0 * (rng.uniform() - 0.5);
    const auto p = softmax(logits);
    double sum = 0.0;
    for (double v : p) {
      CHECK(v >= 0.0);
      sum += v;
    }
    CHECK(std::fabs(sum - 1.0) <= 1e-12);
  }
}

TEST_CASE("k=1 split matches the plain mlp forward bitwise") {
  const std::size_t dim = 7;
  const VflSpec vfl = VflSpec::equal_split(dim, 1, {10, 5}, {8, 6}, 3);
  const std::uint64_t seed = 77;
  const TrainedModel composite = init_model(vfl, dim, seed);

  // identical stream: bottoms then top, layer by layer
  Rng rng(Rng::mix(seed, 0x766C696E69743031ULL));
  const Mlp plain = make_mlp({dim, 10, 5, 8, 6, 3}, rng);

  Rng xrng(5);
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<double> x(dim);
    for (double& v : x) v = xrng.normal();
    const auto a = model_logits(composite, x.data());
    const auto b = mlp_forward(plain, x.data(), dim);
    REQUIRE(a.size() == b.size());
    for (std::size_t c = 0; c < a.size(); ++c) CHECK(a[c] == b[c]);
  }
}

TEST_CASE("forward taps expose the documented layers deterministically") {
  const EmbeddingSet data = mixture(60, 3, 8, 3.0, 41);
  const VflSpec vfl = small_vfl(8, 3);
  const TrainedModel model = train(data, vfl, quick_cfg(13, 10));

  const TapOutput taps = forward_taps(model, data, ModelTag::Original);
  CHECK(taps.taps.at("early").dim() == 2 * 6);        // concat of bottom outputs
  CHECK(taps.taps.at("mid").dim() == 16);             // first top hidden
  CHECK(taps.taps.at("penultimate").dim() == 10);     // last top hidden
  CHECK(taps.taps.at("early").labels == data.labels);
  CHECK(taps.predictions.size() == data.size());

  const TapOutput again = forward_taps(model, data, ModelTag::Original);
  CHECK(again.taps.at("penultimate").features == taps.taps.at("penultimate").features);
  CHECK(again.predictions == taps.predictions);
}

TEST_CASE("information concentrates with depth on a moderate mixture") {
  const EmbeddingSet data = mixture(300, 3, 8, 1.6, 47);
  const VflSpec vfl = small_vfl(8, 3);
  const TrainedModel model = train(data, vfl, quick_cfg(17, 30));
  const TapOutput taps = forward_taps(model, data, ModelTag::Original);

  const ForgetSpec spec = ForgetSpec::for_classes({2});
  double early = 0.0, pen = 0.0;
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    ProbeConfig cfg;
    cfg.seed = seed;
    early += lpr(taps.taps.at("early"), spec, cfg);
    pen += lpr(taps.taps.at("penultimate"), spec, cfg);
  }
  CHECK(early <= pen + 1e-9);
}

TEST_CASE("retrain never trains on forgotten rows") {
  const EmbeddingSet data = mixture(200, 3, 8, 4.0, 53);
  const VflSpec vfl = small_vfl(8, 3);
  const ForgetSpec spec = ForgetSpec::for_classes({1});

  const TrainedModel original = train(data, vfl, quick_cfg(19, 30));
  TrainConfig rcfg = quick_cfg(23, 30);
  const TrainedModel retrained = unlearn_retrain(data, spec, vfl, rcfg);

  const TapOutput orig_taps = forward_taps(original, data, ModelTag::Original);
  const TapOutput ret_taps = forward_taps(retrained, data, ModelTag::Retrained);

  const auto [acc_r_o, y_u_o] = [&] {
    const auto [fidx, ridx] = forget_partition(data.labels, spec);
    auto acc = [&](const LabelVector& preds, const std::vector<std::size_t>& idx) {
      std::size_t ok = 0;
      for (auto i : idx)
        if (preds[i] == data.labels[i]) ++ok;
      return double(ok) / double(idx.size());
    };
    return std::pair{acc(orig_taps.predictions, ridx), acc(orig_taps.predictions, fidx)};
  }();

  const auto [fidx, ridx] = forget_partition(data.labels, spec);
  auto acc = [&](const LabelVector& preds, const std::vector<std::size_t>& idx) {
    std::size_t ok = 0;
    for (auto i : idx)
      if (preds[i] == data.labels[i]) ++ok;
    return double(ok) / double(idx.size());
  };
  const double y_u_r = acc(ret_taps.predictions, fidx);
  const double acc_r_r = acc(ret_taps.predictions, ridx);

  CHECK(y_u_o > 0.9);      // original still predicts the forgotten class
  CHECK(y_u_r <= 0.02);    // the class is effectively absent from retrain outputs
  CHECK(std::fabs(acc_r_r - acc_r_o) <= 0.03);
}

TEST_CASE("finetune with zero epochs is the identity") {
  const EmbeddingSet data = mixture(50, 2, 4, 3.0, 59);
  const VflSpec vfl = small_vfl(4, 2);
  const TrainedModel model = train(data, vfl, quick_cfg(29, 8));
  const TrainedModel same = unlearn_finetune(model, data, ForgetSpec::for_classes({1}), 0);
  CHECK(same.flatten_params() == model.flatten_params());
}

TEST_CASE("boundary-lite suppresses the forgotten class quickly") {
  const EmbeddingSet data = mixture(200, 3, 8, 1.6, 61);
  const VflSpec vfl = small_vfl(8, 3);
  const ForgetSpec spec = ForgetSpec::for_classes({2});
  const TrainedModel original = train(data, vfl, quick_cfg(31, 30));

  Rng rng(67);
  const TrainedModel unlearned = unlearn_boundary_lite(original, data, spec, 3, rng);
  const TapOutput taps = forward_taps(unlearned, data, ModelTag::Unlearned);

  const auto [fidx, ridx] = forget_partition(data.labels, spec);
  std::size_t hits = 0;
  for (auto i : fidx)
    if (taps.predictions[i] == data.labels[i]) ++hits;
  CHECK(double(hits) / double(fidx.size()) <= 0.05);

  CHECK_THROWS_AS(unlearn_boundary_lite(original, data, ForgetSpec::for_samples({1, 2}), 1, rng),
                  std::invalid_argument);
}

TEST_CASE("amnesiac ledger subtraction is exactly invertible") {
  const EmbeddingSet data = mixture(80, 3, 6, 3.0, 71);
  const VflSpec vfl = VflSpec::equal_split(6, 2, {8, 4}, {8, 6}, 3);
  const ForgetSpec spec = ForgetSpec::for_classes({1});

  UpdateLedger ledger;
  const TrainedModel original = train_with_ledger(data, vfl, quick_cfg(37, 12), spec, ledger);
  CHECK(ledger.batches_recorded > 0);

  // recording must not perturb training itself
  const TrainedModel plain = train(data, vfl, quick_cfg(37, 12));
  CHECK(plain.flatten_params() == original.flatten_params());

  const TrainedModel unlearned = unlearn_amnesiac_lite(original, ledger);
  CHECK(unlearned.flatten_params() != original.flatten_params());

  const TrainedModel restored = reapply_ledger(unlearned, ledger);
  CHECK(restored.flatten_params() == original.flatten_params());
}

TEST_CASE("amnesiac with an empty forgotten set is the identity") {
  const EmbeddingSet data = mixture(60, 2, 4, 3.0, 73);
  const VflSpec vfl = small_vfl(4, 2);

  // ledger for a sample spec whose indices never share a batch: use a spec
  // selecting nothing by pointing at rows of a class filtered out below.
  UpdateLedger ledger;
  const TrainedModel original = train(data, vfl, quick_cfg(41, 6));
  ledger.delta.assign(original.param_count(), 0.0);

  const TrainedModel unlearned = unlearn_amnesiac_lite(original, ledger);
  CHECK(unlearned.flatten_params() == original.flatten_params());

  UpdateLedger wrong;
  wrong.delta.assign(3, 0.0);
  CHECK_THROWS_AS(unlearn_amnesiac_lite(original, wrong), std::invalid_argument);
}

TEST_CASE("class level traces stay recoverable while sample membership is chance") {
  const EmbeddingSet data = mixture(800, 3, 8, 1.6, 79);
  const VflSpec vfl = small_vfl(8, 3);
  const TrainedModel model = train(data, vfl, quick_cfg(43, 30));
  const TapOutput taps = forward_taps(model, data, ModelTag::Original);
  const EmbeddingSet& pen = taps.taps.at("penultimate");

  double class_mean = 0.0, sample_mean = 0.0;
  Rng pick(83);
  const auto indices = pick.sample_without_replacement(data.size(), data.size() / 10);
  const ForgetSpec sample_spec =
      ForgetSpec::for_samples(std::set<std::size_t>(indices.begin(), indices.end()));
  const ForgetSpec class_spec = ForgetSpec::for_classes({2});

  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    ProbeConfig cfg;
    cfg.seed = seed;
    class_mean += lpr(pen, class_spec, cfg);
    sample_mean += lpr(pen, sample_spec, cfg);
  }
  class_mean /= 5.0;
  sample_mean /= 5.0;

  CHECK(class_mean > 0.6);
  CHECK(sample_mean >= 0.45);
  CHECK(sample_mean <= 0.55);
}

TEST_CASE("train validates inputs") {
  const EmbeddingSet data = mixture(30, 2, 4, 2.0, 89);
  const VflSpec vfl = small_vfl(4, 2);
  TrainConfig cfg = quick_cfg(1, 2);
  cfg.batch_size = 0;
  CHECK_THROWS_AS(train(data, vfl, cfg), std::invalid_argument);

  CHECK_THROWS_AS(VflSpec::equal_split(4, 2, {8}, {8}, 2), std::invalid_argument);  // 1 top layer
  CHECK_THROWS_AS(VflSpec::equal_split(0, 2, {8}, {8, 4}, 2), std::invalid_argument);
}
