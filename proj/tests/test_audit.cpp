#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "mirage/audit.hpp"
#include "mirage/geometry.hpp"

using namespace mirage;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "mirage_audit_tests" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

EmbeddingSet base_mixture(std::uint64_t seed = 404) {
  SyntheticSpec spec;
  spec.n_per_class = 200;
  spec.n_classes = 3;
  spec.dim = 8;
  spec.class_mean_scale = 2.0;
  spec.noise_sigma = 1.0;
  spec.seed = seed;
  return generate_gaussian_mixture(spec);
}

EmbeddingSet perturbed(const EmbeddingSet& base, double noise, std::uint64_t seed,
                       const std::string& layer, ModelTag tag) {
  EmbeddingSet out = base;
  Rng rng(seed);
  for (double& v : out.features.data()) v += noise * rng.normal();
  out.layer_tag = layer;
  out.model_tag = tag;
  return out;
}

// Three related views of the same rows; unlearned/retrained differ from the
// original by independent perturbations.
ModelTriple varied_triple() {
  const EmbeddingSet base = base_mixture();
  ModelTriple triple;
  for (const std::string layer : {"early", "mid", "penultimate"}) {
    const std::uint64_t salt = std::hash<std::string>{}(layer);
    triple.original[layer] = perturbed(base, 0.0, 1, layer, ModelTag::Original);
    triple.unlearned[layer] = perturbed(base, 0.15, salt + 1, layer, ModelTag::Unlearned);
    triple.retrained[layer] = perturbed(base, 0.15, salt + 2, layer, ModelTag::Retrained);
  }
  return triple;
}

ModelTriple identical_triple() {
  const EmbeddingSet base = base_mixture();
  ModelTriple triple;
  for (const std::string layer : {"early", "mid", "penultimate"}) {
    triple.original[layer] = perturbed(base, 0.0, 1, layer, ModelTag::Original);
    triple.unlearned[layer] = perturbed(base, 0.0, 1, layer, ModelTag::Unlearned);
    triple.retrained[layer] = perturbed(base, 0.0, 1, layer, ModelTag::Retrained);
  }
  return triple;
}

AuditConfig quick_config() {
  AuditConfig config = AuditConfig::defaults();
  config.seeds = {10, 11, 12};
  config.probe.max_iters = 300;
  config.method = "copy";
  config.dataset = "unit";
  return config;
}

std::string file_without_timestamp(const fs::path& p) {
  std::ifstream in(p);
  std::string out, line;
  while (std::getline(in, line))
    if (line.rfind("timestamp ", 0) != 0) out += line + "\n";
  return out;
}

}  // namespace

TEST_CASE("output metrics on exact and suppressed predictors") {
  LabelVector labels = {0, 0, 1, 1, 2, 2};
  const ForgetSpec spec = ForgetSpec::for_classes({2});

  const auto [acc_r1, y_u1] = output_metrics(labels, labels, spec);
  CHECK(acc_r1 == 1.0);
  CHECK(y_u1 == 1.0);

  LabelVector suppressed = {0, 0, 1, 1, 0, 1};  // never emits class 2
  const auto [acc_r2, y_u2] = output_metrics(labels, suppressed, spec);
  CHECK(acc_r2 == 1.0);
  CHECK(y_u2 == 0.0);
}

TEST_CASE("output metrics of a uniform predictor sit near 1/C") {
  SyntheticSpec spec;
  spec.n_per_class = 1000;
  spec.n_classes = 5;
  spec.dim = 2;
  spec.seed = 10;
  const EmbeddingSet set = generate_gaussian_mixture(spec);

  LabelVector preds(set.size());
  Rng rng(20);
  for (auto& p : preds) p = static_cast<std::uint32_t>(rng.below(5));

  const auto [acc_r, y_u] = output_metrics(set.labels, preds, ForgetSpec::for_classes({3}));
  CHECK(acc_r == doctest::Approx(0.2).epsilon(0.15));
  CHECK(y_u == doctest::Approx(0.2).epsilon(0.15));
}

TEST_CASE("output metrics validates lengths and partitions") {
  LabelVector labels = {0, 1};
  LabelVector preds = {0};
  CHECK_THROWS_AS(output_metrics(labels, preds, ForgetSpec::for_classes({1})),
                  std::invalid_argument);
}

TEST_CASE("forgetting gap reproduces the published arithmetic") {
  CHECK(forgetting_gap(0.947, 0.792) * 100.0 == doctest::Approx(15.5).epsilon(1e-9));
  CHECK(std::fabs(forgetting_gap(0.947, 0.792) * 100.0 - 15.4) <= 0.15);
  CHECK(forgetting_gap(0.5, 0.5) == 0.0);
  CHECK(std::fabs(forgetting_gap(0.699, 0.792) * 100.0 - (-9.4)) <= 0.15);
  CHECK_THROWS_AS(forgetting_gap(1.5, 0.5), std::invalid_argument);
}

TEST_CASE("layerwise gaps vanish for identical models") {
  const ModelTriple triple = identical_triple();
  const AuditConfig config = quick_config();
  const auto gaps = layerwise_gaps(triple, ForgetSpec::for_classes({2}), config);
  REQUIRE(gaps.size() == 3);
  for (const auto& [layer, gap] : gaps) CHECK(gap == 0.0);  // bitwise-equal probe inputs
}

TEST_CASE("layerwise gaps ignore an uninformative layer") {
  ModelTriple triple = identical_triple();
  for (auto* m : {&triple.original, &triple.unlearned, &triple.retrained}) {
    EmbeddingSet& set = m->at("early");
    set.features = Matrix(set.size(), 4, 0.0);
  }
  const auto gaps = layerwise_gaps(triple, ForgetSpec::for_classes({2}), quick_config());
  CHECK(std::fabs(gaps.front().second) <= 0.05);
}

TEST_CASE("layerwise gaps require the layer in every model") {
  ModelTriple triple = identical_triple();
  AuditConfig config = quick_config();
  config.layers = {"early", "mid", "penultimate", "missing"};
  CHECK_THROWS_WITH_AS(layerwise_gaps(triple, ForgetSpec::for_classes({2}), config),
                       doctest::Contains("missing"), std::invalid_argument);
}

TEST_CASE("certify compares diagnostics against epsilon") {
  AuditReport report;
  report.delta_lpr = 0.155;
  report.cka_unlearned_vs_retrained = 0.995;
  report.unlearned.separability = 0.30;
  report.retrained.separability = 0.25;

  SUBCASE("forgetting illusion fails the lpr check") {
    const auto verdicts = certify(report, {{"lpr", 0.05}, {"cka", 0.02}, {"separability", 0.5}});
    REQUIRE(verdicts.size() == 3);
    CHECK_FALSE(verdicts[0].pass);  // lpr
    CHECK(verdicts[1].pass);        // cka
    CHECK(verdicts[2].pass);        // separability
  }
  SUBCASE("vacuous thresholds always pass") {
    for (const auto& v : certify(report, {{"lpr", 1.0}, {"cka", 1.0}, {"separability", 1e9}}))
      CHECK(v.pass);
  }
  SUBCASE("missing epsilon is a configuration error") {
    CHECK_THROWS_WITH_AS(certify(report, {{"lpr", 0.05}}), doctest::Contains("cka"),
                         std::invalid_argument);
  }
  SUBCASE("enlarging epsilon never flips pass to fail") {
    std::map<std::string, double> eps = {{"lpr", 0.01}, {"cka", 0.001}, {"separability", 0.1}};
    auto before = certify(report, eps);
    for (auto& [name, value] : eps) value *= 10.0;
    auto after = certify(report, eps);
    for (std::size_t i = 0; i < before.size(); ++i)
      if (before[i].pass) CHECK(after[i].pass);
  }
}

TEST_CASE("run_audit on an identical triple certifies cleanly") {
  const ModelTriple triple = identical_triple();
  const AuditConfig config = quick_config();
  const AuditReport report = run_audit(triple, ForgetSpec::for_classes({2}), config);

  CHECK(report.delta_lpr == 0.0);
  CHECK(std::fabs(report.cka_unlearned_vs_original - 1.0) <= 1e-9);
  CHECK(std::fabs(report.cka_unlearned_vs_retrained - 1.0) <= 1e-9);
  CHECK(report.unlearned.separability == report.retrained.separability);
  CHECK(report.certified);
  CHECK(report.verdicts.size() == 3);

  // delta consistency with its own fields
  CHECK(report.delta_lpr == forgetting_gap(report.unlearned.lpr_mean, report.retrained.lpr_mean));
}

TEST_CASE("run_audit with unlearned == original pins cka_o and the gap") {
  const EmbeddingSet base = base_mixture();
  ModelTriple triple;
  for (const std::string layer : {"early", "mid", "penultimate"}) {
    const std::uint64_t salt = std::hash<std::string>{}(layer);
    triple.original[layer] = perturbed(base, 0.0, 1, layer, ModelTag::Original);
    triple.unlearned[layer] = perturbed(base, 0.0, 1, layer, ModelTag::Unlearned);
    triple.retrained[layer] = perturbed(base, 0.2, salt + 9, layer, ModelTag::Retrained);
  }
  const AuditReport report = run_audit(triple, ForgetSpec::for_classes({2}), quick_config());
  CHECK(std::fabs(report.cka_unlearned_vs_original - 1.0) <= 1e-9);
  CHECK(report.delta_lpr == report.original.lpr_mean - report.retrained.lpr_mean);
  CHECK(report.unlearned.lpr_mean == report.original.lpr_mean);
}

TEST_CASE("run_audit output metrics appear when predictions are given") {
  ModelTriple triple = identical_triple();
  const LabelVector& labels = triple.labels();
  triple.predictions_unlearned = labels;  // perfect predictor
  LabelVector wrong(labels.size(), 0);
  triple.predictions_retrained = wrong;

  const AuditReport report = run_audit(triple, ForgetSpec::for_classes({2}), quick_config());
  REQUIRE(report.unlearned.acc_r.has_value());
  CHECK(*report.unlearned.acc_r == 1.0);
  CHECK(*report.unlearned.y_u == 1.0);
  REQUIRE(report.retrained.y_u.has_value());
  CHECK(*report.retrained.y_u == 0.0);
  CHECK_FALSE(report.original.acc_r.has_value());
}

TEST_CASE("report emit/parse round trip preserves values at 6 decimals") {
  const ModelTriple triple = varied_triple();
  ModelTriple with_preds = triple;
  with_preds.predictions_unlearned = triple.labels();
  const AuditReport report = run_audit(with_preds, ForgetSpec::for_classes({2}), quick_config());

  const fs::path dir = temp_dir("roundtrip");
  emit_report(report, dir);
  const AuditReport back = parse_report(dir / "report.txt");

  CHECK(back.method == report.method);
  CHECK(back.dataset == report.dataset);
  CHECK(back.layers == report.layers);
  CHECK(back.seeds == report.seeds);
  CHECK(back.certified == report.certified);
  CHECK(back.delta_lpr == doctest::Approx(report.delta_lpr).epsilon(1e-6));
  CHECK(back.delta_lpr_std == doctest::Approx(report.delta_lpr_std).epsilon(1e-6));
  CHECK(back.unlearned.lpr_mean == doctest::Approx(report.unlearned.lpr_mean).epsilon(1e-6));
  CHECK(back.retrained.separability ==
        doctest::Approx(report.retrained.separability).epsilon(1e-6));
  CHECK(back.cka_unlearned_vs_retrained ==
        doctest::Approx(report.cka_unlearned_vs_retrained).epsilon(1e-6));
  CHECK(*back.unlearned.acc_r == doctest::Approx(*report.unlearned.acc_r).epsilon(1e-6));
  CHECK(back.epsilon == report.epsilon);
  REQUIRE(back.verdicts.size() == report.verdicts.size());
  for (std::size_t i = 0; i < back.verdicts.size(); ++i) {
    CHECK(back.verdicts[i].diagnostic == report.verdicts[i].diagnostic);
    CHECK(back.verdicts[i].pass == report.verdicts[i].pass);
  }
  REQUIRE(back.delta_lpr_per_layer.size() == 3);
  for (std::size_t l = 0; l < 3; ++l)
    CHECK(back.delta_lpr_per_layer[l].second.mean ==
          doctest::Approx(report.delta_lpr_per_layer[l].second.mean).epsilon(1e-6));
}

TEST_CASE("reports are reproducible modulo the timestamp") {
  const ModelTriple triple = varied_triple();
  const AuditConfig config = quick_config();
  const ForgetSpec spec = ForgetSpec::for_classes({2});

  const fs::path dir1 = temp_dir("repro1");
  const fs::path dir2 = temp_dir("repro2");
  emit_report(run_audit(triple, spec, config), dir1);
  emit_report(run_audit(triple, spec, config), dir2);

  CHECK(file_without_timestamp(dir1 / "report.txt") == file_without_timestamp(dir2 / "report.txt"));
  CHECK(file_without_timestamp(dir1 / "diagnostics.csv") ==
        file_without_timestamp(dir2 / "diagnostics.csv"));
}

TEST_CASE("diagnostics csv has one row per audited model-layer combination") {
  const ModelTriple triple = varied_triple();
  const AuditReport report = run_audit(triple, ForgetSpec::for_classes({2}), quick_config());
  const fs::path dir = temp_dir("csvcount");
  emit_report(report, dir);

  std::ifstream in(dir / "diagnostics.csv");
  std::string line;
  std::size_t rows = 0;
  std::getline(in, line);
  CHECK(line == "model,layer,lpr,delta_lpr,cka_o,separability");
  while (std::getline(in, line))
    if (!line.empty()) ++rows;
  // unlearned + retrained at all three layers, original at the primary layer
  CHECK(rows == 2 * 3 + 1);
}

TEST_CASE("scatter csv") {
  SUBCASE("empty report list emits only the header") {
    const fs::path dir = temp_dir("scatter_empty");
    emit_scatter({}, dir / "scatter.csv");
    std::ifstream in(dir / "scatter.csv");
    std::string content((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    CHECK(content == "method,dataset,y_u,delta_lpr\n");
  }
  SUBCASE("rows are sorted by method then dataset") {
    AuditReport a, b;
    a.method = "zeta";
    a.dataset = "d1";
    a.delta_lpr = 0.1;
    a.unlearned.y_u = 0.0;
    b.method = "alpha";
    b.dataset = "d2";
    b.delta_lpr = -0.05;
    b.unlearned.y_u = 0.5;

    const fs::path dir = temp_dir("scatter_sorted");
    emit_scatter({a, b}, dir / "scatter.csv");
    std::ifstream in(dir / "scatter.csv");
    std::string header, first, second;
    std::getline(in, header);
    std::getline(in, first);
    std::getline(in, second);
    CHECK(first == "alpha,d2,0.500000,-0.050000");
    CHECK(second == "zeta,d1,0.000000,0.100000");
  }
}

TEST_CASE("triple and config validation") {
  ModelTriple triple = identical_triple();
  triple.unlearned.erase("mid");
  CHECK_THROWS_AS(triple.validate(), std::invalid_argument);

  AuditConfig config = quick_config();
  config.seeds.clear();
  CHECK_THROWS_AS(config.validate(), std::invalid_argument);

  config = quick_config();
  config.primary_layer = "nowhere";
  CHECK_THROWS_AS(config.validate(), std::invalid_argument);

  config = quick_config();
  config.epsilon["lpr"] = -1.0;
  CHECK_THROWS_AS(config.validate(), std::invalid_argument);
}

TEST_CASE("audit config file parsing") {
  const fs::path dir = temp_dir("config");
  std::ofstream(dir / "audit.cfg") << "# comment\nseeds 5,6,7\nepsilon_lpr 0.04\n"
                                      "probe_max_iters 200\nmethod bu\ndataset covid\n";
  const AuditConfig config = parse_audit_config(dir / "audit.cfg");
  CHECK(config.seeds == std::vector<std::uint64_t>{5, 6, 7});
  CHECK(config.epsilon.at("lpr") == 0.04);
  CHECK(config.probe.max_iters == 200);
  CHECK(config.method == "bu");
  CHECK(config.dataset == "covid");

  std::ofstream(dir / "bad.cfg") << "nonsense 1\n";
  CHECK_THROWS_WITH_AS(parse_audit_config(dir / "bad.cfg"), doctest::Contains(":1"),
                       std::runtime_error);
}
