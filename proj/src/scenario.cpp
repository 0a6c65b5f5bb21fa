#include "mirage/scenario.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "mirage/geometry.hpp"
#include "mirage/probe.hpp"

namespace mirage {

namespace {

constexpr std::uint64_t kRetrainBaselineSalt = 0x7265747261696E30ULL;
constexpr std::uint64_t kRetrainMethodSalt = 0x7265747261696E31ULL;
constexpr std::uint64_t kBoundarySalt = 0x626F756E64617279ULL;
constexpr std::uint64_t kForgetSalt = 0x666F726765747331ULL;

struct Line {
  std::size_t number;
  std::string section;
  std::string key;
  std::string value;
};

[[noreturn]] void fail(const std::filesystem::path& file, std::size_t lineno,
                       const std::string& what) {
  throw std::runtime_error("scenario " + file.string() + ":" + std::to_string(lineno) + ": " + what);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) out.push_back(item);
  return out;
}

std::vector<std::size_t> parse_size_list(const std::string& s, const std::filesystem::path& file,
                                         std::size_t lineno) {
  std::vector<std::size_t> out;
  for (const auto& item : split_list(s)) {
    try {
      out.push_back(std::stoull(item));
    } catch (const std::exception&) {
      fail(file, lineno, "expected a comma-separated list of counts, got '" + s + "'");
    }
  }
  return out;
}

void export_model(const std::map<std::string, EmbeddingSet>& taps, const LabelVector& predictions,
                  const std::filesystem::path& model_dir) {
  for (const auto& [tag, set] : taps) write_embedding_set(set, model_dir / tag);
  std::ofstream out(model_dir / "predictions", std::ios::binary);
  if (!out) throw std::runtime_error("scenario: cannot write " + (model_dir / "predictions").string());
  for (std::uint32_t p : predictions) {
    const char bytes[4] = {static_cast<char>(p & 0xFF), static_cast<char>((p >> 8) & 0xFF),
                           static_cast<char>((p >> 16) & 0xFF), static_cast<char>((p >> 24) & 0xFF)};
    out.write(bytes, 4);
  }
}

void export_pca(const EmbeddingSet& set, const ForgetSpec& spec,
                const std::filesystem::path& file) {
  const Matrix proj = pca2(set.features);
  const std::vector<std::uint8_t> membership = make_membership_labels(set, spec);
  write_pca2_csv(proj, set.labels, membership, file);
}

}  // namespace

void Scenario::validate() const {
  dataset.validate();
  train.validate();
  if (methods.empty()) throw std::invalid_argument("scenario: methods list is empty");
  for (const auto& m : methods)
    if (m != "retrain" && m != "finetune" && m != "boundary" && m != "amnesiac")
      throw std::invalid_argument("scenario: unknown method '" + m + "'");
  audit.validate();
  vfl_spec();  // throws on a bad architecture block
}

sandbox::VflSpec Scenario::vfl_spec() const {
  std::vector<std::size_t> bottom = bottom_hidden;
  bottom.push_back(bottom_out);
  return sandbox::VflSpec::equal_split(dataset.dim, parties, bottom, top_hidden,
                                       dataset.n_classes);
}

ForgetSpec Scenario::resolve_forget(std::size_t n_rows) const {
  if (!forget_by_fraction) return forget;
  if (!(forget_fraction > 0.0 && forget_fraction < 1.0))
    throw std::invalid_argument("scenario: forget fraction must be in (0,1)");
  const auto k = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::llround(forget_fraction * static_cast<double>(n_rows))));
  Rng rng(Rng::mix(forget_seed, kForgetSalt));
  const auto picks = rng.sample_without_replacement(n_rows, k);
  return ForgetSpec::for_samples(std::set<std::size_t>(picks.begin(), picks.end()));
}

Scenario parse_scenario(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw std::runtime_error("scenario: cannot open " + file.string());

  std::vector<Line> lines;
  std::string raw;
  std::string section;
  std::size_t lineno = 0;
  bool saw_schema = false;
  while (std::getline(in, raw)) {
    ++lineno;
    if (!raw.empty() && raw.back() == '\r') raw.pop_back();
    std::string line = raw;
    while (!line.empty() && (line.back() == ' ' || line.back() == '\t')) line.pop_back();
    std::size_t start = line.find_first_not_of(" \t");
    if (start == std::string::npos) continue;
    line = line.substr(start);
    if (line[0] == '#') continue;
    if (line.front() == '[') {
      if (line.back() != ']') fail(file, lineno, "unterminated section header");
      section = line.substr(1, line.size() - 2);
      continue;
    }
    const std::size_t sp = line.find(' ');
    if (sp == std::string::npos) fail(file, lineno, "expected 'key value'");
    Line l{lineno, section, line.substr(0, sp), line.substr(sp + 1)};
    if (l.section.empty() && l.key == "schema") {
      if (l.value != "scenario-1") fail(file, lineno, "unknown schema '" + l.value + "'");
      saw_schema = true;
      continue;
    }
    lines.push_back(std::move(l));
  }
  if (!saw_schema)
    throw std::runtime_error("scenario " + file.string() + ": missing 'schema scenario-1' line");

  Scenario scn;
  bool forget_kind_sample = false;
  bool saw_forget_target = false;

  for (const auto& l : lines) {
    auto as_count = [&]() -> std::size_t {
      try {
        return std::stoull(l.value);
      } catch (const std::exception&) {
        fail(file, l.number, "expected a count for '" + l.key + "'");
      }
    };
    auto as_real = [&]() -> double {
      try {
        return std::stod(l.value);
      } catch (const std::exception&) {
        fail(file, l.number, "expected a number for '" + l.key + "'");
      }
    };

    if (l.section.empty()) {
      if (l.key == "name") scn.name = l.value;
      else fail(file, l.number, "unknown top-level key '" + l.key + "'");
    } else if (l.section == "dataset") {
      if (l.key == "n_per_class") scn.dataset.n_per_class = as_count();
      else if (l.key == "n_classes") scn.dataset.n_classes = as_count();
      else if (l.key == "dim") scn.dataset.dim = as_count();
      else if (l.key == "class_mean_scale") scn.dataset.class_mean_scale = as_real();
      else if (l.key == "noise_sigma") scn.dataset.noise_sigma = as_real();
      else if (l.key == "seed") scn.dataset.seed = as_count();
      else fail(file, l.number, "unknown dataset key '" + l.key + "'");
    } else if (l.section == "vfl") {
      if (l.key == "parties") scn.parties = as_count();
      else if (l.key == "bottom_hidden") scn.bottom_hidden = parse_size_list(l.value, file, l.number);
      else if (l.key == "bottom_out") scn.bottom_out = as_count();
      else if (l.key == "top_hidden") scn.top_hidden = parse_size_list(l.value, file, l.number);
      else fail(file, l.number, "unknown vfl key '" + l.key + "'");
    } else if (l.section == "forget") {
      if (l.key == "kind") {
        if (l.value == "class") forget_kind_sample = false;
        else if (l.value == "sample") forget_kind_sample = true;
        else fail(file, l.number, "forget kind must be 'class' or 'sample'");
      } else if (l.key == "classes") {
        std::set<std::uint32_t> cls;
        for (std::size_t v : parse_size_list(l.value, file, l.number))
          cls.insert(static_cast<std::uint32_t>(v));
        scn.forget = ForgetSpec::for_classes(cls);
        saw_forget_target = true;
      } else if (l.key == "indices") {
        std::set<std::size_t> idx;
        for (std::size_t v : parse_size_list(l.value, file, l.number)) idx.insert(v);
        scn.forget = ForgetSpec::for_samples(idx);
        saw_forget_target = true;
      } else if (l.key == "fraction") {
        scn.forget_by_fraction = true;
        scn.forget_fraction = as_real();
        saw_forget_target = true;
      } else if (l.key == "seed") {
        scn.forget_seed = as_count();
      } else {
        fail(file, l.number, "unknown forget key '" + l.key + "'");
      }
    } else if (l.section == "train") {
      if (l.key == "epochs") scn.train.epochs = as_count();
      else if (l.key == "batch_size") scn.train.batch_size = as_count();
      else if (l.key == "learning_rate") scn.train.learning_rate = as_real();
      else if (l.key == "momentum") scn.train.momentum = as_real();
      else if (l.key == "seed") scn.train.seed = as_count();
      else fail(file, l.number, "unknown train key '" + l.key + "'");
    } else if (l.section == "unlearn") {
      if (l.key == "finetune_epochs") scn.finetune_epochs = as_count();
      else if (l.key == "boundary_epochs") scn.boundary_epochs = as_count();
      else fail(file, l.number, "unknown unlearn key '" + l.key + "'");
    } else if (l.section == "methods") {
      if (l.key == "list") scn.methods = split_list(l.value);
      else fail(file, l.number, "unknown methods key '" + l.key + "'");
    } else if (l.section == "audit") {
      bool known = false;
      try {
        known = set_audit_config_key(scn.audit, l.key, l.value);
      } catch (const std::exception& e) {
        fail(file, l.number, e.what());
      }
      if (!known) fail(file, l.number, "unknown audit key '" + l.key + "'");
    } else {
      fail(file, l.number, "unknown section '" + l.section + "'");
    }
  }

  if (!saw_forget_target)
    throw std::runtime_error("scenario " + file.string() + ": forget block declares no target");
  if (forget_kind_sample && !scn.forget_by_fraction &&
      scn.forget.kind != ForgetSpec::Kind::SampleLevel)
    throw std::runtime_error("scenario " + file.string() + ": forget kind/target mismatch");
  if (!forget_kind_sample && (scn.forget_by_fraction ||
                              (saw_forget_target && scn.forget.kind != ForgetSpec::Kind::ClassLevel)))
    throw std::runtime_error("scenario " + file.string() + ": forget kind/target mismatch");

  scn.validate();
  return scn;
}

ScenarioResult run_scenario(const Scenario& scenario, const std::filesystem::path& out_dir) {
  scenario.validate();
  std::filesystem::create_directories(out_dir);

  const EmbeddingSet data = generate_gaussian_mixture(scenario.dataset);
  const ForgetSpec spec = scenario.resolve_forget(data.size());
  spec.validate(data.labels);
  const sandbox::VflSpec vfl = scenario.vfl_spec();

  const bool wants_amnesiac =
      std::find(scenario.methods.begin(), scenario.methods.end(), "amnesiac") !=
      scenario.methods.end();

  sandbox::UpdateLedger ledger;
  const sandbox::TrainedModel original =
      wants_amnesiac ? sandbox::train_with_ledger(data, vfl, scenario.train, spec, ledger)
                     : sandbox::train(data, vfl, scenario.train);

  sandbox::TrainConfig retrain_cfg = scenario.train;
  retrain_cfg.seed = Rng::mix(scenario.train.seed, kRetrainBaselineSalt);
  const sandbox::TrainedModel retrained = sandbox::unlearn_retrain(data, spec, vfl, retrain_cfg);

  const sandbox::TapOutput taps_original = sandbox::forward_taps(original, data, ModelTag::Original);
  const sandbox::TapOutput taps_retrained =
      sandbox::forward_taps(retrained, data, ModelTag::Retrained);

  const std::filesystem::path exports = out_dir / "exports";
  export_model(taps_original.taps, taps_original.predictions,
               exports / "original" / std::to_string(scenario.train.seed));
  export_model(taps_retrained.taps, taps_retrained.predictions,
               exports / "retrained" / std::to_string(retrain_cfg.seed));

  const std::filesystem::path reports_dir = out_dir / "reports";
  std::filesystem::create_directories(reports_dir);
  export_pca(taps_original.taps.at(scenario.audit.primary_layer), spec,
             out_dir / "pca_original.csv");
  export_pca(taps_retrained.taps.at(scenario.audit.primary_layer), spec,
             out_dir / "pca_retrained.csv");

  ScenarioResult result;
  for (const auto& method : scenario.methods) {
    sandbox::TrainedModel unlearned;
    std::uint64_t model_seed = scenario.train.seed;
    if (method == "retrain") {
      sandbox::TrainConfig cfg = scenario.train;
      cfg.seed = Rng::mix(scenario.train.seed, kRetrainMethodSalt);
      model_seed = cfg.seed;
      unlearned = sandbox::unlearn_retrain(data, spec, vfl, cfg);
    } else if (method == "finetune") {
      unlearned = sandbox::unlearn_finetune(original, data, spec, scenario.finetune_epochs);
    } else if (method == "boundary") {
      Rng rng(Rng::mix(scenario.train.seed, kBoundarySalt));
      unlearned = sandbox::unlearn_boundary_lite(original, data, spec, scenario.boundary_epochs, rng);
    } else {  // amnesiac (validated earlier)
      unlearned = sandbox::unlearn_amnesiac_lite(original, ledger);
    }

    const sandbox::TapOutput taps_unlearned =
        sandbox::forward_taps(unlearned, data, ModelTag::Unlearned);
    export_model(taps_unlearned.taps, taps_unlearned.predictions,
                 exports / method / std::to_string(model_seed));

    ModelTriple triple;
    triple.original = taps_original.taps;
    triple.unlearned = taps_unlearned.taps;
    triple.retrained = taps_retrained.taps;
    triple.predictions_original = taps_original.predictions;
    triple.predictions_unlearned = taps_unlearned.predictions;
    triple.predictions_retrained = taps_retrained.predictions;

    AuditConfig config = scenario.audit;
    config.method = method;
    config.dataset = scenario.name;
    AuditReport report = run_audit(triple, spec, config);

    const std::filesystem::path method_dir = reports_dir / method;
    emit_report(report, method_dir);
    export_pca(taps_unlearned.taps.at(config.primary_layer), spec,
               method_dir / "pca_unlearned.csv");

    result.report_dirs[method] = method_dir;
    result.reports.push_back(std::move(report));
  }

  result.scatter_csv = out_dir / "scatter.csv";
  emit_scatter(result.reports, result.scatter_csv);
  return result;
}

}  // namespace mirage
