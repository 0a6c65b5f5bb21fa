#include "mirage/audit.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <ctime>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "mirage/geometry.hpp"
#include "mirage/parallel.hpp"
#include "mirage/stats.hpp"

namespace mirage {

namespace {

constexpr std::uint64_t kCkaSalt = 0x636B6173616C7431ULL;
constexpr std::uint64_t kSepSalt = 0x73657073616C7431ULL;

struct Stat {
  double mean = 0.0;
  double stddev = 0.0;
};

Stat mean_std(const std::vector<double>& v) {
  Stat s;
  if (v.empty()) return s;
  for (double x : v) s.mean += x;
  s.mean /= static_cast<double>(v.size());
  if (v.size() > 1) {
    double acc = 0.0;
    for (double x : v) acc += (x - s.mean) * (x - s.mean);
    s.stddev = std::sqrt(acc / static_cast<double>(v.size() - 1));
  }
  return s;
}

template <typename Fn>
auto stage(const char* name, Fn&& fn) {
  try {
    return fn();
  } catch (const std::exception& e) {
    throw std::runtime_error(std::string("audit stage ") + name + ": " + e.what());
  }
}

std::string utc_timestamp() {
  const std::time_t now = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

const std::map<std::string, EmbeddingSet>& model_layers(const ModelTriple& t, int model) {
  switch (model) {
    case 0: return t.original;
    case 1: return t.unlearned;
    default: return t.retrained;
  }
}

const char* model_name(int model) {
  switch (model) {
    case 0: return "original";
    case 1: return "unlearned";
    default: return "retrained";
  }
}

}  // namespace

void ModelTriple::validate() const {
  if (original.empty()) throw std::invalid_argument("model triple: no layers");
  auto keys = [](const std::map<std::string, EmbeddingSet>& m) {
    std::vector<std::string> k;
    for (const auto& [tag, set] : m) k.push_back(tag);
    return k;
  };
  if (keys(unlearned) != keys(original) || keys(retrained) != keys(original))
    throw std::invalid_argument("model triple: layer tag sets differ between models");

  const EmbeddingSet& ref = original.begin()->second;
  for (int model = 0; model < 3; ++model) {
    for (const auto& [tag, set] : model_layers(*this, model)) {
      set.validate();
      if (set.size() != ref.size())
        throw std::invalid_argument("model triple: row count differs at layer " + tag);
      if (set.labels != ref.labels)
        throw std::invalid_argument("model triple: label vectors differ at layer " + tag);
    }
  }
  for (const auto* preds : {&predictions_original, &predictions_unlearned, &predictions_retrained})
    if (preds->has_value() && (*preds)->size() != ref.size())
      throw std::invalid_argument("model triple: prediction length mismatch");
}

const LabelVector& ModelTriple::labels() const {
  return original.begin()->second.labels;
}

AuditConfig AuditConfig::defaults() {
  AuditConfig c;
  c.epsilon = {{"lpr", 0.03}, {"cka", 0.02}, {"separability", 0.5}};
  c.seeds = {1, 2, 3, 4, 5};
  c.layers = {"early", "mid", "penultimate"};
  return c;
}

void AuditConfig::validate() const {
  probe.validate();
  if (seeds.empty()) throw std::invalid_argument("audit config: seeds must be nonempty");
  if (layers.empty()) throw std::invalid_argument("audit config: layers must be nonempty");
  if (std::find(layers.begin(), layers.end(), primary_layer) == layers.end())
    throw std::invalid_argument("audit config: primary layer '" + primary_layer +
                                "' missing from layers list");
  for (const auto& [name, eps] : epsilon)
    if (!(eps >= 0.0))
      throw std::invalid_argument("audit config: epsilon for '" + name + "' must be >= 0");
  if (cka_sample_cap < 2) throw std::invalid_argument("audit config: cka_sample_cap must be >= 2");
}

std::pair<double, double> output_metrics(const LabelVector& labels, const LabelVector& predictions,
                                         const ForgetSpec& spec) {
  if (labels.size() != predictions.size())
    throw std::invalid_argument("output_metrics: label/prediction length mismatch");
  auto [fidx, ridx] = forget_partition(labels, spec);
  if (fidx.empty() || ridx.empty())
    throw std::invalid_argument("output_metrics: empty forgotten or retained partition");

  auto acc_over = [&](const std::vector<std::size_t>& idx) {
    std::size_t correct = 0;
    for (std::size_t i : idx)
      if (predictions[i] == labels[i]) ++correct;
    return static_cast<double>(correct) / static_cast<double>(idx.size());
  };
  return {acc_over(ridx), acc_over(fidx)};
}

double forgetting_gap(double lpr_unlearned, double lpr_retrained) {
  if (!(lpr_unlearned >= 0.0 && lpr_unlearned <= 1.0) ||
      !(lpr_retrained >= 0.0 && lpr_retrained <= 1.0))
    throw std::invalid_argument("forgetting_gap: inputs must be fractions in [0,1]");
  return lpr_unlearned - lpr_retrained;
}

namespace {

// LPR per requested (model, layer_index) pair and seed, computed as
// independent tasks. grid[model][layer_index] is empty when not requested.
std::vector<std::vector<std::vector<double>>> lpr_grid(
    const ModelTriple& triple, const ForgetSpec& spec, const AuditConfig& config,
    const std::vector<std::pair<int, std::size_t>>& pairs) {
  const auto& layers = config.layers;
  const auto& seeds = config.seeds;

  struct Task {
    int model;
    std::size_t layer;
    std::size_t seed;
  };
  std::vector<Task> tasks;
  for (const auto& [m, l] : pairs) {
    if (!model_layers(triple, m).count(layers[l]))
      throw std::invalid_argument(std::string("layer '") + layers[l] + "' missing from " +
                                  model_name(m) + " model");
    for (std::size_t s = 0; s < seeds.size(); ++s) tasks.push_back({m, l, s});
  }

  std::vector<std::vector<std::vector<double>>> grid(
      3, std::vector<std::vector<double>>(layers.size()));
  for (const auto& [m, l] : pairs) grid[m][l].assign(seeds.size(), 0.0);

  parallel_tasks(tasks.size(), [&](std::size_t t) {
    const Task& task = tasks[t];
    ProbeConfig pc = config.probe;
    pc.seed = seeds[task.seed];
    const EmbeddingSet& set = model_layers(triple, task.model).at(layers[task.layer]);
    grid[task.model][task.layer][task.seed] = lpr(set, spec, pc);
  });
  return grid;
}

}  // namespace

std::vector<std::pair<std::string, double>> layerwise_gaps(const ModelTriple& triple,
                                                           const ForgetSpec& spec,
                                                           const AuditConfig& config) {
  triple.validate();
  config.validate();
  std::vector<std::pair<int, std::size_t>> pairs;
  for (int m : {1, 2})
    for (std::size_t l = 0; l < config.layers.size(); ++l) pairs.emplace_back(m, l);
  const auto grid = lpr_grid(triple, spec, config, pairs);

  std::vector<std::pair<std::string, double>> gaps;
  for (std::size_t l = 0; l < config.layers.size(); ++l) {
    std::vector<double> deltas;
    for (std::size_t s = 0; s < config.seeds.size(); ++s)
      deltas.push_back(grid[1][l][s] - grid[2][l][s]);
    gaps.emplace_back(config.layers[l], mean_std(deltas).mean);
  }
  return gaps;
}

std::vector<Verdict> certify(const AuditReport& report,
                             const std::map<std::string, double>& epsilon) {
  auto eps_for = [&](const char* name) {
    auto it = epsilon.find(name);
    if (it == epsilon.end())
      throw std::invalid_argument(std::string("certify: no epsilon configured for computed "
                                              "diagnostic '") + name + "'");
    return it->second;
  };

  std::vector<Verdict> verdicts;
  {
    Verdict v;
    v.diagnostic = "lpr";
    v.difference = std::fabs(report.delta_lpr);
    v.threshold = eps_for("lpr");
    v.pass = v.difference <= v.threshold;
    verdicts.push_back(v);
  }
  {
    // CKA-to-retrained as the diagnostic: the retrained model scores 1 by
    // definition, so the gap is |CKA_R - 1|.
    Verdict v;
    v.diagnostic = "cka";
    v.difference = std::fabs(report.cka_unlearned_vs_retrained - 1.0);
    v.threshold = eps_for("cka");
    v.pass = v.difference <= v.threshold;
    verdicts.push_back(v);
  }
  {
    Verdict v;
    v.diagnostic = "separability";
    v.difference = std::fabs(report.unlearned.separability - report.retrained.separability);
    v.threshold = eps_for("separability") * std::fabs(report.retrained.separability);
    v.pass = v.difference <= v.threshold;
    verdicts.push_back(v);
  }
  return verdicts;
}

AuditReport run_audit(const ModelTriple& triple, const ForgetSpec& spec,
                      const AuditConfig& config) {
  stage("validate", [&] {
    triple.validate();
    config.validate();
    spec.validate(triple.labels());
    return 0;
  });

  AuditReport report;
  report.timestamp = utc_timestamp();
  report.method = config.method;
  report.dataset = config.dataset;
  report.primary_layer = config.primary_layer;
  report.layers = config.layers;
  report.seeds = config.seeds;
  report.probe = config.probe;
  report.cka_sample_cap = config.cka_sample_cap;
  report.epsilon = config.epsilon;

  const std::size_t primary_idx = static_cast<std::size_t>(
      std::find(config.layers.begin(), config.layers.end(), config.primary_layer) -
      config.layers.begin());

  // Probe recoverability: unlearned and retrained across every audited
  // layer, the original model at the primary layer.
  const auto grid = stage("lpr", [&] {
    std::vector<std::pair<int, std::size_t>> pairs;
    pairs.emplace_back(0, primary_idx);
    for (int m : {1, 2})
      for (std::size_t l = 0; l < config.layers.size(); ++l) pairs.emplace_back(m, l);
    return lpr_grid(triple, spec, config, pairs);
  });

  ModelDiagnostics* diags[3] = {&report.original, &report.unlearned, &report.retrained};
  for (int m = 0; m < 3; ++m) {
    for (std::size_t l = 0; l < config.layers.size(); ++l) {
      if (grid[m][l].empty()) continue;
      const Stat st = mean_std(grid[m][l]);
      diags[m]->lpr_by_layer[config.layers[l]] = LayerStat{st.mean, st.stddev};
    }
    diags[m]->lpr_mean = diags[m]->lpr_by_layer[config.primary_layer].mean;
    diags[m]->lpr_std = diags[m]->lpr_by_layer[config.primary_layer].stddev;
  }

  report.delta_lpr = forgetting_gap(report.unlearned.lpr_mean, report.retrained.lpr_mean);
  {
    std::vector<double> deltas;
    for (std::size_t s = 0; s < config.seeds.size(); ++s)
      deltas.push_back(grid[1][primary_idx][s] - grid[2][primary_idx][s]);
    report.delta_lpr_std = mean_std(deltas).stddev;
  }
  for (std::size_t l = 0; l < config.layers.size(); ++l) {
    std::vector<double> deltas;
    for (std::size_t s = 0; s < config.seeds.size(); ++s)
      deltas.push_back(grid[1][l][s] - grid[2][l][s]);
    const Stat st = mean_std(deltas);
    report.delta_lpr_per_layer.emplace_back(config.layers[l], LayerStat{st.mean, st.stddev});
  }

  // Structural alignment on the primary layer; each pair subsamples the same
  // seeded row indices.
  stage("cka", [&] {
    const EmbeddingSet& o = triple.original.at(config.primary_layer);
    const EmbeddingSet& u = triple.unlearned.at(config.primary_layer);
    const EmbeddingSet& r = triple.retrained.at(config.primary_layer);
    auto cka_pair = [&](const EmbeddingSet& a, const EmbeddingSet& b) {
      Rng rng(Rng::mix(config.seeds.front(), kCkaSalt));
      return linear_cka(a.features, b.features, config.cka_sample_cap, rng).value;
    };
    report.cka_unlearned_vs_original = cka_pair(u, o);
    report.cka_unlearned_vs_retrained = cka_pair(u, r);
    report.cka_original_vs_retrained = cka_pair(o, r);
    return 0;
  });

  // Geometric separation per model, plus the pooled-variance SNR plug-in
  // (sigma^2 = trace_sum / (2d), hence snr = 2 * d * score).
  stage("separability", [&] {
    const auto [fidx, ridx] = forget_partition(triple.labels(), spec);
    for (int m = 0; m < 3; ++m) {
      const EmbeddingSet& set = model_layers(triple, m).at(config.primary_layer);
      const Matrix forgotten = take_rows(set.features, fidx);
      const Matrix retained = take_rows(set.features, ridx);
      Rng rng(Rng::mix(config.seeds.front(), kSepSalt));
      const SeparabilityResult res = separability(forgotten, retained, rng);
      diags[m]->separability = res.score;
      diags[m]->snr_hat = 2.0 * static_cast<double>(set.dim()) * res.score;
      diags[m]->snr_bound = probe_accuracy_lower_bound(diags[m]->snr_hat);
    }
    return 0;
  });

  stage("output_metrics", [&] {
    const std::optional<LabelVector>* preds[3] = {&triple.predictions_original,
                                                  &triple.predictions_unlearned,
                                                  &triple.predictions_retrained};
    for (int m = 0; m < 3; ++m) {
      if (!preds[m]->has_value()) continue;
      const auto [acc_r, y_u] = output_metrics(triple.labels(), preds[m]->value(), spec);
      diags[m]->acc_r = acc_r;
      diags[m]->y_u = y_u;
    }
    return 0;
  });

  report.verdicts = stage("certify", [&] { return certify(report, config.epsilon); });
  report.certified = std::all_of(report.verdicts.begin(), report.verdicts.end(),
                                 [](const Verdict& v) { return v.pass; });
  return report;
}

std::string format_fixed(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::fixed, 6);
  if (ec != std::errc()) return "nan";
  return std::string(buf, ptr);
}

namespace {

void emit_report_text(const AuditReport& r, std::ostream& out) {
  out << "schema " << r.schema << "\n";
  out << "timestamp " << r.timestamp << "\n";
  out << "method " << r.method << "\n";
  out << "dataset " << r.dataset << "\n";
  out << "primary_layer " << r.primary_layer << "\n";
  out << "layers ";
  for (std::size_t i = 0; i < r.layers.size(); ++i)
    out << (i ? "," : "") << r.layers[i];
  out << "\n";
  out << "seeds ";
  for (std::size_t i = 0; i < r.seeds.size(); ++i)
    out << (i ? "," : "") << r.seeds[i];
  out << "\n";
  out << "probe_kind " << (r.probe.kind == ProbeConfig::Kind::Linear ? "linear" : "mlp") << "\n";
  out << "probe_reg_c " << format_fixed(r.probe.reg_c) << "\n";
  out << "probe_max_iters " << r.probe.max_iters << "\n";
  out << "probe_hidden_dim " << r.probe.hidden_dim << "\n";
  out << "probe_eval_fraction " << format_fixed(r.probe.eval_fraction) << "\n";
  out << "probe_balance " << (r.probe.balance ? 1 : 0) << "\n";
  out << "cka_sample_cap " << r.cka_sample_cap << "\n";
  for (const auto& [name, eps] : r.epsilon)
    out << "epsilon." << name << " " << format_fixed(eps) << "\n";

  const ModelDiagnostics* diags[3] = {&r.original, &r.unlearned, &r.retrained};
  const char* names[3] = {"original", "unlearned", "retrained"};
  for (int m = 0; m < 3; ++m) {
    if (diags[m]->acc_r)
      out << "acc_r." << names[m] << " " << format_fixed(*diags[m]->acc_r) << "\n";
    if (diags[m]->y_u)
      out << "y_u." << names[m] << " " << format_fixed(*diags[m]->y_u) << "\n";
  }
  for (int m = 0; m < 3; ++m) {
    out << "lpr_mean." << names[m] << " " << format_fixed(diags[m]->lpr_mean) << "\n";
    out << "lpr_std." << names[m] << " " << format_fixed(diags[m]->lpr_std) << "\n";
  }
  for (int m = 0; m < 3; ++m)
    for (const auto& layer : r.layers) {
      const auto it = diags[m]->lpr_by_layer.find(layer);
      if (it == diags[m]->lpr_by_layer.end()) continue;
      out << "lpr_layer." << names[m] << "." << layer << " " << format_fixed(it->second.mean)
          << "\n";
    }
  out << "delta_lpr " << format_fixed(r.delta_lpr) << "\n";
  out << "delta_lpr_std " << format_fixed(r.delta_lpr_std) << "\n";
  for (const auto& [layer, st] : r.delta_lpr_per_layer) {
    out << "delta_lpr_layer." << layer << " " << format_fixed(st.mean) << "\n";
    out << "delta_lpr_layer_std." << layer << " " << format_fixed(st.stddev) << "\n";
  }
  out << "cka_unlearned_vs_original " << format_fixed(r.cka_unlearned_vs_original) << "\n";
  out << "cka_unlearned_vs_retrained " << format_fixed(r.cka_unlearned_vs_retrained) << "\n";
  out << "cka_original_vs_retrained " << format_fixed(r.cka_original_vs_retrained) << "\n";
  for (int m = 0; m < 3; ++m)
    out << "separability." << names[m] << " " << format_fixed(diags[m]->separability) << "\n";
  for (int m = 0; m < 3; ++m)
    out << "snr." << names[m] << " " << format_fixed(diags[m]->snr_hat) << "\n";
  for (int m = 0; m < 3; ++m)
    out << "snr_bound." << names[m] << " " << format_fixed(diags[m]->snr_bound) << "\n";
  for (const auto& v : r.verdicts)
    out << "verdict." << v.diagnostic << " " << (v.pass ? "pass" : "fail") << " "
        << format_fixed(v.difference) << " " << format_fixed(v.threshold) << "\n";
  out << "certified " << (r.certified ? 1 : 0) << "\n";
}

void emit_csv_tables(const AuditReport& r, const std::filesystem::path& dir) {
  const ModelDiagnostics* diags[3] = {&r.original, &r.unlearned, &r.retrained};
  const char* names[3] = {"original", "unlearned", "retrained"};

  {
    std::ofstream out(dir / "outputs.csv");
    if (!out) throw std::runtime_error("emit_report: cannot write outputs.csv");
    out << "model,acc_r,y_u\n";
    for (int m = 0; m < 3; ++m) {
      if (!diags[m]->acc_r) continue;
      out << names[m] << "," << format_fixed(*diags[m]->acc_r) << ","
          << format_fixed(*diags[m]->y_u) << "\n";
    }
  }
  {
    std::ofstream out(dir / "diagnostics.csv");
    if (!out) throw std::runtime_error("emit_report: cannot write diagnostics.csv");
    out << "model,layer,lpr,delta_lpr,cka_o,separability\n";
    for (int m = 0; m < 3; ++m)
      for (const auto& layer : r.layers) {
        const auto it = diags[m]->lpr_by_layer.find(layer);
        if (it == diags[m]->lpr_by_layer.end()) continue;  // not audited at this layer
        const double lpr_v = it->second.mean;
        const double delta = lpr_v - diags[2]->lpr_by_layer.at(layer).mean;
        out << names[m] << "," << layer << "," << format_fixed(lpr_v) << ","
            << format_fixed(delta);
        if (layer == r.primary_layer) {
          const double cka_o = m == 0   ? 1.0
                               : m == 1 ? r.cka_unlearned_vs_original
                                        : r.cka_original_vs_retrained;
          out << "," << format_fixed(cka_o) << "," << format_fixed(diags[m]->separability);
        } else {
          out << ",,";
        }
        out << "\n";
      }
  }
}

}  // namespace

void emit_report(const AuditReport& report, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::ofstream out(dir / "report.txt");
  if (!out) throw std::runtime_error("emit_report: cannot write " + (dir / "report.txt").string());
  emit_report_text(report, out);
  if (!out) throw std::runtime_error("emit_report: write failed in " + dir.string());
  emit_csv_tables(report, dir);
}

AuditReport parse_report(const std::filesystem::path& report_file) {
  std::ifstream in(report_file);
  if (!in) throw std::runtime_error("parse_report: cannot open " + report_file.string());

  std::map<std::string, std::string> kv;
  std::vector<std::pair<std::string, std::string>> ordered;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto sp = line.find(' ');
    if (sp == std::string::npos)
      throw std::runtime_error("parse_report: malformed line '" + line + "'");
    kv[line.substr(0, sp)] = line.substr(sp + 1);
    ordered.emplace_back(line.substr(0, sp), line.substr(sp + 1));
  }

  auto need = [&](const std::string& key) -> const std::string& {
    auto it = kv.find(key);
    if (it == kv.end())
      throw std::runtime_error("parse_report: key '" + key + "' missing in " + report_file.string());
    return it->second;
  };
  auto num = [&](const std::string& key) { return std::stod(need(key)); };
  auto split_list = [](const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ','))
      if (!item.empty()) out.push_back(item);
    return out;
  };

  AuditReport r;
  r.schema = need("schema");
  if (r.schema != "mirage-report-1")
    throw std::runtime_error("parse_report: unknown schema '" + r.schema + "'");
  r.timestamp = need("timestamp");
  r.method = need("method");
  r.dataset = need("dataset");
  r.primary_layer = need("primary_layer");
  r.layers = split_list(need("layers"));
  for (const auto& s : split_list(need("seeds"))) r.seeds.push_back(std::stoull(s));
  r.probe.kind = need("probe_kind") == "mlp" ? ProbeConfig::Kind::Mlp : ProbeConfig::Kind::Linear;
  r.probe.reg_c = num("probe_reg_c");
  r.probe.max_iters = std::stoull(need("probe_max_iters"));
  r.probe.hidden_dim = std::stoull(need("probe_hidden_dim"));
  r.probe.eval_fraction = num("probe_eval_fraction");
  r.probe.balance = need("probe_balance") == "1";
  r.cka_sample_cap = std::stoull(need("cka_sample_cap"));

  ModelDiagnostics* diags[3] = {&r.original, &r.unlearned, &r.retrained};
  const char* names[3] = {"original", "unlearned", "retrained"};
  for (const auto& [key, value] : ordered) {
    if (key.rfind("epsilon.", 0) == 0) r.epsilon[key.substr(8)] = std::stod(value);
  }
  for (int m = 0; m < 3; ++m) {
    const std::string n = names[m];
    if (kv.count("acc_r." + n)) diags[m]->acc_r = num("acc_r." + n);
    if (kv.count("y_u." + n)) diags[m]->y_u = num("y_u." + n);
    diags[m]->lpr_mean = num("lpr_mean." + n);
    diags[m]->lpr_std = num("lpr_std." + n);
    for (const auto& layer : r.layers)
      if (kv.count("lpr_layer." + n + "." + layer))
        diags[m]->lpr_by_layer[layer] = LayerStat{num("lpr_layer." + n + "." + layer), 0.0};
    diags[m]->separability = num("separability." + n);
    diags[m]->snr_hat = num("snr." + n);
    diags[m]->snr_bound = num("snr_bound." + n);
  }
  r.delta_lpr = num("delta_lpr");
  r.delta_lpr_std = num("delta_lpr_std");
  for (const auto& layer : r.layers) {
    LayerStat st{num("delta_lpr_layer." + layer), num("delta_lpr_layer_std." + layer)};
    r.delta_lpr_per_layer.emplace_back(layer, st);
  }
  r.cka_unlearned_vs_original = num("cka_unlearned_vs_original");
  r.cka_unlearned_vs_retrained = num("cka_unlearned_vs_retrained");
  r.cka_original_vs_retrained = num("cka_original_vs_retrained");
  for (const auto& [key, value] : ordered) {
    if (key.rfind("verdict.", 0) != 0) continue;
    Verdict v;
    v.diagnostic = key.substr(8);
    std::stringstream ss(value);
    std::string pass;
    ss >> pass >> v.difference >> v.threshold;
    v.pass = pass == "pass";
    r.verdicts.push_back(v);
  }
  r.certified = need("certified") == "1";
  return r;
}

bool set_audit_config_key(AuditConfig& config, const std::string& key, const std::string& value) {
  auto split_list = [](const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ','))
      if (!item.empty()) out.push_back(item);
    return out;
  };

  if (key == "seeds") {
    config.seeds.clear();
    for (const auto& s : split_list(value)) config.seeds.push_back(std::stoull(s));
  } else if (key == "probe_kind") {
    if (value == "linear") config.probe.kind = ProbeConfig::Kind::Linear;
    else if (value == "mlp") config.probe.kind = ProbeConfig::Kind::Mlp;
    else throw std::invalid_argument("probe_kind must be 'linear' or 'mlp'");
  } else if (key == "probe_reg_c") {
    config.probe.reg_c = std::stod(value);
  } else if (key == "probe_max_iters") {
    config.probe.max_iters = std::stoull(value);
  } else if (key == "probe_hidden_dim") {
    config.probe.hidden_dim = std::stoull(value);
  } else if (key == "probe_eval_fraction") {
    config.probe.eval_fraction = std::stod(value);
  } else if (key == "probe_balance") {
    config.probe.balance = value == "1" || value == "on";
  } else if (key == "primary_layer") {
    config.primary_layer = value;
  } else if (key == "layers") {
    config.layers = split_list(value);
  } else if (key == "cka_sample_cap") {
    config.cka_sample_cap = std::stoull(value);
  } else if (key == "epsilon_lpr") {
    config.epsilon["lpr"] = std::stod(value);
  } else if (key == "epsilon_cka") {
    config.epsilon["cka"] = std::stod(value);
  } else if (key == "epsilon_separability") {
    config.epsilon["separability"] = std::stod(value);
  } else if (key == "method") {
    config.method = value;
  } else if (key == "dataset") {
    config.dataset = value;
  } else {
    return false;
  }
  return true;
}

AuditConfig parse_audit_config(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw std::runtime_error("audit config: cannot open " + file.string());
  AuditConfig config = AuditConfig::defaults();
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const std::size_t start = line.find_first_not_of(" \t");
    if (start == std::string::npos) continue;
    line = line.substr(start);
    if (line[0] == '#') continue;
    const std::size_t sp = line.find(' ');
    if (sp == std::string::npos)
      throw std::runtime_error("audit config " + file.string() + ":" + std::to_string(lineno) +
                               ": expected 'key value'");
    try {
      if (!set_audit_config_key(config, line.substr(0, sp), line.substr(sp + 1)))
        throw std::invalid_argument("unknown key '" + line.substr(0, sp) + "'");
    } catch (const std::exception& e) {
      throw std::runtime_error("audit config " + file.string() + ":" + std::to_string(lineno) +
                               ": " + e.what());
    }
  }
  config.validate();
  return config;
}

void emit_scatter(const std::vector<AuditReport>& reports, const std::filesystem::path& file) {
  std::vector<const AuditReport*> sorted;
  for (const auto& r : reports) sorted.push_back(&r);
  std::sort(sorted.begin(), sorted.end(), [](const AuditReport* a, const AuditReport* b) {
    return std::tie(a->method, a->dataset) < std::tie(b->method, b->dataset);
  });

  std::ofstream out(file);
  if (!out) throw std::runtime_error("emit_scatter: cannot open " + file.string());
  out << "method,dataset,y_u,delta_lpr\n";
  for (const AuditReport* r : sorted) {
    out << r->method << "," << r->dataset << ",";
    out << (r->unlearned.y_u ? format_fixed(*r->unlearned.y_u) : "nan");
    out << "," << format_fixed(r->delta_lpr) << "\n";
  }
  if (!out) throw std::runtime_error("emit_scatter: write failed for " + file.string());
}

}  // namespace mirage
