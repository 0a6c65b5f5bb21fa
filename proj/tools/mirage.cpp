// mirage: representation-level unlearning audit toolkit.
//
// Subcommands:
//   audit    run the diagnostic battery over exported embedding triples
//   sandbox  train/unlearn/audit end to end from a scenario file
//   scatter  aggregate reports into the y_u vs delta-LPR scatter CSV
//   inspect  print mef-1 export metadata and summary statistics
//
// Exit codes: 0 success (audit: certification passed), 1 execution error,
// 2 certification failed.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "mirage/audit.hpp"
#include "mirage/embedding.hpp"
#include "mirage/scenario.hpp"

namespace fs = std::filesystem;

namespace {

struct LoadedModel {
  std::map<std::string, mirage::EmbeddingSet> layers;
  std::optional<mirage::LabelVector> predictions;
};

LoadedModel load_model_dir(const fs::path& dir) {
  if (!fs::is_directory(dir))
    throw std::runtime_error("not a directory: " + dir.string());

  LoadedModel model;
  std::vector<fs::path> layer_dirs;
  for (const auto& entry : fs::directory_iterator(dir))
    if (entry.is_directory() && fs::exists(entry.path() / "meta"))
      layer_dirs.push_back(entry.path());
  std::sort(layer_dirs.begin(), layer_dirs.end());
  if (layer_dirs.empty())
    throw std::runtime_error("no mef-1 layer subdirectories under " + dir.string());

  for (const auto& layer_dir : layer_dirs) {
    mirage::EmbeddingSet set = mirage::read_embedding_set(layer_dir);
    model.layers.emplace(layer_dir.filename().string(), std::move(set));
  }

  const fs::path pred_file = dir / "predictions";
  if (fs::exists(pred_file)) {
    std::ifstream in(pred_file, std::ios::binary);
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (bytes.size() % 4 != 0)
      throw std::runtime_error("predictions file has odd length: " + pred_file.string());
    mirage::LabelVector preds(bytes.size() / 4);
    const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
    for (std::size_t i = 0; i < preds.size(); ++i)
      preds[i] = static_cast<std::uint32_t>(p[4 * i]) |
                 (static_cast<std::uint32_t>(p[4 * i + 1]) << 8) |
                 (static_cast<std::uint32_t>(p[4 * i + 2]) << 16) |
                 (static_cast<std::uint32_t>(p[4 * i + 3]) << 24);
    model.predictions = std::move(preds);
  }
  return model;
}

// '*' matches any run of characters within a single path component.
bool wildcard_match(const std::string& pattern, const std::string& text) {
  std::size_t p = 0, t = 0, star = std::string::npos, mark = 0;
  while (t < text.size()) {
    if (p < pattern.size() && (pattern[p] == text[t])) {
      ++p;
      ++t;
    } else if (p < pattern.size() && pattern[p] == '*') {
      star = p++;
      mark = t;
    } else if (star != std::string::npos) {
      p = star + 1;
      t = ++mark;
    } else {
      return false;
    }
  }
  while (p < pattern.size() && pattern[p] == '*') ++p;
  return p == pattern.size();
}

void glob_walk(const fs::path& base, const std::vector<std::string>& parts, std::size_t depth,
               std::vector<fs::path>& out) {
  if (depth == parts.size()) {
    if (fs::exists(base)) out.push_back(base);
    return;
  }
  const std::string& part = parts[depth];
  if (part.find('*') == std::string::npos) {
    glob_walk(base / part, parts, depth + 1, out);
    return;
  }
  if (!fs::is_directory(base)) return;
  std::vector<fs::path> matches;
  for (const auto& entry : fs::directory_iterator(base))
    if (wildcard_match(part, entry.path().filename().string())) matches.push_back(entry.path());
  std::sort(matches.begin(), matches.end());
  for (const auto& m : matches) glob_walk(m, parts, depth + 1, out);
}

std::vector<fs::path> expand_glob(const std::string& pattern) {
  if (pattern.find('*') == std::string::npos) return {fs::path(pattern)};
  fs::path p(pattern);
  std::vector<std::string> parts;
  for (const auto& comp : p.relative_path()) parts.push_back(comp.string());
  const fs::path base = p.is_absolute() ? p.root_path() : fs::path(".");
  std::vector<fs::path> out;
  glob_walk(base, parts, 0, out);
  return out;
}

int cmd_audit(const std::string& original_dir, const std::string& unlearned_dir,
              const std::string& retrained_dir, const std::string& forget_file,
              const std::string& config_file, const std::string& out_dir) {
  mirage::AuditConfig config = config_file.empty() ? mirage::AuditConfig::defaults()
                                                   : mirage::parse_audit_config(config_file);

  LoadedModel original = load_model_dir(original_dir);
  LoadedModel unlearned = load_model_dir(unlearned_dir);
  LoadedModel retrained = load_model_dir(retrained_dir);

  mirage::ModelTriple triple;
  triple.original = std::move(original.layers);
  triple.unlearned = std::move(unlearned.layers);
  triple.retrained = std::move(retrained.layers);
  triple.predictions_original = std::move(original.predictions);
  triple.predictions_unlearned = std::move(unlearned.predictions);
  triple.predictions_retrained = std::move(retrained.predictions);

  // Audit whatever layers the exports actually carry, unless the config
  // narrowed the list explicitly.
  {
    std::vector<std::string> available;
    for (const auto& [tag, set] : triple.original) available.push_back(tag);
    std::vector<std::string> wanted;
    for (const auto& layer : config.layers)
      if (std::find(available.begin(), available.end(), layer) != available.end())
        wanted.push_back(layer);
    if (wanted.empty()) wanted = available;
    config.layers = wanted;
    if (std::find(wanted.begin(), wanted.end(), config.primary_layer) == wanted.end())
      config.primary_layer = wanted.back();
  }

  const mirage::ForgetSpec spec = mirage::read_forget_spec(forget_file);
  const mirage::AuditReport report = mirage::run_audit(triple, spec, config);
  mirage::emit_report(report, out_dir);

  std::cout << "report: " << (fs::path(out_dir) / "report.txt").string() << "\n";
  std::cout << "delta_lpr " << mirage::format_fixed(report.delta_lpr) << "\n";
  for (const auto& v : report.verdicts)
    std::cout << "verdict." << v.diagnostic << " " << (v.pass ? "pass" : "fail") << "\n";
  std::cout << "certified " << (report.certified ? 1 : 0) << "\n";
  return report.certified ? 0 : 2;
}

int cmd_sandbox(const std::string& scenario_file, const std::string& out_dir) {
  const mirage::Scenario scenario = mirage::parse_scenario(scenario_file);
  const mirage::ScenarioResult result = mirage::run_scenario(scenario, out_dir);
  for (const auto& report : result.reports)
    std::cout << report.method << ": delta_lpr " << mirage::format_fixed(report.delta_lpr)
              << " certified " << (report.certified ? 1 : 0) << "\n";
  std::cout << "scatter: " << result.scatter_csv.string() << "\n";
  return 0;
}

int cmd_scatter(const std::vector<std::string>& report_patterns, const std::string& out_file) {
  std::vector<mirage::AuditReport> reports;
  for (const auto& pattern : report_patterns) {
    const auto paths = expand_glob(pattern);
    if (paths.empty())
      throw std::runtime_error("no reports match '" + pattern + "'");
    for (const auto& path : paths) reports.push_back(mirage::parse_report(path));
  }
  mirage::emit_scatter(reports, out_file);
  std::cout << "scatter: " << out_file << " (" << reports.size() << " reports)\n";
  return 0;
}

void inspect_one(const fs::path& dir) {
  const mirage::EmbeddingSet set = mirage::read_embedding_set(dir);
  std::cout << dir.string() << ": rows=" << set.size() << " cols=" << set.dim()
            << " layer_tag=" << set.layer_tag << " model_tag=" << to_string(set.model_tag) << "\n";

  std::map<std::uint32_t, std::size_t> counts;
  for (auto l : set.labels) ++counts[l];
  std::cout << "  labels:";
  for (const auto& [label, count] : counts) std::cout << " " << label << "x" << count;
  std::cout << "\n";

  double mean = 0.0;
  for (double v : set.features.data()) mean += v;
  mean /= static_cast<double>(set.features.data().size());
  double var = 0.0;
  for (double v : set.features.data()) var += (v - mean) * (v - mean);
  var /= static_cast<double>(set.features.data().size());
  std::cout << "  feature mean " << mirage::format_fixed(mean) << " std "
            << mirage::format_fixed(std::sqrt(var)) << "\n";
}

int cmd_inspect(const std::string& dir) {
  const fs::path root(dir);
  if (fs::exists(root / "meta")) {
    inspect_one(root);
    return 0;
  }
  std::vector<fs::path> found;
  for (const auto& entry : fs::recursive_directory_iterator(root))
    if (entry.is_regular_file() && entry.path().filename() == "meta")
      found.push_back(entry.path().parent_path());
  if (found.empty()) throw std::runtime_error("no mef-1 exports under " + dir);
  std::sort(found.begin(), found.end());
  for (const auto& p : found) inspect_one(p);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"mirage: representation-level unlearning audit toolkit"};
  app.require_subcommand(1);

  std::string original_dir, unlearned_dir, retrained_dir, forget_file, config_file, out_dir;
  auto* audit = app.add_subcommand("audit", "audit an exported model triple");
  audit->add_option("--original", original_dir, "mef-1 export of the original model")->required();
  audit->add_option("--unlearned", unlearned_dir, "mef-1 export of the unlearned model")->required();
  audit->add_option("--retrained", retrained_dir, "mef-1 export of the retrained baseline")->required();
  audit->add_option("--forget", forget_file, "forget spec file (class/sample ids)")->required();
  audit->add_option("--config", config_file, "audit config file");
  audit->add_option("--out", out_dir, "output directory for report + CSV tables")->required();

  std::string scenario_file, sandbox_out;
  auto* sandbox = app.add_subcommand("sandbox", "run a training/unlearning scenario");
  sandbox->add_option("--scenario", scenario_file, "scenario-1 file")->required();
  sandbox->add_option("--out", sandbox_out, "output directory")->required();

  std::vector<std::string> report_patterns;
  std::string scatter_out;
  auto* scatter = app.add_subcommand("scatter", "aggregate reports into scatter CSV");
  scatter->add_option("--reports", report_patterns, "report files (glob patterns allowed)")
      ->required()
      ->expected(-1);
  scatter->add_option("--out", scatter_out, "output CSV file")->required();

  std::string inspect_dir;
  auto* inspect = app.add_subcommand("inspect", "print mef-1 export metadata");
  inspect->add_option("--dir", inspect_dir, "export directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    // --help and friends exit 0; every usage error is exit 1
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  try {
    if (audit->parsed())
      return cmd_audit(original_dir, unlearned_dir, retrained_dir, forget_file, config_file,
                       out_dir);
    if (sandbox->parsed()) return cmd_sandbox(scenario_file, sandbox_out);
    if (scatter->parsed()) return cmd_scatter(report_patterns, scatter_out);
    if (inspect->parsed()) return cmd_inspect(inspect_dir);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
