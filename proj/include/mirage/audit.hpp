#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "mirage/embedding.hpp"
#include "mirage/forget.hpp"
#include "mirage/probe.hpp"

namespace mirage {

// Embedding exports of the original, unlearned and retrained models, keyed by
// layer tag; all three views describe the same rows.
struct ModelTriple {
  std::map<std::string, EmbeddingSet> original;
  std::map<std::string, EmbeddingSet> unlearned;
  std::map<std::string, EmbeddingSet> retrained;

  std::optional<LabelVector> predictions_original;
  std::optional<LabelVector> predictions_unlearned;
  std::optional<LabelVector> predictions_retrained;

  void validate() const;
  const LabelVector& labels() const;
};

struct AuditConfig {
  ProbeConfig probe;                       // per-seed probes override probe.seed
  std::size_t cka_sample_cap = 5000;
  std::map<std::string, double> epsilon;   // certification tolerances by diagnostic
  std::vector<std::uint64_t> seeds;
  std::vector<std::string> layers;         // must include primary_layer
  std::string primary_layer = "penultimate";
  std::string method = "unlearned";        // provenance tags carried into reports
  std::string dataset = "synthetic";

  // epsilon: lpr 0.03, cka 0.02; separability is relative (0.5 x retrained value).
  static AuditConfig defaults();
  void validate() const;
};

struct Verdict {
  std::string diagnostic;
  double difference = 0.0;
  double threshold = 0.0;
  bool pass = false;
};

struct LayerStat {
  double mean = 0.0;
  double stddev = 0.0;
};

struct ModelDiagnostics {
  std::map<std::string, LayerStat> lpr_by_layer;
  double lpr_mean = 0.0;    // primary layer
  double lpr_std = 0.0;
  double separability = 0.0;
  double snr_hat = 0.0;     // 2 * d * separability (pooled-variance plug-in)
  double snr_bound = 0.0;   // Phi(sqrt(snr_hat)/2)
  std::optional<double> acc_r;
  std::optional<double> y_u;
};

struct AuditReport {
  std::string schema = "mirage-report-1";
  std::string timestamp;
  std::string method;
  std::string dataset;
  std::string primary_layer;
  std::vector<std::string> layers;
  std::vector<std::uint64_t> seeds;
  ProbeConfig probe;
  std::size_t cka_sample_cap = 0;
  std::map<std::string, double> epsilon;

  ModelDiagnostics original;
  ModelDiagnostics unlearned;
  ModelDiagnostics retrained;

  double delta_lpr = 0.0;      // unlearned minus retrained, primary layer
  double delta_lpr_std = 0.0;  // stddev of the per-seed differences
  std::vector<std::pair<std::string, LayerStat>> delta_lpr_per_layer;

  double cka_unlearned_vs_original = 0.0;
  double cka_unlearned_vs_retrained = 0.0;
  double cka_original_vs_retrained = 0.0;

  std::vector<Verdict> verdicts;
  bool certified = false;
};

// Retained-set and forgotten-set prediction accuracy (Acc_r, y_u).
std::pair<double, double> output_metrics(const LabelVector& labels, const LabelVector& predictions,
                                         const ForgetSpec& spec);

// LPR(unlearned) - LPR(retrained); positive values mean residual structure.
double forgetting_gap(double lpr_unlearned, double lpr_retrained);

// Per-layer forgetting gaps, averaged over config.seeds.
std::vector<std::pair<std::string, double>> layerwise_gaps(const ModelTriple& triple,
                                                           const ForgetSpec& spec,
                                                           const AuditConfig& config);

// Pass/fail per diagnostic: |value_u - value_r| <= epsilon. The separability
// epsilon is a fraction of the retrained value; lpr and cka are absolute.
std::vector<Verdict> certify(const AuditReport& report,
                             const std::map<std::string, double>& epsilon);

AuditReport run_audit(const ModelTriple& triple, const ForgetSpec& spec,
                      const AuditConfig& config);

// Writes report.txt (schema mirage-report-1) plus outputs.csv/diagnostics.csv
// companions into dir.
void emit_report(const AuditReport& report, const std::filesystem::path& dir);
AuditReport parse_report(const std::filesystem::path& report_file);

// "method,dataset,y_u,delta_lpr" rows, sorted by (method, dataset).
void emit_scatter(const std::vector<AuditReport>& reports, const std::filesystem::path& file);

// Fixed-precision (6 decimal) locale-independent rendering used by all
// emitted artifacts.
std::string format_fixed(double v);

// Applies one "key value" audit setting (seeds, probe_*, layers,
// primary_layer, cka_sample_cap, epsilon_*, method, dataset). Returns false
// for unknown keys; throws on malformed values.
bool set_audit_config_key(AuditConfig& config, const std::string& key, const std::string& value);

// Audit config file: one "key value" per line, '#' comments allowed.
AuditConfig parse_audit_config(const std::filesystem::path& file);

}  // namespace mirage
