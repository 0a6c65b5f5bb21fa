#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "mirage/audit.hpp"
#include "mirage/embedding.hpp"
#include "mirage/sandbox.hpp"

namespace mirage {

// A full sandbox experiment: dataset, vertical split, forget target, training
// hyperparameters, unlearning methods and audit settings. Parsed from the
// scenario-1 text format (sections of "key value" lines).
struct Scenario {
  std::string name = "synthetic";

  SyntheticSpec dataset;

  std::size_t parties = 2;
  std::vector<std::size_t> bottom_hidden;
  std::size_t bottom_out = 8;
  std::vector<std::size_t> top_hidden = {24, 16};

  // Forget target: explicit classes/indices, or a seeded random sample fraction.
  ForgetSpec forget;
  bool forget_by_fraction = false;
  double forget_fraction = 0.05;
  std::uint64_t forget_seed = 0;

  sandbox::TrainConfig train;
  std::size_t finetune_epochs = 5;
  std::size_t boundary_epochs = 5;

  std::vector<std::string> methods;  // retrain / finetune / boundary / amnesiac

  AuditConfig audit = AuditConfig::defaults();

  void validate() const;
  sandbox::VflSpec vfl_spec() const;
  ForgetSpec resolve_forget(std::size_t n_rows) const;
};

Scenario parse_scenario(const std::filesystem::path& file);

struct ScenarioResult {
  std::vector<AuditReport> reports;              // one per method, in method order
  std::filesystem::path scatter_csv;
  std::map<std::string, std::filesystem::path> report_dirs;
};

// Trains the original model, produces the retrained baseline and every
// requested method's unlearned model, exports all taps as mef-1 directories
// (<method>/<seed>/<layer_tag>/ plus a raw-u32 predictions file per model),
// audits each method against the baseline, and writes reports + scatter CSV.
ScenarioResult run_scenario(const Scenario& scenario, const std::filesystem::path& out_dir);

}  // namespace mirage
