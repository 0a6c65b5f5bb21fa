// Integration tests for the CLI surface: exit-code contract, file outputs,
// and cross-checks between emitted artifacts. The binary path arrives via
// MIRAGE_CLI; shipped scenarios via MIRAGE_SCENARIOS.

#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#include "mirage/audit.hpp"
#include "mirage/embedding.hpp"

using namespace mirage;
namespace fs = std::filesystem;

namespace {

std::string cli_path() {
  const char* env = std::getenv("MIRAGE_CLI");
  REQUIRE_MESSAGE(env != nullptr, "MIRAGE_CLI must point at the built binary");
  return env;
}

std::string scenarios_path() {
  const char* env = std::getenv("MIRAGE_SCENARIOS");
  REQUIRE_MESSAGE(env != nullptr, "MIRAGE_SCENARIOS must point at the scenario directory");
  return env;
}

fs::path temp_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "mirage_cli_tests" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

int run(const std::string& args, const fs::path& stdout_file = {}) {
  std::string cmd = cli_path() + " " + args;
  if (!stdout_file.empty()) cmd += " >" + stdout_file.string();
  else cmd += " >/dev/null";
  cmd += " 2>/dev/null";
  const int status = std::system(cmd.c_str());
  REQUIRE(status != -1);
  return WEXITSTATUS(status);
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

// A model export with one penultimate layer; class signal optional.
void write_export(const fs::path& dir, bool with_signal, std::uint64_t seed, ModelTag tag) {
  SyntheticSpec spec;
  spec.n_per_class = 200;
  spec.n_classes = 2;
  spec.dim = 8;
  spec.class_mean_scale = with_signal ? 3.0 : 0.0001;
  spec.noise_sigma = 1.0;
  spec.seed = seed;
  EmbeddingSet set = generate_gaussian_mixture(spec);
  set.layer_tag = "penultimate";
  set.model_tag = tag;
  write_embedding_set(set, dir / "penultimate");
}

}  // namespace

TEST_CASE("audit of three identical exports certifies with exit 0") {
  const fs::path dir = temp_dir("identical");
  write_export(dir / "original", true, 3, ModelTag::Original);
  write_export(dir / "unlearned", true, 3, ModelTag::Unlearned);
  write_export(dir / "retrained", true, 3, ModelTag::Retrained);
  write_forget_spec(ForgetSpec::for_classes({1}), dir / "forget.txt");

  const int code = run("audit --original " + (dir / "original").string() + " --unlearned " +
                       (dir / "unlearned").string() + " --retrained " +
                       (dir / "retrained").string() + " --forget " + (dir / "forget.txt").string() +
                       " --out " + (dir / "out").string());
  CHECK(code == 0);
  CHECK(fs::exists(dir / "out" / "report.txt"));
  CHECK(fs::exists(dir / "out" / "diagnostics.csv"));

  const AuditReport report = parse_report(dir / "out" / "report.txt");
  CHECK(report.certified);
  CHECK(report.delta_lpr == 0.0);
}

TEST_CASE("audit flags residual structure with exit 2") {
  const fs::path dir = temp_dir("illusive");
  write_export(dir / "original", true, 3, ModelTag::Original);
  write_export(dir / "unlearned", true, 3, ModelTag::Unlearned);   // class signal intact
  write_export(dir / "retrained", false, 4, ModelTag::Retrained);  // signal erased
  write_forget_spec(ForgetSpec::for_classes({1}), dir / "forget.txt");

  const int code = run("audit --original " + (dir / "original").string() + " --unlearned " +
                       (dir / "unlearned").string() + " --retrained " +
                       (dir / "retrained").string() + " --forget " + (dir / "forget.txt").string() +
                       " --out " + (dir / "out").string());
  CHECK(code == 2);
  const AuditReport report = parse_report(dir / "out" / "report.txt");
  CHECK_FALSE(report.certified);
  CHECK(report.delta_lpr > 0.1);
}

TEST_CASE("usage errors exit 1") {
  const fs::path dir = temp_dir("usage");
  CHECK(run("audit --original x --unlearned y --forget z --out w") == 1);  // missing --retrained
  CHECK(run("audit --bogus-flag 1") == 1);                                 // unknown flag
  CHECK(run("nonexistent-subcommand") == 1);
  CHECK(run("") == 1);  // subcommand required
  CHECK(run("--help") == 0);
}

TEST_CASE("audit reports execution errors with exit 1") {
  const fs::path dir = temp_dir("badinput");
  write_forget_spec(ForgetSpec::for_classes({1}), dir / "forget.txt");
  CHECK(run("audit --original /nonexistent --unlearned /nonexistent --retrained /nonexistent "
            "--forget " + (dir / "forget.txt").string() + " --out " + (dir / "out").string()) == 1);
}

TEST_CASE("sandbox runs the minimal scenario and writes reports") {
  const fs::path dir = temp_dir("sandbox_min");
  const int code = run("sandbox --scenario " + scenarios_path() + "/minimal.scn --out " +
                       (dir / "out").string());
  CHECK(code == 0);
  CHECK(fs::exists(dir / "out" / "reports" / "retrain" / "report.txt"));
  CHECK(fs::exists(dir / "out" / "scatter.csv"));
  CHECK(fs::exists(dir / "out" / "pca_original.csv"));

  SUBCASE("scatter rows agree with the report values") {
    const AuditReport report = parse_report(dir / "out" / "reports" / "retrain" / "report.txt");
    const std::string scatter = slurp(dir / "out" / "scatter.csv");
    CHECK(scatter.find("retrain,minimal,") != std::string::npos);
    CHECK(scatter.find(format_fixed(report.delta_lpr)) != std::string::npos);
  }
}

TEST_CASE("sandbox rejects malformed scenarios with exit 1") {
  const fs::path dir = temp_dir("sandbox_bad");
  std::ofstream(dir / "bad.scn") << "schema scenario-1\n[dataset]\nn_per_class notanumber\n";
  CHECK(run("sandbox --scenario " + (dir / "bad.scn").string() + " --out " +
            (dir / "out").string()) == 1);
}

TEST_CASE("inspect prints shape and tags") {
  const fs::path dir = temp_dir("inspect");
  SyntheticSpec spec;
  spec.n_per_class = 50;
  spec.n_classes = 2;
  spec.dim = 8;
  spec.seed = 77;
  EmbeddingSet set = generate_gaussian_mixture(spec);
  set.layer_tag = "mid";
  write_embedding_set(set, dir / "export");

  const fs::path captured = dir / "stdout.txt";
  CHECK(run("inspect --dir " + (dir / "export").string(), captured) == 0);
  const std::string text = slurp(captured);
  CHECK(text.find("rows=100") != std::string::npos);
  CHECK(text.find("cols=8") != std::string::npos);
  CHECK(text.find("layer_tag=mid") != std::string::npos);
}

TEST_CASE("scatter aggregates report files by glob") {
  const fs::path dir = temp_dir("scatter_glob");
  const int sandbox_code = run("sandbox --scenario " + scenarios_path() + "/minimal.scn --out " +
                               (dir / "out").string());
  REQUIRE(sandbox_code == 0);

  const fs::path scatter = dir / "combined.csv";
  const int code =
      run("scatter --reports '" + (dir / "out" / "reports" / "*" / "report.txt").string() +
          "' --out " + scatter.string());
  CHECK(code == 0);
  const std::string text = slurp(scatter);
  CHECK(text.rfind("method,dataset,y_u,delta_lpr\n", 0) == 0);
  CHECK(text.find("retrain,minimal,") != std::string::npos);

  CHECK(run("scatter --reports /nonexistent/*.txt --out " + (dir / "x.csv").string()) == 1);
}
