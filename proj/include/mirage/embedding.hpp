#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <utility>

#include "mirage/forget.hpp"
#include "mirage/matrix.hpp"
#include "mirage/rng.hpp"

namespace mirage {

enum class ModelTag { Original, Unlearned, Retrained, Other };

std::string to_string(ModelTag tag);
ModelTag model_tag_from_string(const std::string& s);

// An n x d feature matrix with aligned labels. The universal currency of all
// diagnostics: every probe, CKA and separability computation consumes one or
// more of these.
struct EmbeddingSet {
  Matrix features;                              // n x d, widened to f64 in memory
  LabelVector labels;                           // length n
  std::string layer_tag;                        // e.g. "early", "mid", "penultimate"
  ModelTag model_tag = ModelTag::Other;
  std::map<std::string, std::string> source_meta;

  std::size_t size() const { return features.rows(); }
  std::size_t dim() const { return features.cols(); }
  void validate() const;
};

// Synthetic isotropic Gaussian mixture. Class means sit on scaled coordinate
// axes: mean of class c is class_mean_scale * (1 + c/dim) * e_{c mod dim},
// so pairwise mean distances (and therefore SNR) are known in closed form.
struct SyntheticSpec {
  std::size_t n_per_class = 100;
  std::size_t n_classes = 2;
  std::size_t dim = 2;
  double class_mean_scale = 1.0;
  double noise_sigma = 1.0;
  std::uint64_t seed = 0;

  void validate() const;
  std::vector<double> class_mean(std::uint32_t c) const;
};

// mef-1 exchange format: a directory holding exactly three files.
//   meta       textual "key value" lines: format, rows, cols, layer_tag,
//              model_tag, encoding (always f32le-rowmajor), plus one
//              "meta.<key> <value>" line per source_meta entry
//   features   rows*cols little-endian 32-bit floats, row-major
//   labels     rows little-endian unsigned 32-bit integers
void write_embedding_set(const EmbeddingSet& set, const std::filesystem::path& dir);
EmbeddingSet read_embedding_set(const std::filesystem::path& dir);

// CSV fallback: header "label,f0,f1,...", one sample per row.
EmbeddingSet read_csv_embeddings(const std::filesystem::path& file,
                                 const std::string& layer_tag = "penultimate",
                                 ModelTag model_tag = ModelTag::Other);

EmbeddingSet generate_gaussian_mixture(const SyntheticSpec& spec);

// Disjoint, exhaustive partition into (forgotten, retained), preserving row
// order within each part. Errors if either side would be empty.
std::pair<EmbeddingSet, EmbeddingSet> split_forget(const EmbeddingSet& set,
                                                   const ForgetSpec& spec);

// Row indices selected / not selected by the spec, in ascending order.
std::pair<std::vector<std::size_t>, std::vector<std::size_t>> forget_partition(
    const LabelVector& labels, const ForgetSpec& spec);

}  // namespace mirage
