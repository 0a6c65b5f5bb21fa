#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "mirage/matrix.hpp"
#include "mirage/rng.hpp"

namespace mirage {

struct CkaResult {
  double value = 0.0;            // in [0,1] up to 1e-9 slack
  std::size_t n_samples_used = 0;
  std::uint64_t seed = 0;
};

struct SeparabilityResult {
  double score = 0.0;        // ||mu_u - mu_r||^2 / (tr Sigma_u + tr Sigma_r)
  double mean_gap_sq = 0.0;
  double trace_sum = 0.0;
  std::size_t n_u = 0;
  std::size_t n_r = 0;
};

// Linear CKA between two representations of the same inputs. Rows above
// sample_cap are subsampled (the same row indices from both sides); both
// matrices are column-centered before the norm ratio.
CkaResult linear_cka(const Matrix& x, const Matrix& y, std::size_t sample_cap, Rng& rng);

// Fisher-style separability between forgotten and retained embeddings.
// Retained rows are subsampled (without replacement) down to the forgotten
// count when larger; covariance traces use the n-1 denominator.
SeparabilityResult separability(const Matrix& forgotten, const Matrix& retained, Rng& rng);

double snr(const std::vector<double>& mu_u, const std::vector<double>& mu_r, double sigma);

// Phi(sqrt(snr)/2): accuracy floor of the optimal linear classifier on
// isotropic Gaussian class-conditionals.
double probe_accuracy_lower_bound(double snr);

// Projection onto the top two principal components (power iteration with
// deflation, tolerance 1e-9, fixed internal seed). Errors when the centered
// data has rank < 2.
Matrix pca2(const Matrix& features);

// "x,y,label,is_forgotten" rows for external plotting.
void write_pca2_csv(const Matrix& projection, const LabelVector& labels,
                    const std::vector<std::uint8_t>& is_forgotten,
                    const std::filesystem::path& file);

}  // namespace mirage
