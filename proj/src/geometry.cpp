#include "mirage/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include "mirage/stats.hpp"

namespace mirage {

namespace {

// C = A^T B without forming transposes; result is A.cols x B.cols.
Matrix gram_cross(const Matrix& a, const Matrix& b) {
  Matrix c(a.cols(), b.cols(), 0.0);
  for (std::size_t i = 0; i < a.rows(); ++i) {
    const double* arow = a.row_ptr(i);
    const double* brow = b.row_ptr(i);
    for (std::size_t p = 0; p < a.cols(); ++p) {
      const double v = arow[p];
      double* crow = c.row_ptr(p);
      for (std::size_t q = 0; q < b.cols(); ++q) crow[q] += v * brow[q];
    }
  }
  return c;
}

std::vector<std::size_t> sorted_sample(Rng& rng, std::size_t n, std::size_t k) {
  auto idx = rng.sample_without_replacement(n, k);
  std::sort(idx.begin(), idx.end());
  return idx;
}

void mean_and_var_trace(const Matrix& m, std::vector<double>& mean, double& trace) {
  const std::size_t n = m.rows();
  const std::size_t d = m.cols();
  mean.assign(d, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const double* row = m.row_ptr(i);
    for (std::size_t j = 0; j < d; ++j) mean[j] += row[j];
  }
  for (double& v : mean) v /= static_cast<double>(n);
  trace = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double* row = m.row_ptr(i);
    for (std::size_t j = 0; j < d; ++j) {
      const double dlt = row[j] - mean[j];
      trace += dlt * dlt;
    }
  }
  trace /= static_cast<double>(n - 1);
}

}  // namespace

CkaResult linear_cka(const Matrix& x, const Matrix& y, std::size_t sample_cap, Rng& rng) {
  if (x.rows() != y.rows())
    throw std::invalid_argument("linear_cka: row counts differ");
  if (x.rows() < 2) throw std::invalid_argument("linear_cka: need at least 2 rows");
  if (sample_cap < 2) throw std::invalid_argument("linear_cka: sample_cap must be >= 2");

  CkaResult result;
  Matrix xs, ys;
  const Matrix* px = &x;
  const Matrix* py = &y;
  if (x.rows() > sample_cap) {
    const auto idx = sorted_sample(rng, x.rows(), sample_cap);
    xs = take_rows(x, idx);
    ys = take_rows(y, idx);
    px = &xs;
    py = &ys;
  }
  result.n_samples_used = px->rows();

  const Matrix xc = column_center(*px);
  const Matrix yc = column_center(*py);

  const double cross = frobenius_norm(gram_cross(yc, xc));
  const double nx = frobenius_norm(gram_cross(xc, xc));
  const double ny = frobenius_norm(gram_cross(yc, yc));
  if (nx == 0.0 || ny == 0.0)
    throw std::invalid_argument("linear_cka: undefined for constant (zero-variance) features");

  result.value = (cross * cross) / (nx * ny);
  return result;
}

SeparabilityResult separability(const Matrix& forgotten, const Matrix& retained, Rng& rng) {
  if (forgotten.rows() < 2 || retained.rows() < 2)
    throw std::invalid_argument("separability: both sets need at least 2 rows");
  if (forgotten.cols() != retained.cols())
    throw std::invalid_argument("separability: dimension mismatch");

  Matrix sub;
  const Matrix* pr = &retained;
  if (retained.rows() > forgotten.rows()) {
    const auto idx = sorted_sample(rng, retained.rows(), forgotten.rows());
    sub = take_rows(retained, idx);
    pr = &sub;
  }

  SeparabilityResult res;
  res.n_u = forgotten.rows();
  res.n_r = pr->rows();

  std::vector<double> mu_u, mu_r;
  double tr_u = 0.0, tr_r = 0.0;
  mean_and_var_trace(forgotten, mu_u, tr_u);
  mean_and_var_trace(*pr, mu_r, tr_r);

  double gap = 0.0;
  for (std::size_t j = 0; j < mu_u.size(); ++j) {
    const double d = mu_u[j] - mu_r[j];
    gap += d * d;
  }
  res.mean_gap_sq = gap;
  res.trace_sum = tr_u + tr_r;
  if (!(res.trace_sum > 0.0))
    throw std::invalid_argument("separability: undefined, covariance traces sum to zero");
  res.score = res.mean_gap_sq / res.trace_sum;
  return res;
}

double snr(const std::vector<double>& mu_u, const std::vector<double>& mu_r, double sigma) {
  if (mu_u.size() != mu_r.size()) throw std::invalid_argument("snr: dimension mismatch");
  if (!(sigma > 0.0)) throw std::invalid_argument("snr: sigma must be > 0");
  double gap = 0.0;
  for (std::size_t j = 0; j < mu_u.size(); ++j) {
    const double d = mu_u[j] - mu_r[j];
    gap += d * d;
  }
  return gap / (sigma * sigma);
}

double probe_accuracy_lower_bound(double snr_value) {
  if (!(snr_value >= 0.0)) throw std::invalid_argument("probe_accuracy_lower_bound: snr must be >= 0");
  return std_normal_cdf(std::sqrt(snr_value) / 2.0);
}

Matrix pca2(const Matrix& features) {
  if (features.cols() < 2) throw std::invalid_argument("pca2: need at least 2 dimensions");
  if (features.rows() < 3) throw std::invalid_argument("pca2: need at least 3 rows");

  const Matrix xc = column_center(features);
  const std::size_t d = xc.cols();
  const double inv = 1.0 / static_cast<double>(xc.rows() - 1);
  Matrix cov = gram_cross(xc, xc);
  for (double& v : cov.data()) v *= inv;

  constexpr std::uint64_t kPcaSeed = 0x70636132ULL;
  constexpr double kTol = 1e-9;
  constexpr std::size_t kMaxIters = 50000;
  Rng rng(kPcaSeed);

  std::vector<std::vector<double>> comps;
  std::vector<double> eigvals;

  for (int comp = 0; comp < 2; ++comp) {
    std::vector<double> v(d);
    double norm = 0.0;
    for (double& vi : v) {
      vi = rng.normal();
      norm += vi * vi;
    }
    norm = std::sqrt(norm);
    for (double& vi : v) vi /= norm;

    std::vector<double> next(d);
    for (std::size_t it = 0; it < kMaxIters; ++it) {
      for (std::size_t r = 0; r < d; ++r) {
        const double* row = cov.row_ptr(r);
        double s = 0.0;
        for (std::size_t c = 0; c < d; ++c) s += row[c] * v[c];
        next[r] = s;
      }
      // keep the second component orthogonal to the first against drift
      if (comp == 1) {
        double dot = 0.0;
        for (std::size_t j = 0; j < d; ++j) dot += next[j] * comps[0][j];
        for (std::size_t j = 0; j < d; ++j) next[j] -= dot * comps[0][j];
      }
      double nn = 0.0;
      for (double vi : next) nn += vi * vi;
      nn = std::sqrt(nn);
      if (nn == 0.0) break;  // null direction: handled by the eigenvalue check below
      double sign = 0.0;
      for (std::size_t j = 0; j < d; ++j) sign += next[j] * v[j];
      const double flip = sign < 0.0 ? -1.0 : 1.0;
      double delta = 0.0;
      for (std::size_t j = 0; j < d; ++j) {
        const double nv = flip * next[j] / nn;
        const double dd = nv - v[j];
        delta += dd * dd;
        v[j] = nv;
      }
      if (std::sqrt(delta) < kTol) break;
    }

    double lambda = 0.0;
    for (std::size_t r = 0; r < d; ++r) {
      const double* row = cov.row_ptr(r);
      double s = 0.0;
      for (std::size_t c = 0; c < d; ++c) s += row[c] * v[c];
      lambda += v[r] * s;
    }
    eigvals.push_back(lambda);
    comps.push_back(v);

    if (comp == 0) {
      // deflate
      for (std::size_t r = 0; r < d; ++r)
        for (std::size_t c = 0; c < d; ++c) cov(r, c) -= lambda * v[r] * v[c];
    }
  }

  if (!(eigvals[0] > 0.0) || eigvals[1] <= 1e-12 * std::max(eigvals[0], 1.0))
    throw std::invalid_argument("pca2: data has rank < 2 after centering");

  // deterministic orientation: largest-magnitude loading is positive
  for (auto& v : comps) {
    std::size_t arg = 0;
    for (std::size_t j = 1; j < d; ++j)
      if (std::fabs(v[j]) > std::fabs(v[arg])) arg = j;
    if (v[arg] < 0.0)
      for (double& vi : v) vi = -vi;
  }

  Matrix out(xc.rows(), 2);
  for (std::size_t i = 0; i < xc.rows(); ++i) {
    const double* row = xc.row_ptr(i);
    for (int c = 0; c < 2; ++c) {
      double s = 0.0;
      for (std::size_t j = 0; j < d; ++j) s += row[j] * comps[c][j];
      out(i, c) = s;
    }
  }
  return out;
}

void write_pca2_csv(const Matrix& projection, const LabelVector& labels,
                    const std::vector<std::uint8_t>& is_forgotten,
                    const std::filesystem::path& file) {
  if (projection.cols() != 2 || projection.rows() != labels.size() ||
      labels.size() != is_forgotten.size())
    throw std::invalid_argument("write_pca2_csv: misaligned inputs");
  std::ofstream out(file);
  if (!out) throw std::runtime_error("write_pca2_csv: cannot open " + file.string());
  out << "x,y,label,is_forgotten\n";
  char buf[64];
  for (std::size_t i = 0; i < labels.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%.6f,%.6f,", projection(i, 0), projection(i, 1));
    out << buf << labels[i] << ',' << (is_forgotten[i] ? 1 : 0) << '\n';
  }
  if (!out) throw std::runtime_error("write_pca2_csv: write failed for " + file.string());
}

}  // namespace mirage
