#include "mirage/embedding.hpp"

#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <stdexcept>

namespace mirage {

namespace {

constexpr const char* kFormatVersion = "mef-1";
constexpr const char* kEncoding = "f32le-rowmajor";

void put_u32le(std::string& buf, std::uint32_t v) {
  buf.push_back(static_cast<char>(v & 0xFF));
  buf.push_back(static_cast<char>((v >> 8) & 0xFF));
  buf.push_back(static_cast<char>((v >> 16) & 0xFF));
  buf.push_back(static_cast<char>((v >> 24) & 0xFF));
}

std::uint32_t get_u32le(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

void write_file(const std::filesystem::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("mef-1: cannot open " + path.string() + " for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("mef-1: write failed for " + path.string());
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("mef-1: missing file " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return bytes;
}

}  // namespace

std::string to_string(ModelTag tag) {
  switch (tag) {
    case ModelTag::Original: return "original";
    case ModelTag::Unlearned: return "unlearned";
    case ModelTag::Retrained: return "retrained";
    case ModelTag::Other: return "other";
  }
  return "other";
}

ModelTag model_tag_from_string(const std::string& s) {
  if (s == "original") return ModelTag::Original;
  if (s == "unlearned") return ModelTag::Unlearned;
  if (s == "retrained") return ModelTag::Retrained;
  if (s == "other") return ModelTag::Other;
  throw std::runtime_error("unknown model tag '" + s + "'");
}

void EmbeddingSet::validate() const {
  if (features.rows() != labels.size())
    throw std::invalid_argument("embedding set: feature rows (" + std::to_string(features.rows()) +
                                ") != label count (" + std::to_string(labels.size()) + ")");
  if (layer_tag.empty()) throw std::invalid_argument("embedding set: layer_tag must be nonempty");
  features.require_finite("embedding set");
}

void SyntheticSpec::validate() const {
  if (n_classes < 2) throw std::invalid_argument("synthetic spec: n_classes must be >= 2");
  if (dim < 1) throw std::invalid_argument("synthetic spec: dim must be >= 1");
  if (!(noise_sigma > 0.0)) throw std::invalid_argument("synthetic spec: noise_sigma must be > 0");
  if (n_per_class < 1) throw std::invalid_argument("synthetic spec: n_per_class must be >= 1");
}

std::vector<double> SyntheticSpec::class_mean(std::uint32_t c) const {
  std::vector<double> m(dim, 0.0);
  const std::size_t axis = c % dim;
  const double tier = 1.0 + static_cast<double>(c / dim);
  m[axis] = class_mean_scale * tier;
  return m;
}

void write_embedding_set(const EmbeddingSet& set, const std::filesystem::path& dir) {
  set.validate();
  const std::size_t rows = set.features.rows();
  const std::size_t cols = set.features.cols();
  if (rows > std::numeric_limits<std::uint32_t>::max() ||
      cols > std::numeric_limits<std::uint32_t>::max())
    throw std::runtime_error("mef-1: rows/cols overflow the declared 32-bit sizes");

  std::filesystem::create_directories(dir);

  std::string meta;
  meta += std::string("format ") + kFormatVersion + "\n";
  meta += "rows " + std::to_string(rows) + "\n";
  meta += "cols " + std::to_string(cols) + "\n";
  meta += "layer_tag " + set.layer_tag + "\n";
  meta += "model_tag " + to_string(set.model_tag) + "\n";
  meta += std::string("encoding ") + kEncoding + "\n";
  for (const auto& [k, v] : set.source_meta) meta += "meta." + k + " " + v + "\n";
  write_file(dir / "meta", meta);

  std::string feat;
  feat.reserve(rows * cols * 4);
  for (double v : set.features.data())
    put_u32le(feat, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
  write_file(dir / "features", feat);

  std::string lab;
  lab.reserve(rows * 4);
  for (std::uint32_t l : set.labels) put_u32le(lab, l);
  write_file(dir / "labels", lab);
}

EmbeddingSet read_embedding_set(const std::filesystem::path& dir) {
  const std::string meta = read_file(dir / "meta");

  std::map<std::string, std::string> kv;
  std::size_t pos = 0;
  while (pos < meta.size()) {
    std::size_t eol = meta.find('\n', pos);
    if (eol == std::string::npos) eol = meta.size();
    std::string line = meta.substr(pos, eol - pos);
    pos = eol + 1;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const std::size_t sp = line.find(' ');
    if (sp == std::string::npos)
      throw std::runtime_error("mef-1: malformed meta line '" + line + "' in " + dir.string());
    kv[line.substr(0, sp)] = line.substr(sp + 1);
  }

  auto need = [&](const char* key) -> const std::string& {
    auto it = kv.find(key);
    if (it == kv.end())
      throw std::runtime_error(std::string("mef-1: meta key '") + key + "' missing in " + dir.string());
    return it->second;
  };

  if (need("format") != kFormatVersion)
    throw std::runtime_error("mef-1: unknown format version '" + kv["format"] + "' in " + dir.string());
  if (need("encoding") != kEncoding)
    throw std::runtime_error("mef-1: unknown encoding '" + kv["encoding"] + "' in " + dir.string());

  const std::size_t rows = std::stoull(need("rows"));
  const std::size_t cols = std::stoull(need("cols"));

  EmbeddingSet set;
  set.layer_tag = need("layer_tag");
  set.model_tag = model_tag_from_string(need("model_tag"));
  for (const auto& [k, v] : kv)
    if (k.rfind("meta.", 0) == 0) set.source_meta[k.substr(5)] = v;

  const std::string feat = read_file(dir / "features");
  if (feat.size() != rows * cols * 4)
    throw std::runtime_error("mef-1: features payload is " + std::to_string(feat.size()) +
                             " bytes, expected " + std::to_string(rows * cols * 4) + " in " + dir.string());
  set.features = Matrix(rows, cols);
  const auto* fp = reinterpret_cast<const unsigned char*>(feat.data());
  for (std::size_t i = 0; i < rows * cols; ++i)
    set.features.data()[i] = static_cast<double>(std::bit_cast<float>(get_u32le(fp + 4 * i)));

  const std::string lab = read_file(dir / "labels");
  if (lab.size() != rows * 4)
    throw std::runtime_error("mef-1: labels payload is " + std::to_string(lab.size()) +
                             " bytes, expected " + std::to_string(rows * 4) + " in " + dir.string());
  set.labels.resize(rows);
  const auto* lp = reinterpret_cast<const unsigned char*>(lab.data());
  for (std::size_t i = 0; i < rows; ++i) set.labels[i] = get_u32le(lp + 4 * i);

  set.validate();
  return set;
}

EmbeddingSet read_csv_embeddings(const std::filesystem::path& file, const std::string& layer_tag,
                                 ModelTag model_tag) {
  std::ifstream in(file);
  if (!in) throw std::runtime_error("csv: cannot open " + file.string());

  std::string header;
  if (!std::getline(in, header)) throw std::runtime_error("csv: empty file " + file.string());
  if (!header.empty() && header.back() == '\r') header.pop_back();
  if (header.rfind("label", 0) != 0)
    throw std::runtime_error("csv: header must start with 'label', got '" + header + "'");
  std::size_t dim = 0;
  for (char c : header)
    if (c == ',') ++dim;
  if (dim == 0) throw std::runtime_error("csv: header declares no feature columns");

  std::vector<double> values;
  LabelVector labels;
  std::string line;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;

    std::size_t field = 0;
    const char* p = line.data();
    const char* end = p + line.size();
    while (true) {
      const char* comma = static_cast<const char*>(std::memchr(p, ',', end - p));
      const char* fend = comma ? comma : end;
      if (field == 0) {
        std::uint32_t lab = 0;
        auto [ptr, ec] = std::from_chars(p, fend, lab);
        if (ec != std::errc() || ptr != fend)
          throw std::runtime_error("csv: line " + std::to_string(lineno) + ": bad label");
        labels.push_back(lab);
      } else {
        double v = 0.0;
        auto [ptr, ec] = std::from_chars(p, fend, v);
        if (ec != std::errc() || ptr != fend)
          throw std::runtime_error("csv: line " + std::to_string(lineno) + ": non-numeric cell");
        values.push_back(v);
      }
      ++field;
      if (!comma) break;
      p = comma + 1;
    }
    if (field != dim + 1)
      throw std::runtime_error("csv: line " + std::to_string(lineno) + ": expected " +
                               std::to_string(dim + 1) + " fields, got " + std::to_string(field));
  }

  EmbeddingSet set;
  set.features = Matrix(labels.size(), dim);
  set.features.data() = std::move(values);
  set.labels = std::move(labels);
  set.layer_tag = layer_tag;
  set.model_tag = model_tag;
  set.validate();
  return set;
}

EmbeddingSet generate_gaussian_mixture(const SyntheticSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);

  const std::size_t n = spec.n_per_class * spec.n_classes;
  EmbeddingSet set;
  set.features = Matrix(n, spec.dim);
  set.labels.resize(n);
  set.layer_tag = "raw";
  set.model_tag = ModelTag::Other;

  std::size_t row = 0;
  for (std::uint32_t c = 0; c < spec.n_classes; ++c) {
    const std::vector<double> mean = spec.class_mean(c);
    for (std::size_t i = 0; i < spec.n_per_class; ++i, ++row) {
      double* dst = set.features.row_ptr(row);
      for (std::size_t j = 0; j < spec.dim; ++j)
        dst[j] = mean[j] + spec.noise_sigma * rng.normal();
      set.labels[row] = c;
    }
  }
  set.validate();
  return set;
}

std::pair<std::vector<std::size_t>, std::vector<std::size_t>> forget_partition(
    const LabelVector& labels, const ForgetSpec& spec) {
  spec.validate(labels);
  std::vector<std::size_t> forgotten, retained;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (spec.selects(labels[i], i))
      forgotten.push_back(i);
    else
      retained.push_back(i);
  }
  return {std::move(forgotten), std::move(retained)};
}

std::pair<EmbeddingSet, EmbeddingSet> split_forget(const EmbeddingSet& set, const ForgetSpec& spec) {
  set.validate();
  auto [fidx, ridx] = forget_partition(set.labels, spec);
  if (fidx.empty()) throw std::invalid_argument("split_forget: forgotten partition is empty");
  if (ridx.empty()) throw std::invalid_argument("split_forget: retained partition is empty");

  auto build = [&](const std::vector<std::size_t>& idx) {
    EmbeddingSet out;
    out.features = take_rows(set.features, idx);
    out.labels.reserve(idx.size());
    for (std::size_t i : idx) out.labels.push_back(set.labels[i]);
    out.layer_tag = set.layer_tag;
    out.model_tag = set.model_tag;
    out.source_meta = set.source_meta;
    return out;
  };
  return {build(fidx), build(ridx)};
}

}  // namespace mirage
