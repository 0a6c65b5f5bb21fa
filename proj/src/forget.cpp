#include "mirage/forget.hpp"

#include <fstream>
#include <stdexcept>
#include <string>

namespace mirage {

ForgetSpec ForgetSpec::for_classes(std::set<std::uint32_t> cls) {
  ForgetSpec s;
  s.kind = Kind::ClassLevel;
  s.classes = std::move(cls);
  return s;
}

ForgetSpec ForgetSpec::for_samples(std::set<std::size_t> idx) {
  ForgetSpec s;
  s.kind = Kind::SampleLevel;
  s.sample_indices = std::move(idx);
  return s;
}

void ForgetSpec::validate(const LabelVector& labels) const {
  if (kind == Kind::ClassLevel) {
    if (classes.empty() || !sample_indices.empty())
      throw std::invalid_argument("forget spec: class-level spec must populate classes only");
    for (std::uint32_t c : classes) {
      bool found = false;
      for (std::uint32_t l : labels)
        if (l == c) { found = true; break; }
      if (!found)
        throw std::invalid_argument("forget spec: class " + std::to_string(c) +
                                    " not present in dataset");
    }
  } else {
    if (sample_indices.empty() || !classes.empty())
      throw std::invalid_argument("forget spec: sample-level spec must populate indices only");
    for (std::size_t i : sample_indices)
      if (i >= labels.size())
        throw std::invalid_argument("forget spec: sample index " + std::to_string(i) +
                                    " out of range (n=" + std::to_string(labels.size()) + ")");
  }
}

ForgetSpec read_forget_spec(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw std::runtime_error("forget spec: cannot open " + file.string());
  std::string head;
  if (!std::getline(in, head)) throw std::runtime_error("forget spec: empty file " + file.string());
  while (!head.empty() && (head.back() == '\r' || head.back() == ' ')) head.pop_back();

  ForgetSpec spec;
  if (head == "class") spec.kind = ForgetSpec::Kind::ClassLevel;
  else if (head == "sample") spec.kind = ForgetSpec::Kind::SampleLevel;
  else throw std::runtime_error("forget spec: first line must be 'class' or 'sample', got '" + head + "'");

  std::string line;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.pop_back();
    if (line.empty()) continue;
    std::size_t pos = 0;
    unsigned long long v = 0;
    try {
      v = std::stoull(line, &pos);
    } catch (const std::exception&) {
      throw std::runtime_error("forget spec: line " + std::to_string(lineno) + ": not an id");
    }
    if (pos != line.size())
      throw std::runtime_error("forget spec: line " + std::to_string(lineno) + ": trailing characters");
    if (spec.kind == ForgetSpec::Kind::ClassLevel)
      spec.classes.insert(static_cast<std::uint32_t>(v));
    else
      spec.sample_indices.insert(static_cast<std::size_t>(v));
  }
  if (spec.classes.empty() && spec.sample_indices.empty())
    throw std::runtime_error("forget spec: no ids listed in " + file.string());
  return spec;
}

void write_forget_spec(const ForgetSpec& spec, const std::filesystem::path& file) {
  std::ofstream out(file);
  if (!out) throw std::runtime_error("forget spec: cannot write " + file.string());
  if (spec.kind == ForgetSpec::Kind::ClassLevel) {
    out << "class\n";
    for (std::uint32_t c : spec.classes) out << c << "\n";
  } else {
    out << "sample\n";
    for (std::size_t i : spec.sample_indices) out << i << "\n";
  }
  if (!out) throw std::runtime_error("forget spec: write failed for " + file.string());
}

}  // namespace mirage
