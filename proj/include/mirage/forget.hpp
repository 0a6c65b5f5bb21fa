#pragma once

#include <cstdint>
#include <filesystem>
#include <set>

#include "mirage/matrix.hpp"

namespace mirage {

// What is to be forgotten: either a set of class labels or a set of sample
// (row) indices. Exactly one of the two sets is populated.
struct ForgetSpec {
  enum class Kind { ClassLevel, SampleLevel };

  Kind kind = Kind::ClassLevel;
  std::set<std::uint32_t> classes;        // ClassLevel
  std::set<std::size_t> sample_indices;   // SampleLevel

  static ForgetSpec for_classes(std::set<std::uint32_t> cls);
  static ForgetSpec for_samples(std::set<std::size_t> idx);

  // Checks the populated-set rule and that every referenced id/index exists
  // in a dataset with the given labels.
  void validate(const LabelVector& labels) const;

  bool selects(std::uint32_t label, std::size_t row) const {
    return kind == Kind::ClassLevel ? classes.count(label) > 0
                                    : sample_indices.count(row) > 0;
  }
};

// Text format: first line "class" or "sample", then one id/index per line.
ForgetSpec read_forget_spec(const std::filesystem::path& file);
void write_forget_spec(const ForgetSpec& spec, const std::filesystem::path& file);

}  // namespace mirage
