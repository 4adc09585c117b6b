#pragma once

// Named matrices and scalars with shape headers, stored as JSON or CSV.
// Doubles are written in shortest round-trip form, so read(write(b)) == b
// bit for bit.

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "akl/attention.hpp"
#include "akl/fredholm.hpp"

namespace akl {

struct Bundle {
  std::vector<std::pair<std::string, Matrix>> matrices;
  std::vector<std::pair<std::string, double>> scalars;

  void put(const std::string& name, Matrix m);
  void put_scalar(const std::string& name, double v);
  const Matrix& matrix(const std::string& name) const;
  double scalar(const std::string& name) const;

  friend bool operator==(const Bundle& a, const Bundle& b);
};

std::string bundle_to_json(const Bundle& b);
Bundle bundle_from_json(const std::string& text);

/// "# matrix <name> <rows> <cols>" followed by the rows, "# scalar <name> <v>".
std::string bundle_to_csv(const Bundle& b);
Bundle bundle_from_csv(const std::string& text);

/// Format chosen by extension: .json or .csv.
void write_bundle(const Bundle& b, const std::filesystem::path& path);
Bundle read_bundle(const std::filesystem::path& path);

Bundle to_bundle(const AttentionWeights& w);
AttentionWeights weights_from_bundle(const Bundle& b);

Bundle to_bundle(const TokenMatrix& t);
TokenMatrix tokens_from_bundle(const Bundle& b);

Bundle to_bundle(const FredholmProblem& prob);
FredholmProblem problem_from_bundle(const Bundle& b);

}  // namespace akl
