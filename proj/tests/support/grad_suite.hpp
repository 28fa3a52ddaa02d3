#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace casdet::testing {

struct GradSuiteRow {
  std::string name;  // "Conv2D" or "Conv2D>ReLU"
  std::size_t shapes = 0;
  double max_rel_error = 0.0;
  std::string worst;  // "<shape>: <tensor>"
  std::size_t redraws = 0;  // points discarded for lying on a kink
};

// Every layer type and every supported two-layer composition, each checked
// on `shapes_per_case` random shapes.
std::vector<GradSuiteRow> run_gradient_suite(std::size_t shapes_per_case, std::uint64_t seed);

// The BCE gradient against central differences over random cases.
double bce_gradient_error(std::size_t cases, std::uint64_t seed);

}  // namespace casdet::testing
