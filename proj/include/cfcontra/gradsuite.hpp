#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace cfcontra {

struct GradCheckReport {
  std::string name;
  std::size_t instances = 0;
  double max_error = 0.0;
};

/// Central-difference checks of every training objective (and their
/// composition with each head kind) on `instances` random configurations.
std::vector<GradCheckReport> run_gradient_suite(std::size_t instances, double h, std::uint64_t seed);

}  // namespace cfcontra
