#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "reina/gradcheck.hpp"

namespace reina {

struct GradCheckCase {
  std::string name;
  ad::GradCheckResult result;
};

// Central-difference checks of every differentiable op, every loss, and the
// full stage-1 and stage-3 objectives on a small model.
std::vector<GradCheckCase> gradcheck_suite(std::uint64_t seed, double h = 1e-5);

}  // namespace reina
