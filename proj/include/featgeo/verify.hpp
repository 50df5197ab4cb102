#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "featgeo/autodiff.hpp"
#include "featgeo/metrics.hpp"

namespace featgeo {

// Largest relative error between reverse-mode gradients and central differences, over all
// parameter entries, normalised per parameter by the larger of the two gradient norms.
double gradient_check(const std::vector<ad::Parameter*>& params, const std::function<ad::Var(ad::Tape&)>& fn,
                      double step = 1e-4);

// Oracle identities and gradient checks on seeded random instances.
std::vector<MetricResult> run_property_suite(std::uint32_t seed, std::size_t instances = 100);

}  // namespace featgeo
