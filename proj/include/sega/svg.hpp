#pragma once

// Minimal native SVG output. Numbers are written with fixed precision so the
// files are byte-stable across runs.

#include "sega/concept_model.hpp"
#include "sega/metrics.hpp"

#include <span>
#include <string>

namespace sega::svg {

/// Scatter of the first two coordinates of `samples`, colored by argmax
/// component, with component means marked and labeled by their tags.
std::string sample_scatter(const MixtureScene& scene, std::span<const Vector> samples,
                           const std::string& title);

/// Mean target posterior against s_e, with +-1 standard error bars.
std::string sweep_plot(const SweepReport& report, const std::string& title);

}  // namespace sega::svg
