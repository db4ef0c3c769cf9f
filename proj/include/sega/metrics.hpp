#pragma once

// Quantitative edit-effect measurements over sets of final samples.

#include "sega/concept_model.hpp"
#include "sega/config.hpp"
#include "sega/sampler.hpp"

#include <json.hpp>

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace sega {

struct MeanEstimate {
  double mean = 0.0;
  double standard_error = 0.0;  // sample sd / sqrt(n); 0 when n == 1
  std::size_t count = 0;
};

MeanEstimate estimate_mean(std::span<const double> values);

struct QueryShift {
  TagSet tags;
  MeanEstimate base;
  MeanEstimate edited;
};

struct ShiftReport {
  TagSet target;
  std::vector<QueryShift> posteriors;  // target first, then any extra tracked queries
  double base_target_fraction = 0.0;   // share of samples whose argmax component carries target
  double edited_target_fraction = 0.0;
  std::size_t base_count = 0;
  std::size_t edited_count = 0;
  std::vector<std::uint64_t> seeds;

  const QueryShift& target_shift() const { return posteriors.front(); }
};

ShiftReport concept_shift(std::span<const Vector> samples_base, std::span<const Vector> samples_edited,
                          const MixtureScene& scene, const TagSet& target,
                          std::span<const TagSet> tracked = {});

/// Fraction of samples whose most responsible component carries every tag in `tags`.
double argmax_fraction(std::span<const Vector> samples, const MixtureScene& scene,
                       const TagSet& tags);

/// Spearman rank correlation with average ranks for ties. Returns nullopt when
/// either series is constant.
std::optional<double> spearman(std::span<const double> x, std::span<const double> y);

struct SweepPoint {
  double edit_scale = 0.0;
  MeanEstimate posterior;
  std::vector<Vector> samples;  // in seed order
};

struct SweepReport {
  std::size_t edit_index = 0;
  TagSet target;
  std::vector<SweepPoint> points;
  double rank_correlation = 0.0;  // 0 when undefined; see warnings
  std::vector<std::uint64_t> seeds;
  std::vector<std::string> warnings;
};

/// Runs the configured experiment once per (s_e, seed) with edit `edit_index`
/// rescaled, and correlates s_e with the mean posterior of `target` (default:
/// the edit's own tags when its query is atomic, otherwise the prompt's).
SweepReport strength_sweep(const RunConfig& config, std::size_t edit_index,
                           std::span<const double> edit_scales, std::span<const std::uint64_t> seeds,
                           std::optional<TagSet> target = std::nullopt, unsigned threads = 1);

struct ArithmeticOptions {
  GuidanceConfig guidance;
  EditParams remove_params{Direction::Negative, 5.0, kDefaultNegativeThreshold, 5, 0.5};
  EditParams add_params{Direction::Positive, 5.0, kDefaultPositiveThreshold, 5, 0.5};
  int steps = 50;
  ScheduleKind schedule = ScheduleKind::Cosine;
  std::vector<std::uint64_t> seeds;
  unsigned threads = 1;
};

/// base - remove + add: one negative directive on `remove`, one positive on
/// `add`, over prompt `base`. Reports the shift toward (base \ remove) ∪ add.
ShiftReport arithmetic_consistency(const MixtureScene& scene, const TagSet& base,
                                   const TagSet& remove, const TagSet& add,
                                   const ArithmeticOptions& options);

nlohmann::json to_json(const ShiftReport& report);
nlohmann::json to_json(const SweepReport& report);

}  // namespace sega
