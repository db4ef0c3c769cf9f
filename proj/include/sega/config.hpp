#pragma once

// Run configuration: a single JSON document describing the scene, prompt,
// edit directives, guidance and sampler parameters, and output locations.
//
//   {
//     "schema_version": 1,
//     "scene":    {"dimension": d, "components": [{"mean": [], "variances": [],
//                                                  "weight": w, "tags": []}]},
//     "prompt":   {"tags": []},
//     "edits":    [{"tags": []  |  "composite": [{"tags": [], "weight": w}],
//                   "direction": "positive"|"negative", "s_e": x, "lambda": x,
//                   "delta": n, "g": x}],
//     "guidance": {"s_g": x, "s_m": x, "beta_m": x, "mu_mode": "paper"|"clamped",
//                  "s_max": x},
//     "sampler":  {"steps": n, "schedule": "cosine"|"linear_vp", "seed": n,
//                  "num_samples": n},
//     "outputs":  {"dir": s, "csv": s, "metrics": s, "svg": bool}
//   }
//
// Only "scene" and "prompt" are required. Unknown keys are rejected unless
// parsing in lax mode. Ranges: s_e in [0,5000], lambda in [-1,1], delta in
// [0,20], s_m in [0,1], beta_m in [0,1), s_g >= 0, steps in [1,10000].

#include "sega/concept_model.hpp"
#include "sega/guidance.hpp"
#include "sega/sampler.hpp"

#include <json.hpp>

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace sega {

inline constexpr int kSchemaVersion = 1;

/// Default thresholds per direction: positive edits consider elements with
/// diff above -0.1, negative edits elements with diff below 0.1.
inline constexpr double kDefaultPositiveThreshold = -0.1;
inline constexpr double kDefaultNegativeThreshold = 0.1;

class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::string path, const std::string& message)
      : std::runtime_error(path + ": " + message), path_(std::move(path)) {}
  const std::string& path() const { return path_; }

 private:
  std::string path_;
};

struct SamplerSettings {
  int steps = 50;
  ScheduleKind schedule = ScheduleKind::Cosine;
  std::uint64_t seed = 0;
  int num_samples = 100;

  friend bool operator==(const SamplerSettings&, const SamplerSettings&) = default;
};

struct OutputSettings {
  std::string dir = "out";
  std::string csv = "samples.csv";
  std::string metrics = "metrics.json";
  bool svg = false;

  friend bool operator==(const OutputSettings&, const OutputSettings&) = default;
};

struct RunConfig {
  MixtureScene scene;
  ConceptQuery prompt;
  std::vector<EditDirective> edits;
  GuidanceConfig guidance;
  SamplerSettings sampler;
  OutputSettings outputs;

  friend bool operator==(const RunConfig&, const RunConfig&) = default;
};

struct ParseOptions {
  bool strict = true;
};

struct ParseResult {
  RunConfig config;
  std::vector<std::string> warnings;
};

ParseResult parse(std::string_view document, const ParseOptions& options = {});
ParseResult parse(const nlohmann::json& document, const ParseOptions& options = {});

/// Applies `key.path=value` overrides in order. Values are read as JSON when
/// they parse as JSON, otherwise as strings. Paths accept `a.b[2].c`.
void apply_overrides(nlohmann::json& document, const std::vector<std::string>& overrides);

nlohmann::json to_json(const RunConfig& config);

/// Canonical form: every field explicit, keys sorted, two-space indent.
std::string emit_normalized(const RunConfig& config);

Schedule make_schedule(const SamplerSettings& sampler);

std::string to_string(Direction d);
std::string to_string(MuMode m);
std::string to_string(ScheduleKind k);

}  // namespace sega
