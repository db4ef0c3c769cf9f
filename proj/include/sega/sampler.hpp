#pragma once

// Deterministic DDIM (eta = 0) reverse diffusion with semantic guidance.

#include "sega/concept_model.hpp"
#include "sega/guidance.hpp"

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace sega {

enum class ScheduleKind { LinearVp, Cosine };

/// Variance-preserving schedule. Index t runs from `steps` (most noise) down
/// to 1; index 0 holds the clean endpoint alpha = 1, omega = 0.
struct Schedule {
  int steps = 0;
  ScheduleKind kind = ScheduleKind::Cosine;
  std::vector<double> alphas;
  std::vector<double> omegas;

  double alpha(int t) const { return alphas.at(static_cast<std::size_t>(t)); }
  double omega(int t) const { return omegas.at(static_cast<std::size_t>(t)); }
};

/// linear_vp: continuous VP with beta(u) = 0.1 + 19.9 u, so
///   alpha_bar(u) = exp(-(0.1 u + 9.95 u^2)), u = t / T.
/// cosine: alpha_bar(u) = f(u) / f(0), f(u) = cos^2((u + 0.008) / 1.008 * pi / 2),
///   with per-step betas capped at 0.999.
/// In both, alpha = sqrt(alpha_bar) and omega = sqrt(1 - alpha^2).
Schedule make_schedule(int steps, ScheduleKind kind);

struct LatentState {
  Vector z;
  int t = 0;
};

/// z ~ N(0, I) from the counter-based generator in rng.hpp.
LatentState sample_initial(std::uint64_t seed, Eigen::Index dim, int t = 0);

/// x_hat = (z_t - omega_t eps) / alpha_t; z_{t-1} = alpha_{t-1} x_hat + omega_{t-1} eps.
/// At t = 1 the result is x_hat.
LatentState denoise_update(const LatentState& state, const Vector& eps_bar,
                           const Schedule& schedule);

struct EditDirective {
  ConceptQuery query;
  EditParams params;

  friend bool operator==(const EditDirective&, const EditDirective&) = default;
};

class SamplingError : public std::runtime_error {
 public:
  SamplingError(int step, const std::string& what)
      : std::runtime_error("step " + std::to_string(step) + ": " + what), step_(step) {}
  int step() const { return step_; }

 private:
  int step_;
};

struct StepRecord {
  int t = 0;  // schedule index the step started from
  Vector z;   // latent entering the step
  double gamma_norm = 0.0;
  double momentum_norm = 0.0;  // after the update of this step
  std::vector<double> active_fraction;
  bool guidance_applied = false;
};

struct SampleTrajectory {
  std::uint64_t seed = 0;
  std::vector<StepRecord> records;
  Vector x0;
  GuidanceState<double> final_state;
};

SampleTrajectory sample_loop(const MixtureScene& scene, const ConceptQuery& prompt,
                             std::span<const EditDirective> directives,
                             const GuidanceConfig& config, const Schedule& schedule,
                             std::uint64_t seed);

/// One chain per seed, run on up to `threads` workers; results follow seed order.
std::vector<SampleTrajectory> sample_batch(const MixtureScene& scene, const ConceptQuery& prompt,
                                           std::span<const EditDirective> directives,
                                           const GuidanceConfig& config,
                                           const Schedule& schedule,
                                           std::span<const std::uint64_t> seeds,
                                           unsigned threads = 1);

std::vector<std::uint64_t> seed_range(std::uint64_t first, std::size_t count);

}  // namespace sega
