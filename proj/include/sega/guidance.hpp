#pragma once

// Semantic guidance arithmetic: combines unconditioned, prompt-conditioned and
// edit-conditioned noise estimates into one guided prediction.
//
// All functions are pure. The momentum accumulator is carried in an explicit
// GuidanceState value that callers thread through consecutive steps.

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace sega {

template <typename Scalar>
using NoiseEstimate = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

class GuidanceError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

enum class Direction { Positive, Negative };

/// How the per-element scale of the edit mask is derived from s_e / diff.
/// Paper: max(1, |phi|). Clamped: min(s_max, |phi|).
enum class MuMode { Paper, Clamped };

/// Per-edit guidance parameters (the concept itself lives in EditDirective).
struct EditParams {
  Direction direction = Direction::Positive;
  double edit_scale = 5.0;  // s_e
  double threshold = 0.0;   // lambda
  int warmup = 5;           // delta, in steps
  double weight = 1.0;      // g, normalized across a directive list

  friend bool operator==(const EditParams&, const EditParams&) = default;
};

struct GuidanceConfig {
  double guidance_scale = 7.5;  // s_g
  double momentum_scale = 0.0;  // s_m
  double momentum_beta = 0.4;   // beta_m
  MuMode mu_mode = MuMode::Paper;
  double s_max = 10.0;  // only used by MuMode::Clamped

  friend bool operator==(const GuidanceConfig&, const GuidanceConfig&) = default;
};

template <typename Scalar>
struct GuidanceState {
  NoiseEstimate<Scalar> momentum;
  int step = 0;

  static GuidanceState zero(Eigen::Index dim) {
    return {NoiseEstimate<Scalar>::Zero(dim), 0};
  }
};

/// Offset added to diff before taking the reciprocal, with sign(0) = +1.
inline constexpr double kReciprocalGuard = 1e-12;

namespace detail {

template <typename Derived>
void require_finite(const Eigen::MatrixBase<Derived>& v, const char* what) {
  if (!v.allFinite()) {
    throw GuidanceError(std::string(what) + ": non-finite element");
  }
}

template <typename A, typename B>
void require_same_shape(const Eigen::MatrixBase<A>& a, const Eigen::MatrixBase<B>& b,
                        const char* what) {
  if (a.size() != b.size()) {
    throw GuidanceError(std::string(what) + ": shape mismatch (" + std::to_string(a.size()) +
                        " vs " + std::to_string(b.size()) + ")");
  }
}

template <typename Scalar>
NoiseEstimate<Scalar> checked(NoiseEstimate<Scalar> v, const char* what) {
  require_finite(v, what);
  return v;
}

}  // namespace detail

inline void validate(const GuidanceConfig& c) {
  if (!(c.guidance_scale >= 0.0) || !std::isfinite(c.guidance_scale))
    throw GuidanceError("s_g must be >= 0");
  if (!(c.momentum_scale >= 0.0 && c.momentum_scale <= 1.0))
    throw GuidanceError("s_m must lie in [0, 1]");
  if (!(c.momentum_beta >= 0.0 && c.momentum_beta < 1.0))
    throw GuidanceError("beta_m must lie in [0, 1)");
  if (c.mu_mode == MuMode::Clamped && !(c.s_max > 0.0 && std::isfinite(c.s_max)))
    throw GuidanceError("s_max must be > 0");
}

inline void validate(const EditParams& p) {
  if (!(p.edit_scale >= 0.0) || !std::isfinite(p.edit_scale))
    throw GuidanceError("s_e must be >= 0");
  if (!(p.threshold >= -1.0 && p.threshold <= 1.0))
    throw GuidanceError("lambda must lie in [-1, 1]");
  if (p.warmup < 0) throw GuidanceError("delta must be >= 0");
  if (!(p.weight >= 0.0) || !std::isfinite(p.weight)) throw GuidanceError("g must be >= 0");
}

/// Classifier-free guidance: eps_uncond + s_g * (eps_prompt - eps_uncond).
template <typename Scalar>
NoiseEstimate<Scalar> cfg_combine(const NoiseEstimate<Scalar>& eps_uncond,
                                  const NoiseEstimate<Scalar>& eps_prompt, Scalar s_g) {
  detail::require_same_shape(eps_uncond, eps_prompt, "cfg_combine");
  detail::require_finite(eps_uncond, "cfg_combine");
  detail::require_finite(eps_prompt, "cfg_combine");
  if (!(s_g >= Scalar(0))) throw GuidanceError("cfg_combine: s_g must be >= 0");
  // s_g = 1 returns eps_prompt exactly rather than up to rounding.
  if (s_g == Scalar(1)) return eps_prompt;
  return detail::checked<Scalar>(eps_uncond + s_g * (eps_prompt - eps_uncond), "cfg_combine");
}

/// psi: eps_uncond - eps_edit for positive guidance, its negation otherwise.
template <typename Scalar>
NoiseEstimate<Scalar> edit_direction(const NoiseEstimate<Scalar>& eps_uncond,
                                     const NoiseEstimate<Scalar>& eps_edit, Direction direction) {
  detail::require_same_shape(eps_uncond, eps_edit, "edit_direction");
  NoiseEstimate<Scalar> psi = eps_uncond - eps_edit;
  if (direction == Direction::Negative) psi = -psi;
  return detail::checked<Scalar>(std::move(psi), "edit_direction");
}

/// Elementwise mask-and-scale field mu.
///
/// With diff = eps_prompt - eps_edit and phi = s_e / (diff + guard * sign(diff)),
/// an element is active where diff > lambda (positive) or diff < lambda
/// (negative); comparisons are strict. Active elements take max(1, |phi|) in
/// Paper mode or min(s_max, |phi|) in Clamped mode; inactive elements are 0.
template <typename Scalar>
NoiseEstimate<Scalar> edit_mask_scale(const NoiseEstimate<Scalar>& eps_prompt,
                                      const NoiseEstimate<Scalar>& eps_edit, Scalar s_e,
                                      Scalar lambda, Direction direction,
                                      MuMode mode = MuMode::Paper, Scalar s_max = Scalar(10)) {
  detail::require_same_shape(eps_prompt, eps_edit, "edit_mask_scale");
  detail::require_finite(eps_prompt, "edit_mask_scale");
  detail::require_finite(eps_edit, "edit_mask_scale");
  const Scalar guard = Scalar(kReciprocalGuard);
  NoiseEstimate<Scalar> mu(eps_prompt.size());
  for (Eigen::Index i = 0; i < mu.size(); ++i) {
    const Scalar diff = eps_prompt[i] - eps_edit[i];
    const bool active = direction == Direction::Positive ? diff > lambda : diff < lambda;
    if (!active) {
      mu[i] = Scalar(0);
      continue;
    }
    const Scalar signed_guard = diff < Scalar(0) ? -guard : guard;
    const Scalar phi = std::abs(s_e / (diff + signed_guard));
    mu[i] = mode == MuMode::Paper ? std::max(Scalar(1), phi) : std::min(s_max, phi);
  }
  return detail::checked<Scalar>(std::move(mu), "edit_mask_scale");
}

/// gamma for one edit: mu * psi.
template <typename Scalar>
NoiseEstimate<Scalar> gamma_single(const NoiseEstimate<Scalar>& psi,
                                   const NoiseEstimate<Scalar>& mu) {
  detail::require_same_shape(psi, mu, "gamma_single");
  return detail::checked<Scalar>(mu.cwiseProduct(psi), "gamma_single");
}

/// Weighted sum of per-edit guidance terms. Edits still warming up
/// (step < warmup) contribute with weight 0; surviving weights are not
/// renormalized.
template <typename Scalar>
NoiseEstimate<Scalar> aggregate_edits(std::span<const NoiseEstimate<Scalar>> gammas,
                                      std::span<const EditParams> edits, int step,
                                      Eigen::Index dim) {
  if (gammas.size() != edits.size()) throw GuidanceError("aggregate_edits: length mismatch");
  NoiseEstimate<Scalar> total = NoiseEstimate<Scalar>::Zero(dim);
  for (std::size_t i = 0; i < gammas.size(); ++i) {
    if (gammas[i].size() != dim) throw GuidanceError("aggregate_edits: shape mismatch");
    if (step < edits[i].warmup) continue;
    total += Scalar(edits[i].weight) * gammas[i];
  }
  return detail::checked<Scalar>(std::move(total), "aggregate_edits");
}

/// Adds s_m * nu once every warm-up period has elapsed.
template <typename Scalar>
NoiseEstimate<Scalar> momentum_apply(const NoiseEstimate<Scalar>& gamma_hat,
                                     const GuidanceState<Scalar>& state, Scalar s_m,
                                     bool all_warmups_done) {
  detail::require_same_shape(gamma_hat, state.momentum, "momentum_apply");
  if (!all_warmups_done) return gamma_hat;
  return detail::checked<Scalar>(gamma_hat + s_m * state.momentum, "momentum_apply");
}

/// nu_{t+1} = beta_m * nu_t + (1 - beta_m) * gamma_t; advances the step counter.
template <typename Scalar>
GuidanceState<Scalar> momentum_update(const GuidanceState<Scalar>& state,
                                      const NoiseEstimate<Scalar>& gamma, Scalar beta_m) {
  detail::require_same_shape(state.momentum, gamma, "momentum_update");
  if (!(beta_m >= Scalar(0) && beta_m < Scalar(1)))
    throw GuidanceError("momentum_update: beta_m must lie in [0, 1)");
  GuidanceState<Scalar> next;
  next.momentum = detail::checked<Scalar>(beta_m * state.momentum + (Scalar(1) - beta_m) * gamma,
                                          "momentum_update");
  next.step = state.step + 1;
  return next;
}

/// eps_uncond + s_g * (eps_prompt - eps_uncond - gamma) once past warm-up,
/// plain classifier-free guidance before.
template <typename Scalar>
NoiseEstimate<Scalar> guided_prediction(const NoiseEstimate<Scalar>& eps_uncond,
                                        const NoiseEstimate<Scalar>& eps_prompt,
                                        const NoiseEstimate<Scalar>& gamma, Scalar s_g,
                                        bool past_warmup) {
  if (!past_warmup) return cfg_combine(eps_uncond, eps_prompt, s_g);
  detail::require_same_shape(eps_uncond, eps_prompt, "guided_prediction");
  detail::require_same_shape(eps_uncond, gamma, "guided_prediction");
  if (s_g == Scalar(1)) return detail::checked<Scalar>(eps_prompt - gamma, "guided_prediction");
  return detail::checked<Scalar>(eps_uncond + s_g * (eps_prompt - eps_uncond - gamma),
                                 "guided_prediction");
}

template <typename Scalar>
struct SegaStepResult {
  NoiseEstimate<Scalar> prediction;
  GuidanceState<Scalar> state;
  NoiseEstimate<Scalar> gamma;           // aggregated gamma_t, momentum included when applied
  std::vector<double> active_fraction;   // per edit, share of nonzero mask elements
  bool guidance_applied = false;
};

/// One full guidance step. `edits` must already carry normalized weights.
template <typename Scalar>
SegaStepResult<Scalar> sega_step(const NoiseEstimate<Scalar>& eps_uncond,
                                 const NoiseEstimate<Scalar>& eps_prompt,
                                 std::span<const NoiseEstimate<Scalar>> eps_edits,
                                 std::span<const EditParams> edits, const GuidanceConfig& config,
                                 const GuidanceState<Scalar>& state) {
  if (eps_edits.size() != edits.size()) throw GuidanceError("sega_step: length mismatch");
  detail::require_same_shape(eps_uncond, eps_prompt, "sega_step");
  const Eigen::Index dim = eps_uncond.size();
  const int t = state.step;

  std::vector<NoiseEstimate<Scalar>> gammas;
  std::vector<double> active;
  gammas.reserve(edits.size());
  active.reserve(edits.size());
  int first_warmup = 0;
  int last_warmup = 0;
  for (std::size_t i = 0; i < edits.size(); ++i) {
    const EditParams& e = edits[i];
    auto psi = edit_direction(eps_uncond, eps_edits[i], e.direction);
    auto mu = edit_mask_scale(eps_prompt, eps_edits[i], Scalar(e.edit_scale), Scalar(e.threshold),
                              e.direction, config.mu_mode, Scalar(config.s_max));
    active.push_back(dim == 0 ? 0.0
                              : static_cast<double>((mu.array() != Scalar(0)).count()) /
                                    static_cast<double>(dim));
    gammas.push_back(gamma_single(psi, mu));
    first_warmup = i == 0 ? e.warmup : std::min(first_warmup, e.warmup);
    last_warmup = std::max(last_warmup, e.warmup);
  }

  const bool any_edit = !edits.empty();
  const bool all_done = any_edit && t >= last_warmup;
  const bool past_warmup = any_edit && t >= first_warmup;

  // Momentum accumulates every edit from step 0; the prediction only sees
  // edits whose warm-up has elapsed.
  auto gamma_hat = aggregate_edits<Scalar>(gammas, edits, t, dim);
  auto gamma_t = momentum_apply(gamma_hat, state, Scalar(config.momentum_scale), all_done);
  auto next = all_done ? momentum_update(state, gamma_t, Scalar(config.momentum_beta))
                       : momentum_update(state,
                                         aggregate_edits<Scalar>(gammas, edits,
                                                                 std::numeric_limits<int>::max(),
                                                                 dim),
                                         Scalar(config.momentum_beta));
  auto pred = guided_prediction(eps_uncond, eps_prompt, gamma_t, Scalar(config.guidance_scale),
                                past_warmup);
  return {std::move(pred), std::move(next), std::move(gamma_t), std::move(active), past_warmup};
}

}  // namespace sega
