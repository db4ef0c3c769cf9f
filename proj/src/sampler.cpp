#include "sega/sampler.hpp"

#include "sega/rng.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <numbers>
#include <thread>

namespace sega {

namespace {

double cosine_level(double u) {
  constexpr double s = 0.008;
  const double c = std::cos((u + s) / (1.0 + s) * std::numbers::pi / 2.0);
  return c * c;
}

std::vector<double> signal_levels(int steps, ScheduleKind kind) {
  std::vector<double> bar(static_cast<std::size_t>(steps) + 1);
  bar[0] = 1.0;
  if (kind == ScheduleKind::LinearVp) {
    constexpr double beta_min = 0.1;
    constexpr double beta_max = 20.0;
    for (int t = 1; t <= steps; ++t) {
      const double u = static_cast<double>(t) / steps;
      bar[t] = std::exp(-(beta_min * u + 0.5 * (beta_max - beta_min) * u * u));
    }
  } else {
    const double f0 = cosine_level(0.0);
    double prev = 1.0;
    for (int t = 1; t <= steps; ++t) {
      const double target = cosine_level(static_cast<double>(t) / steps) / f0;
      const double beta = std::min(1.0 - target / prev, 0.999);
      bar[t] = bar[t - 1] * (1.0 - beta);
      prev = target;
    }
  }
  return bar;
}

}  // namespace

Schedule make_schedule(int steps, ScheduleKind kind) {
  if (steps < 1 || steps > 10000)
    throw std::invalid_argument("schedule steps must lie in [1, 10000], got " +
                                std::to_string(steps));
  Schedule s;
  s.steps = steps;
  s.kind = kind;
  const auto bar = signal_levels(steps, kind);
  s.alphas.resize(bar.size());
  s.omegas.resize(bar.size());
  for (std::size_t t = 0; t < bar.size(); ++t) {
    const double a = std::sqrt(bar[t]);
    s.alphas[t] = a;
    s.omegas[t] = std::sqrt(std::max(0.0, 1.0 - a * a));
  }
  return s;
}

LatentState sample_initial(std::uint64_t seed, Eigen::Index dim, int t) {
  if (dim < 1) throw std::invalid_argument("latent dimension must be >= 1");
  LatentState state{Vector(dim), t};
  for (Eigen::Index i = 0; i < dim; ++i)
    state.z[i] = rng::normal(seed, static_cast<std::uint64_t>(i));
  return state;
}

LatentState denoise_update(const LatentState& state, const Vector& eps_bar,
                           const Schedule& schedule) {
  if (state.t < 1 || state.t > schedule.steps)
    throw std::invalid_argument("denoise_update: step " + std::to_string(state.t) +
                                " outside schedule");
  if (eps_bar.size() != state.z.size())
    throw std::invalid_argument("denoise_update: shape mismatch");
  const double a = schedule.alpha(state.t);
  const double w = schedule.omega(state.t);
  Vector x_hat = (state.z - w * eps_bar) / a;
  if (state.t == 1) return {std::move(x_hat), 0};
  const int prev = state.t - 1;
  return {schedule.alpha(prev) * x_hat + schedule.omega(prev) * eps_bar, prev};
}

SampleTrajectory sample_loop(const MixtureScene& scene, const ConceptQuery& prompt,
                             std::span<const EditDirective> directives,
                             const GuidanceConfig& config, const Schedule& schedule,
                             std::uint64_t seed) {
  const Eigen::Index dim = scene.dimension();
  std::vector<EditParams> params;
  params.reserve(directives.size());
  for (const auto& d : directives) params.push_back(d.params);

  SampleTrajectory out;
  out.seed = seed;
  out.records.reserve(static_cast<std::size_t>(schedule.steps));
  LatentState latent = sample_initial(seed, dim, schedule.steps);
  auto state = GuidanceState<double>::zero(dim);
  std::vector<Vector> eps_edits(directives.size());

  for (int k = 0; k < schedule.steps; ++k) {
    const int t = latent.t;
    const double a = schedule.alpha(t);
    const double w = schedule.omega(t);
    StepRecord rec;
    rec.t = t;
    rec.z = latent.z;
    SegaStepResult<double> step;
    try {
      const Vector eps_u = eps_predict(scene, std::nullopt, latent.z, a, w);
      const Vector eps_p = eps_predict(scene, prompt, latent.z, a, w);
      for (std::size_t i = 0; i < directives.size(); ++i)
        eps_edits[i] = eps_predict(scene, directives[i].query, latent.z, a, w);
      step = sega_step<double>(eps_u, eps_p, eps_edits, params, config, state);
    } catch (const GuidanceError& e) {
      throw SamplingError(k, e.what());
    } catch (const ConceptError& e) {
      throw SamplingError(k, e.what());
    }
    latent = denoise_update(latent, step.prediction, schedule);
    if (!latent.z.allFinite()) throw SamplingError(k, "non-finite latent");
    state = std::move(step.state);
    rec.gamma_norm = step.gamma.norm();
    rec.momentum_norm = state.momentum.norm();
    rec.active_fraction = std::move(step.active_fraction);
    rec.guidance_applied = step.guidance_applied;
    out.records.push_back(std::move(rec));
  }
  out.x0 = std::move(latent.z);
  out.final_state = std::move(state);
  return out;
}

std::vector<SampleTrajectory> sample_batch(const MixtureScene& scene, const ConceptQuery& prompt,
                                           std::span<const EditDirective> directives,
                                           const GuidanceConfig& config,
                                           const Schedule& schedule,
                                           std::span<const std::uint64_t> seeds,
                                           unsigned threads) {
  std::vector<SampleTrajectory> results(seeds.size());
  std::vector<std::exception_ptr> errors(seeds.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < seeds.size(); i = next++) {
      try {
        results[i] = sample_loop(scene, prompt, directives, config, schedule, seeds[i]);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const unsigned n = std::clamp<unsigned>(threads, 1u, static_cast<unsigned>(
                                                            std::max<std::size_t>(1, seeds.size())));
  if (n == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (unsigned i = 0; i < n; ++i) pool.emplace_back(worker);
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return results;
}

std::vector<std::uint64_t> seed_range(std::uint64_t first, std::size_t count) {
  std::vector<std::uint64_t> seeds(count);
  for (std::size_t i = 0; i < count; ++i) seeds[i] = first + i;
  return seeds;
}

}  // namespace sega
