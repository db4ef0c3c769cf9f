// Acceptance suite: one PASS/FAIL line per criterion, non-zero exit on any failure.

#include "../oracles.hpp"
#include "sega/cli.hpp"
#include "sega/config.hpp"
#include "sega/metrics.hpp"
#include "sega/sampler.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace sega;

namespace {

struct Outcome {
  bool pass;
  std::string detail;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

// --- criterion 1 and 2: randomized CFG runs ---------------------------------

struct Trial {
  MixtureScene scene;
  ConceptQuery prompt;
  GuidanceConfig guidance;
  Schedule schedule;
  std::uint64_t seed;
};

std::vector<Trial> cfg_trials() {
  std::mt19937_64 rng(1001);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_int_distribution<int> steps(2, 60), coin(0, 1);
  std::vector<Trial> out;
  for (int k = 0; k < 100; ++k) {
    auto scene = oracle::random_scene(rng);
    auto prompt = ConceptQuery::atomic(oracle::random_query(rng, scene));
    GuidanceConfig g;
    g.guidance_scale = 10.0 * unit(rng);
    g.momentum_scale = unit(rng);
    g.momentum_beta = 0.99 * unit(rng);
    g.mu_mode = coin(rng) ? MuMode::Paper : MuMode::Clamped;
    g.s_max = 1.0 + 9.0 * unit(rng);
    auto schedule = make_schedule(steps(rng), coin(rng) ? ScheduleKind::Cosine : ScheduleKind::LinearVp);
    out.push_back({std::move(scene), std::move(prompt), g, std::move(schedule),
                   std::uniform_int_distribution<std::uint64_t>()(rng)});
  }
  return out;
}

/// Plain classifier-free guidance sampler written against the backend only.
Vector reference_cfg(const Trial& tr) {
  Vector z = sample_initial(tr.seed, tr.scene.dimension()).z;
  const double s_g = tr.guidance.guidance_scale;
  for (int t = tr.schedule.steps; t >= 1; --t) {
    const double a = tr.schedule.alpha(t), w = tr.schedule.omega(t);
    const Vector eu = eps_predict(tr.scene, std::nullopt, z, a, w);
    const Vector ep = eps_predict(tr.scene, tr.prompt, z, a, w);
    Vector next(z.size());
    for (Eigen::Index i = 0; i < z.size(); ++i) {
      const double eps = eu[i] + s_g * (ep[i] - eu[i]);
      const double x_hat = (z[i] - w * eps) / a;
      next[i] = t == 1 ? x_hat : tr.schedule.alpha(t - 1) * x_hat + tr.schedule.omega(t - 1) * eps;
    }
    z = next;
  }
  return z;
}

bool bit_equal(const Vector& a, const Vector& b) {
  if (a.size() != b.size()) return false;
  for (Eigen::Index i = 0; i < a.size(); ++i)
    if (std::memcmp(&a[i], &b[i], sizeof(double)) != 0) return false;
  return true;
}

Outcome criterion_1() {
  int mismatches = 0;
  for (const auto& tr : cfg_trials()) {
    const auto run = sample_loop(tr.scene, tr.prompt, {}, tr.guidance, tr.schedule, tr.seed);
    if (!bit_equal(run.x0, reference_cfg(tr))) ++mismatches;
  }
  return {mismatches == 0, std::to_string(100 - mismatches) + "/100 bit-identical"};
}

Outcome criterion_2() {
  std::mt19937_64 rng(1002);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_int_distribution<int> n_edits(1, 3), coin(0, 1);
  int mismatches = 0, momentum_failures = 0, nonzero_gamma = 0;
  for (const auto& tr : cfg_trials()) {
    std::vector<EditDirective> edits;
    const int n = n_edits(rng);
    for (int i = 0; i < n; ++i) {
      EditParams p{coin(rng) ? Direction::Positive : Direction::Negative, 20.0 * unit(rng),
                   2.0 * unit(rng) - 1.0,
                   tr.schedule.steps + std::uniform_int_distribution<int>(0, 10)(rng), 1.0 / n};
      edits.push_back({ConceptQuery::atomic(oracle::random_query(rng, tr.scene)), p});
    }
    const auto run = sample_loop(tr.scene, tr.prompt, edits, tr.guidance, tr.schedule, tr.seed);
    if (!bit_equal(run.x0, reference_cfg(tr))) ++mismatches;

    // gamma at the first step from the scalar oracle, before any gating
    const int T = tr.schedule.steps;
    const Vector z = sample_initial(tr.seed, tr.scene.dimension()).z;
    const double a = tr.schedule.alpha(T), w = tr.schedule.omega(T);
    const auto eu = oracle::to_std(eps_predict(tr.scene, std::nullopt, z, a, w));
    const auto ep = oracle::to_std(eps_predict(tr.scene, tr.prompt, z, a, w));
    std::vector<std::vector<double>> ee;
    std::vector<oracle::EditSpec> specs;
    for (const auto& e : edits) {
      ee.push_back(oracle::to_std(eps_predict(tr.scene, e.query, z, a, w)));
      specs.push_back({e.params.direction == Direction::Positive, e.params.edit_scale,
                       e.params.threshold, 0, e.params.weight});
    }
    const auto ref = oracle::scalar_sega_step(eu, ep, ee, specs, 1.0, 0.0, 0.0,
                                              tr.guidance.mu_mode == MuMode::Clamped,
                                              tr.guidance.s_max,
                                              std::vector<double>(eu.size(), 0.0), 0);
    bool any_gamma = false;
    for (double m : ref.momentum) any_gamma = any_gamma || m != 0.0;
    if (any_gamma) {
      ++nonzero_gamma;
      if (!(run.records.front().momentum_norm > 0.0)) ++momentum_failures;
    }
  }
  return {mismatches == 0 && momentum_failures == 0 && nonzero_gamma > 0,
          std::to_string(100 - mismatches) + "/100 bit-identical, momentum nonzero in " +
              std::to_string(nonzero_gamma - momentum_failures) + "/" +
              std::to_string(nonzero_gamma) + " runs with nonzero gamma"};
}

// --- criterion 3 ------------------------------------------------------------

Outcome criterion_3() {
  std::mt19937_64 rng(1003);
  std::normal_distribution<double> n;
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_int_distribution<int> n_edits(0, 4), delta(0, 10), step(0, 12), coin(0, 1);
  auto rv = [&] {
    Vector v(16);
    for (auto& x : v) x = n(rng);
    return v;
  };
  double worst = 0.0;
  for (int k = 0; k < 1000; ++k) {
    const Vector u = rv(), p = rv();
    const int m = n_edits(rng);
    std::vector<Vector> eps_e;
    std::vector<EditParams> params;
    std::vector<oracle::EditSpec> specs;
    std::vector<double> g(static_cast<std::size_t>(m));
    for (auto& x : g) x = 0.1 + unit(rng);
    if (m > 0) normalize_weights(g);
    for (int i = 0; i < m; ++i) {
      eps_e.push_back(rv());
      EditParams e{coin(rng) ? Direction::Positive : Direction::Negative, 10.0 * unit(rng),
                   2.0 * unit(rng) - 1.0, delta(rng), g[static_cast<std::size_t>(i)]};
      params.push_back(e);
      specs.push_back({e.direction == Direction::Positive, e.edit_scale, e.threshold, e.warmup,
                       e.weight});
    }
    GuidanceConfig cfg{10.0 * unit(rng), unit(rng), 0.99 * unit(rng),
                       coin(rng) ? MuMode::Paper : MuMode::Clamped, 1.0 + 9.0 * unit(rng)};
    GuidanceState<double> state{rv(), step(rng)};
    const auto r = sega_step<double>(u, p, eps_e, params, cfg, state);
    std::vector<std::vector<double>> ee;
    for (const auto& e : eps_e) ee.push_back(oracle::to_std(e));
    const auto ref = oracle::scalar_sega_step(
        oracle::to_std(u), oracle::to_std(p), ee, specs, cfg.guidance_scale, cfg.momentum_scale,
        cfg.momentum_beta, cfg.mu_mode == MuMode::Clamped, cfg.s_max,
        oracle::to_std(state.momentum), state.step);
    for (int i = 0; i < 16; ++i) {
      worst = std::max(worst, std::abs(r.prediction[i] - ref.prediction[i]));
      worst = std::max(worst, std::abs(r.state.momentum[i] - ref.momentum[i]));
    }
  }
  return {worst <= 1e-12, "max |deviation| = " + fmt("%.3g", worst)};
}

// --- criterion 4 ------------------------------------------------------------

Outcome criterion_4() {
  std::mt19937_64 rng(1004);
  std::uniform_real_distribution<double> zd(-6.0, 6.0);
  std::uniform_int_distribution<int> coin(0, 1), tsteps(1, 50);
  double worst = 0.0;
  for (int k = 0; k < 500; ++k) {
    const auto scene = oracle::random_scene(rng);
    const bool conditional = coin(rng) == 1;
    const auto tags = oracle::random_query(rng, scene);
    const auto schedule = make_schedule(50, coin(rng) ? ScheduleKind::Cosine : ScheduleKind::LinearVp);
    const int t = tsteps(rng);
    const double a = schedule.alpha(t), w = schedule.omega(t);
    Vector z(scene.dimension());
    for (auto& x : z) x = zd(rng);
    const auto mix = conditional ? oracle::sub_mixture(scene, tags, 1.0) : oracle::as_mixture(scene);
    const auto fd = oracle::fd_eps(mix, oracle::to_std(z), a, w, 1e-5);
    const Vector eps = conditional ? eps_predict(scene, ConceptQuery::atomic(tags), z, a, w)
                                   : eps_predict(scene, std::nullopt, z, a, w);
    double num = 0.0, den = 0.0;
    for (Eigen::Index i = 0; i < z.size(); ++i) {
      num += (eps[i] - fd[i]) * (eps[i] - fd[i]);
      den += fd[i] * fd[i];
    }
    worst = std::max(worst, std::sqrt(num) / std::max(std::sqrt(den), 1e-12));
  }
  return {worst <= 1e-6, "max relative error = " + fmt("%.3g", worst)};
}

// --- criterion 5 ------------------------------------------------------------

Outcome criterion_5() {
  std::mt19937_64 rng(1005);
  std::normal_distribution<double> n;
  Vector target(16);
  for (auto& x : target) x = n(rng);
  double worst = 0.0;
  for (double beta : {0.0, 0.4, 0.9}) {
    auto state = GuidanceState<double>::zero(16);
    for (int k = 1; k <= 50; ++k) {
      state = momentum_update(state, target, beta);
      const double expected = std::pow(beta, k) * target.norm();
      worst = std::max(worst, std::abs((state.momentum - target).norm() - expected));
    }
  }
  return {worst <= 1e-10, "max |error| = " + fmt("%.3g", worst)};
}

// --- criterion 6 ------------------------------------------------------------

// Calibration run: king - male + female, 500 seeds, clamped masks.
constexpr double kCalibratedBaselineQueen = 0.0;
constexpr double kCalibratedEditedQueen = 1.0;
constexpr double kPinnedMargin = 0.95;

Outcome criterion_6() {
  ArithmeticOptions opt;
  opt.guidance.guidance_scale = 7.5;
  opt.guidance.mu_mode = MuMode::Clamped;
  opt.guidance.s_max = 2.0;
  opt.remove_params = {Direction::Negative, 2.0, kDefaultNegativeThreshold, 5, 0.5};
  opt.add_params = {Direction::Positive, 2.0, kDefaultPositiveThreshold, 5, 0.5};
  opt.steps = 50;
  opt.schedule = ScheduleKind::Cosine;
  opt.seeds = seed_range(0, 500);
  opt.threads = cli::thread_count();
  const auto r = arithmetic_consistency(royal_court_scene(), {"royal", "male"}, {"male"},
                                        {"female"}, opt);
  const double base = r.base_target_fraction, edited = r.edited_target_fraction;
  const bool pass = base < 0.05 && edited > 0.80 && edited - base >= kPinnedMargin &&
                    base == kCalibratedBaselineQueen && edited == kCalibratedEditedQueen;
  return {pass, "queen fraction " + fmt("%.3f", base) + " -> " + fmt("%.3f", edited) +
                    " (margin " + fmt("%.3f", edited - base) + ", pinned >= " +
                    fmt("%.2f", kPinnedMargin) + ")"};
}

// --- criterion 7 ------------------------------------------------------------

constexpr double kPinnedSpearman = -1.0;

Outcome criterion_7() {
  RunConfig c;
  c.scene = royal_court_scene();
  c.prompt = ConceptQuery::atomic({"royal"});
  c.edits = {{ConceptQuery::atomic({"male"}),
              {Direction::Negative, 0.0, kDefaultNegativeThreshold, 5, 1.0}}};
  c.guidance.guidance_scale = 1.0;
  c.guidance.mu_mode = MuMode::Clamped;
  c.guidance.s_max = 10.0;
  c.sampler.steps = 50;
  const std::vector<double> scales{0.0, 0.1, 0.2, 0.5, 1.0};
  const auto rep = strength_sweep(c, 0, scales, seed_range(0, 100), TagSet{"male"},
                                  cli::thread_count());
  std::string curve;
  for (const auto& p : rep.points) curve += (curve.empty() ? "" : ", ") + fmt("%.3f", p.posterior.mean);
  return {rep.rank_correlation <= -0.9 && rep.rank_correlation == kPinnedSpearman,
          "spearman = " + fmt("%.3f", rep.rank_correlation) + ", p(male) = [" + curve + "]"};
}

// --- criterion 8 ------------------------------------------------------------

Outcome criterion_8() {
  std::mt19937_64 rng(1008);
  std::normal_distribution<double> n;
  std::uniform_real_distribution<double> s_e(0.0, 20.0);
  int violations = 0;
  for (int k = 0; k < 1000; ++k) {
    NoiseEstimate<double> p(16), e(16);
    for (auto& x : p) x = n(rng);
    for (auto& x : e) x = n(rng);
    const double scale = s_e(rng);
    long previous = 17;
    for (int j = 0; j <= 10; ++j) {
      const double lambda = -1.0 + 0.2 * j;
      const long active =
          (edit_mask_scale(p, e, scale, lambda, Direction::Positive).array() != 0.0).count();
      if (active > previous) ++violations;
      previous = active;
    }
  }
  return {violations == 0, std::to_string(violations) + " violations"};
}

// --- criterion 9 ------------------------------------------------------------

int invoke(std::vector<std::string> args) {
  args.insert(args.begin(), "sega");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  return cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Outcome criterion_9() {
  const fs::path root = fs::temp_directory_path() / "sega_acceptance_c9";
  fs::remove_all(root);
  const std::string cfg = std::string(SEGA_CONFIG_DIR) + "/king_to_queen.json";
  const std::string sweep_cfg = std::string(SEGA_CONFIG_DIR) + "/remove_male_sweep.json";

  bool identical = true;
  for (int i = 0; i < 2; ++i) {
    const fs::path d = root / ("run" + std::to_string(i));
    identical = identical && invoke({"sample", cfg, "--out", d.string(), "--quiet", "--svg",
                                     "--overrides", "sampler.num_samples=100"}) == 0;
    identical = identical && invoke({"sweep", sweep_cfg, "--s-e", "0,0.5,1", "--num-seeds", "10",
                                     "--out", (d / "sweep").string(), "--quiet"}) == 0;
  }
  for (const char* f : {"samples.csv", "metrics.json", "config.normalized.json", "samples.svg",
                        "sweep/sweep.json", "sweep/sweep_point_0.csv"})
    identical = identical && fs::exists(root / "run0" / f) &&
                slurp(root / "run0" / f) == slurp(root / "run1" / f);

  std::mt19937_64 rng(1009);
  int round_trips = 0;
  for (int k = 0; k < 50; ++k) {
    const auto parsed = parse(oracle::random_config_document(rng)).config;
    const auto text = emit_normalized(parsed);
    const auto again = parse(std::string_view(text)).config;
    if (again == parsed && emit_normalized(again) == text) ++round_trips;
  }

  const std::vector<std::string> violations{
      "guidance.s_m=2",        "guidance.s_m=-0.1",     "guidance.beta_m=1",
      "guidance.beta_m=-0.5",  "edits[0].lambda=1.5",   "edits[0].lambda=-1.01",
      "edits[0].s_e=-1",       "edits[0].s_e=5000.1",   "edits[1].delta=-1",
      "edits[1].delta=21"};
  int rejected = 0;
  for (const auto& v : violations)
    if (invoke({"validate", cfg, "--overrides", v}) == cli::kConfigError) ++rejected;
  fs::remove_all(root);

  const bool pass = identical && round_trips == 50 &&
                    rejected == static_cast<int>(violations.size());
  return {pass, std::string(identical ? "artifacts byte-identical" : "artifacts differ") + ", " +
                    std::to_string(round_trips) + "/50 round trips, " + std::to_string(rejected) +
                    "/" + std::to_string(violations.size()) + " range violations exit 2"};
}

// --- criterion 10 -----------------------------------------------------------

Outcome criterion_10() {
  std::mt19937_64 rng(1010);
  std::uniform_real_distribution<double> zd(-6.0, 6.0);
  std::uniform_int_distribution<int> tsteps(1, 50);
  const auto schedule = make_schedule(50, ScheduleKind::Cosine);
  double worst = 0.0;
  for (int k = 0; k < 200; ++k) {
    const auto scene = oracle::random_scene(rng);
    const auto a = oracle::random_query(rng, scene), b = oracle::random_query(rng, scene);
    auto pooled = oracle::sub_mixture(scene, a, 0.5);
    const auto second = oracle::sub_mixture(scene, b, 0.5);
    pooled.insert(pooled.end(), second.begin(), second.end());
    const int t = tsteps(rng);
    Vector z(scene.dimension());
    for (auto& x : z) x = zd(rng);
    const auto ref = oracle::analytic_eps(pooled, oracle::to_std(z), schedule.alpha(t),
                                          schedule.omega(t));
    const Vector got = eps_predict(scene, composite_query({a, b}, {0.5, 0.5}), z,
                                   schedule.alpha(t), schedule.omega(t));
    for (Eigen::Index i = 0; i < z.size(); ++i) worst = std::max(worst, std::abs(got[i] - ref[i]));
  }
  return {worst <= 1e-10, "max |deviation| = " + fmt("%.3g", worst)};
}

}  // namespace

int main() {
  struct Criterion {
    const char* name;
    double budget_s;
    std::function<Outcome()> run;
  };
  const std::vector<Criterion> criteria{
      {"CFG reduction", 5.0, criterion_1},
      {"warm-up transparency", 5.0, criterion_2},
      {"elementwise oracle equivalence", 1.0, criterion_3},
      {"analytic score correctness", 5.0, criterion_4},
      {"momentum convergence", 1.0, criterion_5},
      {"concept arithmetic", 30.0, criterion_6},
      {"graded control", 60.0, criterion_7},
      {"mask monotonicity", 1.0, criterion_8},
      {"determinism and round trip", 5.0, criterion_9},
      {"composite conditioning", 2.0, criterion_10},
  };
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[i].run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const bool in_time = secs < criteria[i].budget_s;
    const bool pass = o.pass && in_time;
    failures += pass ? 0 : 1;
    std::printf("%s  %2zu %-32s %s; %.2f s (budget %.0f s)%s\n", pass ? "PASS" : "FAIL", i + 1,
                criteria[i].name, o.detail.c_str(), secs, criteria[i].budget_s,
                in_time ? "" : " over budget");
  }
  std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failures,
              criteria.size());
  return failures == 0 ? 0 : 1;
}
