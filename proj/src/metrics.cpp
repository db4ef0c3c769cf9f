#include "sega/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace sega {

using nlohmann::json;

namespace {

std::vector<double> posteriors(std::span<const Vector> samples, const MixtureScene& scene,
                               const TagSet& tags) {
  std::vector<double> out;
  out.reserve(samples.size());
  for (const auto& x : samples) out.push_back(posterior_tag_probability(scene, x, tags));
  return out;
}

std::vector<double> average_ranks(std::span<const double> v) {
  std::vector<std::size_t> order(v.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return v[a] < v[b]; });
  std::vector<double> ranks(v.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
    const double rank = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = rank;
    i = j + 1;
  }
  return ranks;
}

json tags_json(const TagSet& tags) { return json(std::vector<std::string>(tags.begin(), tags.end())); }

json estimate_json(const MeanEstimate& e) {
  return {{"mean", e.mean}, {"standard_error", e.standard_error}, {"count", e.count}};
}

}  // namespace

MeanEstimate estimate_mean(std::span<const double> values) {
  MeanEstimate e;
  e.count = values.size();
  if (values.empty()) return e;
  const double n = static_cast<double>(values.size());
  e.mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
  if (values.size() > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - e.mean) * (v - e.mean);
    e.standard_error = std::sqrt(ss / (n - 1.0)) / std::sqrt(n);
  }
  return e;
}

double argmax_fraction(std::span<const Vector> samples, const MixtureScene& scene,
                       const TagSet& tags) {
  if (samples.empty()) return 0.0;
  std::size_t hits = 0;
  for (const auto& x : samples) {
    const auto& have = scene.components()[argmax_component(scene, x)].tags;
    if (std::includes(have.begin(), have.end(), tags.begin(), tags.end())) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(samples.size());
}

ShiftReport concept_shift(std::span<const Vector> samples_base, std::span<const Vector> samples_edited,
                          const MixtureScene& scene, const TagSet& target,
                          std::span<const TagSet> tracked) {
  if (samples_base.empty() || samples_edited.empty())
    throw std::invalid_argument("concept_shift: sample sets must be non-empty");
  ShiftReport r;
  r.target = target;
  r.base_count = samples_base.size();
  r.edited_count = samples_edited.size();
  std::vector<TagSet> queries{target};
  for (const auto& t : tracked)
    if (std::find(queries.begin(), queries.end(), t) == queries.end()) queries.push_back(t);
  for (const auto& q : queries) {
    r.posteriors.push_back({q, estimate_mean(posteriors(samples_base, scene, q)),
                            estimate_mean(posteriors(samples_edited, scene, q))});
  }
  r.base_target_fraction = argmax_fraction(samples_base, scene, target);
  r.edited_target_fraction = argmax_fraction(samples_edited, scene, target);
  return r;
}

std::optional<double> spearman(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw std::invalid_argument("spearman: length mismatch");
  if (x.size() < 2) return std::nullopt;
  const auto rx = average_ranks(x);
  const auto ry = average_ranks(y);
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / n;
  const double my = std::accumulate(ry.begin(), ry.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) return std::nullopt;
  return sxy / std::sqrt(sxx * syy);
}

SweepReport strength_sweep(const RunConfig& config, std::size_t edit_index,
                           std::span<const double> edit_scales, std::span<const std::uint64_t> seeds,
                           std::optional<TagSet> target, unsigned threads) {
  if (edit_index >= config.edits.size())
    throw std::invalid_argument("strength_sweep: edit index " + std::to_string(edit_index) +
                                " out of range (" + std::to_string(config.edits.size()) +
                                " edits)");
  if (edit_scales.size() < 3)
    throw std::invalid_argument("strength_sweep: need at least 3 s_e values");
  for (std::size_t i = 1; i < edit_scales.size(); ++i)
    if (!(edit_scales[i] > edit_scales[i - 1]))
      throw std::invalid_argument("strength_sweep: s_e values must be strictly increasing");
  for (double s : edit_scales)
    if (!(s >= 0.0) || !std::isfinite(s))
      throw std::invalid_argument("strength_sweep: s_e values must be >= 0");
  if (seeds.empty()) throw std::invalid_argument("strength_sweep: need at least one seed");

  SweepReport report;
  report.edit_index = edit_index;
  const auto& edit = config.edits[edit_index];
  report.target = target ? *target : (edit.query.is_atomic() ? edit.query.tags() : config.prompt.tags());
  report.seeds.assign(seeds.begin(), seeds.end());
  if (seeds.size() == 1)
    report.warnings.push_back("single seed per point: standard errors reported as 0");

  const Schedule schedule = make_schedule(config.sampler);
  auto directives = config.edits;
  std::vector<double> means;
  for (double s_e : edit_scales) {
    directives[edit_index].params.edit_scale = s_e;
    auto runs = sample_batch(config.scene, config.prompt, directives, config.guidance, schedule,
                             seeds, threads);
    SweepPoint point;
    point.edit_scale = s_e;
    for (auto& run : runs) point.samples.push_back(std::move(run.x0));
    point.posterior = estimate_mean(posteriors(point.samples, config.scene, report.target));
    means.push_back(point.posterior.mean);
    report.points.push_back(std::move(point));
  }
  if (auto rho = spearman(edit_scales, means)) {
    report.rank_correlation = *rho;
  } else {
    report.rank_correlation = 0.0;
    report.warnings.push_back("mean posterior constant across the sweep: rank correlation reported as 0");
  }
  return report;
}

ShiftReport arithmetic_consistency(const MixtureScene& scene, const TagSet& base,
                                   const TagSet& remove, const TagSet& add,
                                   const ArithmeticOptions& options) {
  if (options.seeds.empty()) throw std::invalid_argument("arithmetic_consistency: no seeds");
  TagSet target;
  std::set_difference(base.begin(), base.end(), remove.begin(), remove.end(),
                      std::inserter(target, target.end()));
  target.insert(add.begin(), add.end());

  EditParams rm = options.remove_params;
  EditParams ad = options.add_params;
  rm.direction = Direction::Negative;
  ad.direction = Direction::Positive;
  std::vector<double> g{rm.weight, ad.weight};
  normalize_weights(g);
  rm.weight = g[0];
  ad.weight = g[1];
  const std::vector<EditDirective> directives{{ConceptQuery::atomic(remove), rm},
                                              {ConceptQuery::atomic(add), ad}};
  const auto prompt = ConceptQuery::atomic(base);
  const Schedule schedule = make_schedule(options.steps, options.schedule);

  auto collect = [&](std::span<const EditDirective> d) {
    std::vector<Vector> xs;
    for (auto& run :
         sample_batch(scene, prompt, d, options.guidance, schedule, options.seeds, options.threads))
      xs.push_back(std::move(run.x0));
    return xs;
  };
  const auto base_samples = collect({});
  const auto edited_samples = collect(directives);
  const std::vector<TagSet> tracked{base, remove, add};
  ShiftReport r = concept_shift(base_samples, edited_samples, scene, target, tracked);
  r.seeds = options.seeds;
  return r;
}

json to_json(const ShiftReport& r) {
  json posts = json::array();
  for (const auto& q : r.posteriors)
    posts.push_back({{"tags", tags_json(q.tags)},
                     {"base", estimate_json(q.base)},
                     {"edited", estimate_json(q.edited)}});
  return {{"target", tags_json(r.target)},
          {"posteriors", std::move(posts)},
          {"base_target_fraction", r.base_target_fraction},
          {"edited_target_fraction", r.edited_target_fraction},
          {"base_count", r.base_count},
          {"edited_count", r.edited_count},
          {"seeds", r.seeds}};
}

json to_json(const SweepReport& r) {
  json points = json::array();
  for (const auto& p : r.points)
    points.push_back({{"s_e", p.edit_scale},
                      {"mean_posterior", p.posterior.mean},
                      {"standard_error", p.posterior.standard_error},
                      {"count", p.posterior.count}});
  return {{"edit_index", r.edit_index},
          {"target", tags_json(r.target)},
          {"points", std::move(points)},
          {"spearman", r.rank_correlation},
          {"seeds", r.seeds},
          {"warnings", r.warnings}};
}

}  // namespace sega
