#include "sega/cli.hpp"

#include "sega/metrics.hpp"
#include "sega/svg.hpp"

#include <CLI11.hpp>

#include <charconv>
#include <chrono>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

namespace sega::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string shortest(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::string column_name(const TagSet& tags) {
  std::string s = "p[";
  bool first = true;
  for (const auto& t : tags) {
    if (!first) s += "+";
    s += t;
    first = false;
  }
  return s + "]";
}

json tags_json(const TagSet& tags) { return json(std::vector<std::string>(tags.begin(), tags.end())); }

json vector_json(const Vector& v) { return json(std::vector<double>(v.begin(), v.end())); }

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError(path.string(), "cannot read config file");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

ParseResult load(const CommonArgs& args) {
  const std::string text = read_file(args.config_path);
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError("$", std::string("malformed JSON: ") + e.what());
  }
  apply_overrides(doc, args.overrides);
  return parse(doc);
}

// Prompt first, then each edit's tag sets, without duplicates.
std::vector<TagSet> tracked_queries(const RunConfig& c) {
  std::vector<TagSet> out{c.prompt.tags()};
  for (const auto& e : c.edits)
    for (const auto& part : e.query.parts)
      if (std::find(out.begin(), out.end(), part) == out.end()) out.push_back(part);
  return out;
}

std::string samples_csv(const MixtureScene& scene, std::span<const std::uint64_t> seeds,
                        std::span<const Vector> samples, std::span<const TagSet> tracked) {
  std::string csv = "seed,sample_index";
  for (Eigen::Index i = 0; i < scene.dimension(); ++i) csv += ",x_" + std::to_string(i);
  for (const auto& q : tracked) csv += "," + column_name(q);
  csv += "\n";
  for (std::size_t n = 0; n < samples.size(); ++n) {
    csv += std::to_string(seeds[n]) + "," + std::to_string(n);
    for (double v : samples[n]) csv += "," + shortest(v);
    for (const auto& q : tracked) csv += "," + shortest(posterior_tag_probability(scene, samples[n], q));
    csv += "\n";
  }
  return csv;
}

json sample_metrics(const RunConfig& c, std::span<const Vector> samples,
                    std::span<const SampleTrajectory> runs, std::span<const TagSet> tracked,
                    const std::vector<std::string>& warnings) {
  const auto d = c.scene.dimension();
  const double n = static_cast<double>(samples.size());
  Vector mean = Vector::Zero(d);
  for (const auto& x : samples) mean += x;
  mean /= n;
  Vector var = Vector::Zero(d);
  for (const auto& x : samples) var.array() += (x - mean).array().square();
  if (samples.size() > 1) var /= (n - 1.0);
  const auto [pm, pv] = query_moments(c.scene, c.prompt);

  json posts = json::array();
  for (const auto& q : tracked) {
    std::vector<double> p;
    for (const auto& x : samples) p.push_back(posterior_tag_probability(c.scene, x, q));
    const auto e = estimate_mean(p);
    posts.push_back({{"tags", tags_json(q)},
                     {"mean", e.mean},
                     {"standard_error", e.standard_error},
                     {"argmax_fraction", argmax_fraction(samples, c.scene, q)}});
  }
  json comps = json::array();
  std::vector<std::size_t> counts(c.scene.size(), 0);
  for (const auto& x : samples) ++counts[argmax_component(c.scene, x)];
  for (std::size_t k = 0; k < c.scene.size(); ++k)
    comps.push_back({{"component", k},
                     {"tags", tags_json(c.scene.components()[k].tags)},
                     {"fraction", static_cast<double>(counts[k]) / n}});

  std::size_t guided_steps = 0;
  double final_momentum = 0.0;
  for (const auto& r : runs) {
    for (const auto& rec : r.records) guided_steps += rec.guidance_applied ? 1 : 0;
    final_momentum += r.final_state.momentum.norm() / n;
  }
  return {{"num_samples", samples.size()},
          {"steps", c.sampler.steps},
          {"seeds", {{"first", c.sampler.seed}, {"count", samples.size()}}},
          {"sample_mean", vector_json(mean)},
          {"sample_variance", vector_json(var)},
          {"prompt_moments", {{"mean", vector_json(pm)}, {"variance", vector_json(pv)}}},
          {"posteriors", std::move(posts)},
          {"argmax_components", std::move(comps)},
          {"guided_steps_per_chain", static_cast<double>(guided_steps) / n},
          {"mean_final_momentum_norm", final_momentum},
          {"warnings", warnings}};
}

void report(const InvocationResult& r, const std::string& command, bool quiet, std::ostream& out) {
  std::vector<std::string> paths;
  for (const auto& p : r.artifacts) paths.push_back(p.string());
  if (quiet) {
    out << json{{"command", command},
                {"exit_code", r.exit_code},
                {"artifacts", paths},
                {"steps", r.steps},
                {"wall_time_s", r.wall_seconds},
                {"warnings", r.warnings}}
               .dump()
        << "\n";
    return;
  }
  for (const auto& p : paths) out << "wrote " << p << "\n";
  out << command << ": " << r.steps << " steps per chain in " << r.wall_seconds << " s\n";
}

template <typename Body>
InvocationResult guarded(const std::string& command, bool quiet, std::ostream& out,
                         std::ostream& err, Body&& body) {
  const auto start = std::chrono::steady_clock::now();
  InvocationResult result;
  try {
    body(result);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    result.exit_code = kConfigError;
  } catch (const std::invalid_argument& e) {
    err << "config error: " << e.what() << "\n";
    result.exit_code = kConfigError;
  } catch (const SamplingError& e) {
    err << "runtime error: " << e.what() << "\n";
    result.exit_code = kRuntimeError;
  } catch (const std::exception& e) {
    err << "runtime error: " << e.what() << "\n";
    result.exit_code = kRuntimeError;
  }
  result.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  for (const auto& w : result.warnings) err << "warning: " << w << "\n";
  if (result.exit_code == kOk || quiet) report(result, command, quiet, out);
  return result;
}

}  // namespace

void write_atomic(const fs::path& path, const std::string& content) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("cannot write " + tmp.string());
    f << content;
    f.flush();
    if (!f) throw std::runtime_error("cannot write " + tmp.string());
  }
  fs::rename(tmp, path);
}

unsigned thread_count() {
  unsigned hw = std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("SEGA_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && v > 0) return static_cast<unsigned>(v);
  }
  return hw;
}

InvocationResult cmd_validate(const CommonArgs& args, std::ostream& out, std::ostream& err) {
  InvocationResult result;
  try {
    auto parsed = load(args);
    result.warnings = parsed.warnings;
    out << emit_normalized(parsed.config);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    result.exit_code = kConfigError;
  } catch (const std::exception& e) {
    err << "config error: " << e.what() << "\n";
    result.exit_code = kConfigError;
  }
  for (const auto& w : result.warnings) err << "warning: " << w << "\n";
  return result;
}

InvocationResult cmd_sample(const CommonArgs& args, std::ostream& out, std::ostream& err) {
  return guarded("sample", args.quiet, out, err, [&](InvocationResult& result) {
    auto parsed = load(args);
    const RunConfig& c = parsed.config;
    result.warnings = parsed.warnings;
    result.steps = c.sampler.steps;
    const fs::path dir = args.out_dir ? *args.out_dir : fs::path(c.outputs.dir);

    const Schedule schedule = make_schedule(c.sampler);
    const auto seeds = seed_range(c.sampler.seed, static_cast<std::size_t>(c.sampler.num_samples));
    const auto runs =
        sample_batch(c.scene, c.prompt, c.edits, c.guidance, schedule, seeds, thread_count());
    std::vector<Vector> samples;
    for (const auto& r : runs) samples.push_back(r.x0);
    const auto tracked = tracked_queries(c);

    const fs::path csv = dir / c.outputs.csv;
    write_atomic(csv, samples_csv(c.scene, seeds, samples, tracked));
    result.artifacts.push_back(csv);
    const fs::path echo = dir / "config.normalized.json";
    write_atomic(echo, emit_normalized(c));
    result.artifacts.push_back(echo);
    const fs::path metrics = dir / c.outputs.metrics;
    write_atomic(metrics, sample_metrics(c, samples, runs, tracked, result.warnings).dump(2) + "\n");
    result.artifacts.push_back(metrics);
    if (args.svg || c.outputs.svg) {
      const fs::path plot = dir / "samples.svg";
      write_atomic(plot, svg::sample_scatter(c.scene, samples,
                                             "final samples, prompt " + format_tags(c.prompt.tags())));
      result.artifacts.push_back(plot);
    }
  });
}

InvocationResult cmd_sweep(const CommonArgs& args, const SweepArgs& sweep, std::ostream& out,
                           std::ostream& err) {
  return guarded("sweep", args.quiet, out, err, [&](InvocationResult& result) {
    auto parsed = load(args);
    const RunConfig& c = parsed.config;
    result.warnings = parsed.warnings;
    result.steps = c.sampler.steps;
    const fs::path dir = args.out_dir ? *args.out_dir : fs::path(c.outputs.dir);
    const int n = sweep.num_seeds.value_or(c.sampler.num_samples);
    if (n < 1) throw ConfigError("--num-seeds", "must be >= 1");
    const auto seeds = seed_range(c.sampler.seed, static_cast<std::size_t>(n));

    const SweepReport rep =
        strength_sweep(c, sweep.edit_index, sweep.edit_scales, seeds, sweep.target, thread_count());
    result.warnings.insert(result.warnings.end(), rep.warnings.begin(), rep.warnings.end());

    for (std::size_t i = 0; i < rep.points.size(); ++i) {
      const fs::path csv = dir / ("sweep_point_" + std::to_string(i) + ".csv");
      const std::vector<TagSet> tracked{rep.target};
      write_atomic(csv, samples_csv(c.scene, seeds, rep.points[i].samples, tracked));
      result.artifacts.push_back(csv);
    }
    const fs::path js = dir / "sweep.json";
    write_atomic(js, to_json(rep).dump(2) + "\n");
    result.artifacts.push_back(js);
    if (args.svg || c.outputs.svg) {
      const fs::path plot = dir / "sweep.svg";
      write_atomic(plot, svg::sweep_plot(rep, "strength sweep, edit " +
                                                  std::to_string(sweep.edit_index)));
      result.artifacts.push_back(plot);
    }
  });
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Semantic guidance on an analytic Gaussian-mixture diffusion backend", "sega"};
  app.require_subcommand(1);

  CommonArgs common;
  SweepArgs sweep;
  std::string target_tags;
  int num_seeds = 0;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("config", common.config_path, "Run configuration (JSON)")->required();
    sub->add_option("--overrides", common.overrides, "Dotted key overrides, e.g. guidance.s_m=0.5")
        ->expected(1, -1);
    sub->add_option_function<std::string>(
        "--out", [&](const std::string& s) { common.out_dir = fs::path(s); },
        "Output directory (default: outputs.dir)");
    sub->add_flag("--quiet", common.quiet, "Only print a JSON summary on stdout");
    sub->add_flag("--svg", common.svg, "Also write an SVG plot");
  };

  auto* sample = app.add_subcommand("sample", "Run the sampler for num_samples seeds");
  add_common(sample);
  auto* sw = app.add_subcommand("sweep", "Sweep s_e of one edit and report graded control");
  add_common(sw);
  sw->add_option("--edit-index", sweep.edit_index, "Edit to sweep")->default_val(0);
  sw->add_option("--s-e", sweep.edit_scales, "Strictly increasing s_e values")
      ->delimiter(',')
      ->required();
  auto* seeds_opt = sw->add_option("--num-seeds", num_seeds, "Seeds per point");
  auto* target_opt = sw->add_option("--target", target_tags, "Comma-separated target tags");
  auto* validate = app.add_subcommand("validate", "Parse and print the normalized config");
  add_common(validate);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return kConfigError;
  }

  if (seeds_opt->count() > 0) sweep.num_seeds = num_seeds;
  if (target_opt->count() > 0) {
    TagSet tags;
    std::stringstream ss(target_tags);
    for (std::string t; std::getline(ss, t, ',');)
      if (!t.empty()) tags.insert(t);
    sweep.target = std::move(tags);
  }

  if (sample->parsed()) return cmd_sample(common, out, err).exit_code;
  if (sw->parsed()) return cmd_sweep(common, sweep, out, err).exit_code;
  return cmd_validate(common, out, err).exit_code;
}

}  // namespace sega::cli
