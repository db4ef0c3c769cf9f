#include "sega/config.hpp"

#include <cmath>
#include <limits>
#include <set>
#include <variant>

namespace sega {

using nlohmann::json;

namespace {

std::string child(const std::string& path, const std::string& key) {
  return path.empty() ? key : path + "." + key;
}

std::string index(const std::string& path, std::size_t i) {
  return path + "[" + std::to_string(i) + "]";
}

const char* type_name(const json& v) { return v.type_name(); }

class Reader {
 public:
  explicit Reader(const ParseOptions& options) : options_(options) {}

  std::vector<std::string> take_warnings() { return std::move(warnings_); }
  void warn(std::string message) { warnings_.push_back(std::move(message)); }

  const json& object(const json& v, const std::string& path,
                     std::initializer_list<const char*> allowed) {
    if (!v.is_object()) throw ConfigError(path, std::string("expected object, got ") + type_name(v));
    std::set<std::string> known(allowed.begin(), allowed.end());
    for (const auto& [key, _] : v.items()) {
      if (known.count(key)) continue;
      if (options_.strict) throw ConfigError(child(path, key), "unknown key");
      warn(child(path, key) + ": unknown key ignored");
    }
    return v;
  }

  static const json* find(const json& obj, const char* key) {
    auto it = obj.find(key);
    return it == obj.end() ? nullptr : &*it;
  }

  static const json& require(const json& obj, const char* key, const std::string& path) {
    const json* v = find(obj, key);
    if (!v) throw ConfigError(child(path, key), "missing required key");
    return *v;
  }

  static double number(const json& v, const std::string& path) {
    if (!v.is_number()) throw ConfigError(path, std::string("expected number, got ") + type_name(v));
    const double x = v.get<double>();
    if (!std::isfinite(x)) throw ConfigError(path, "must be finite");
    return x;
  }

  static std::int64_t integer(const json& v, const std::string& path) {
    if (v.is_number_integer()) {
      if (v.is_number_unsigned() &&
          v.get<std::uint64_t>() > static_cast<std::uint64_t>(std::numeric_limits<std::int64_t>::max()))
        throw ConfigError(path, "integer out of range");
      return v.get<std::int64_t>();
    }
    if (v.is_number_float()) {
      const double x = v.get<double>();
      if (std::isfinite(x) && std::floor(x) == x && std::abs(x) < 9.0e15)
        return static_cast<std::int64_t>(x);
    }
    throw ConfigError(path, std::string("expected integer, got ") + type_name(v));
  }

  static std::string string(const json& v, const std::string& path) {
    if (!v.is_string()) throw ConfigError(path, std::string("expected string, got ") + type_name(v));
    return v.get<std::string>();
  }

  static bool boolean(const json& v, const std::string& path) {
    if (!v.is_boolean()) throw ConfigError(path, std::string("expected boolean, got ") + type_name(v));
    return v.get<bool>();
  }

  static const json& array(const json& v, const std::string& path) {
    if (!v.is_array()) throw ConfigError(path, std::string("expected array, got ") + type_name(v));
    return v;
  }

  static Vector vector(const json& v, const std::string& path) {
    array(v, path);
    Vector out(static_cast<Eigen::Index>(v.size()));
    for (std::size_t i = 0; i < v.size(); ++i)
      out[static_cast<Eigen::Index>(i)] = number(v[i], index(path, i));
    return out;
  }

  static TagSet tags(const json& v, const std::string& path, bool allow_empty) {
    array(v, path);
    TagSet out;
    for (std::size_t i = 0; i < v.size(); ++i) {
      auto tag = string(v[i], index(path, i));
      if (tag.empty()) throw ConfigError(index(path, i), "tag must be non-empty");
      out.insert(std::move(tag));
    }
    if (!allow_empty && out.empty()) throw ConfigError(path, "must list at least one tag");
    return out;
  }

 private:
  ParseOptions options_;
  std::vector<std::string> warnings_;
};

MixtureScene read_scene(Reader& r, const json& v, const std::string& path) {
  r.object(v, path, {"dimension", "components"});
  const auto dim = Reader::integer(Reader::require(v, "dimension", path), child(path, "dimension"));
  if (dim < 1) throw ConfigError(child(path, "dimension"), "must be >= 1");
  const std::string cpath = child(path, "components");
  const json& comps = Reader::array(Reader::require(v, "components", path), cpath);
  if (comps.empty()) throw ConfigError(cpath, "must contain at least one component");
  std::vector<Component> out;
  for (std::size_t k = 0; k < comps.size(); ++k) {
    const std::string p = index(cpath, k);
    r.object(comps[k], p, {"mean", "variances", "weight", "tags"});
    Component c;
    c.mean = Reader::vector(Reader::require(comps[k], "mean", p), child(p, "mean"));
    c.variances = Reader::vector(Reader::require(comps[k], "variances", p), child(p, "variances"));
    if (c.mean.size() != dim)
      throw ConfigError(child(p, "mean"), "length " + std::to_string(c.mean.size()) +
                                              " does not match dimension " + std::to_string(dim));
    if (c.variances.size() != dim)
      throw ConfigError(child(p, "variances"), "length " + std::to_string(c.variances.size()) +
                                                   " does not match dimension " +
                                                   std::to_string(dim));
    for (Eigen::Index i = 0; i < dim; ++i)
      if (!(c.variances[i] > 0.0))
        throw ConfigError(index(child(p, "variances"), static_cast<std::size_t>(i)),
                          "must be > 0");
    c.weight = 1.0;
    if (const json* w = Reader::find(comps[k], "weight")) {
      c.weight = Reader::number(*w, child(p, "weight"));
      if (!(c.weight > 0.0)) throw ConfigError(child(p, "weight"), "must be > 0");
    }
    c.tags = Reader::tags(Reader::require(comps[k], "tags", p), child(p, "tags"), false);
    out.push_back(std::move(c));
  }
  return MixtureScene(std::move(out));
}

// Every tag set must select at least one component.
void check_selectable(const MixtureScene& scene, const TagSet& tags, const std::string& path) {
  try {
    select(scene, tags);
  } catch (const ConceptError& e) {
    throw ConfigError(path, e.what());
  }
}

ConceptQuery read_prompt(Reader& r, const json& v, const std::string& path,
                         const MixtureScene& scene) {
  r.object(v, path, {"tags"});
  TagSet tags = Reader::tags(Reader::require(v, "tags", path), child(path, "tags"), true);
  check_selectable(scene, tags, child(path, "tags"));
  return ConceptQuery::atomic(std::move(tags));
}

ConceptQuery read_edit_query(Reader& r, const json& v, const std::string& path,
                             const MixtureScene& scene) {
  const json* tags = Reader::find(v, "tags");
  const json* comp = Reader::find(v, "composite");
  if (tags && comp) throw ConfigError(path, "give either \"tags\" or \"composite\", not both");
  if (tags) {
    TagSet t = Reader::tags(*tags, child(path, "tags"), true);
    check_selectable(scene, t, child(path, "tags"));
    return ConceptQuery::atomic(std::move(t));
  }
  if (!comp) throw ConfigError(path, "missing \"tags\" or \"composite\"");
  const std::string cpath = child(path, "composite");
  Reader::array(*comp, cpath);
  if (comp->empty()) throw ConfigError(cpath, "must contain at least one query");
  std::vector<TagSet> parts;
  std::vector<double> weights;
  for (std::size_t i = 0; i < comp->size(); ++i) {
    const std::string p = index(cpath, i);
    r.object((*comp)[i], p, {"tags", "weight"});
    TagSet t = Reader::tags(Reader::require((*comp)[i], "tags", p), child(p, "tags"), true);
    check_selectable(scene, t, child(p, "tags"));
    double w = 1.0;
    if (const json* wv = Reader::find((*comp)[i], "weight")) {
      w = Reader::number(*wv, child(p, "weight"));
      if (!(w > 0.0)) throw ConfigError(child(p, "weight"), "must be > 0");
    }
    parts.push_back(std::move(t));
    weights.push_back(w);
  }
  return composite_query(std::move(parts), std::move(weights));
}

std::vector<EditDirective> read_edits(Reader& r, const json& v, const std::string& path,
                                      const MixtureScene& scene) {
  Reader::array(v, path);
  std::vector<EditDirective> out;
  std::vector<double> g;
  for (std::size_t i = 0; i < v.size(); ++i) {
    const std::string p = index(path, i);
    r.object(v[i], p, {"tags", "composite", "direction", "s_e", "lambda", "delta", "g"});
    EditDirective d;
    d.query = read_edit_query(r, v[i], p, scene);
    if (const json* dir = Reader::find(v[i], "direction")) {
      const auto s = Reader::string(*dir, child(p, "direction"));
      if (s == "positive")
        d.params.direction = Direction::Positive;
      else if (s == "negative")
        d.params.direction = Direction::Negative;
      else
        throw ConfigError(child(p, "direction"), "must be \"positive\" or \"negative\"");
    }
    if (const json* x = Reader::find(v[i], "s_e")) {
      d.params.edit_scale = Reader::number(*x, child(p, "s_e"));
      if (!(d.params.edit_scale >= 0.0 && d.params.edit_scale <= 5000.0))
        throw ConfigError(child(p, "s_e"), "out of range, must satisfy s_e ∈ [0,5000]");
    }
    d.params.threshold = d.params.direction == Direction::Positive ? kDefaultPositiveThreshold
                                                                   : kDefaultNegativeThreshold;
    if (const json* x = Reader::find(v[i], "lambda")) {
      d.params.threshold = Reader::number(*x, child(p, "lambda"));
      if (!(d.params.threshold >= -1.0 && d.params.threshold <= 1.0))
        throw ConfigError(child(p, "lambda"), "out of range, must satisfy λ ∈ [−1,1]");
    }
    if (const json* x = Reader::find(v[i], "delta")) {
      const auto delta = Reader::integer(*x, child(p, "delta"));
      if (delta < 0 || delta > 20)
        throw ConfigError(child(p, "delta"), "out of range, must satisfy δ ∈ [0,20]");
      d.params.warmup = static_cast<int>(delta);
    }
    double gi = 1.0;
    if (const json* x = Reader::find(v[i], "g")) {
      gi = Reader::number(*x, child(p, "g"));
      if (!(gi >= 0.0)) throw ConfigError(child(p, "g"), "must satisfy g ≥ 0");
    }
    g.push_back(gi);
    out.push_back(std::move(d));
  }
  if (!out.empty()) {
    try {
      normalize_weights(g);
    } catch (const ConceptError&) {
      throw ConfigError(path, "edit weights g must have a positive sum");
    }
    for (std::size_t i = 0; i < out.size(); ++i) out[i].params.weight = g[i];
  }
  return out;
}

GuidanceConfig read_guidance(Reader& r, const json& v, const std::string& path) {
  r.object(v, path, {"s_g", "s_m", "beta_m", "mu_mode", "s_max"});
  GuidanceConfig g;
  if (const json* x = Reader::find(v, "s_g")) {
    g.guidance_scale = Reader::number(*x, child(path, "s_g"));
    if (!(g.guidance_scale >= 0.0)) throw ConfigError(child(path, "s_g"), "must satisfy s_g ≥ 0");
  }
  if (const json* x = Reader::find(v, "s_m")) {
    g.momentum_scale = Reader::number(*x, child(path, "s_m"));
    if (!(g.momentum_scale >= 0.0 && g.momentum_scale <= 1.0))
      throw ConfigError(child(path, "s_m"), "out of range, must satisfy s_m ∈ [0,1]");
  }
  if (const json* x = Reader::find(v, "beta_m")) {
    g.momentum_beta = Reader::number(*x, child(path, "beta_m"));
    if (!(g.momentum_beta >= 0.0 && g.momentum_beta < 1.0))
      throw ConfigError(child(path, "beta_m"), "out of range, must satisfy β_m ∈ [0,1)");
  }
  if (const json* x = Reader::find(v, "mu_mode")) {
    const auto s = Reader::string(*x, child(path, "mu_mode"));
    if (s == "paper")
      g.mu_mode = MuMode::Paper;
    else if (s == "clamped")
      g.mu_mode = MuMode::Clamped;
    else
      throw ConfigError(child(path, "mu_mode"), "must be \"paper\" or \"clamped\"");
  }
  if (const json* x = Reader::find(v, "s_max")) {
    g.s_max = Reader::number(*x, child(path, "s_max"));
    if (!(g.s_max > 0.0)) throw ConfigError(child(path, "s_max"), "must be > 0");
  }
  return g;
}

SamplerSettings read_sampler(Reader& r, const json& v, const std::string& path) {
  r.object(v, path, {"steps", "schedule", "seed", "num_samples"});
  SamplerSettings s;
  if (const json* x = Reader::find(v, "steps")) {
    const auto steps = Reader::integer(*x, child(path, "steps"));
    if (steps < 1 || steps > 10000) throw ConfigError(child(path, "steps"), "must lie in [1, 10000]");
    s.steps = static_cast<int>(steps);
  }
  if (const json* x = Reader::find(v, "schedule")) {
    const auto k = Reader::string(*x, child(path, "schedule"));
    if (k == "cosine")
      s.schedule = ScheduleKind::Cosine;
    else if (k == "linear_vp")
      s.schedule = ScheduleKind::LinearVp;
    else
      throw ConfigError(child(path, "schedule"), "must be \"cosine\" or \"linear_vp\"");
  }
  if (const json* x = Reader::find(v, "seed")) {
    if (x->is_number_unsigned()) {
      s.seed = x->get<std::uint64_t>();
    } else {
      const auto seed = Reader::integer(*x, child(path, "seed"));
      if (seed < 0) throw ConfigError(child(path, "seed"), "must be >= 0");
      s.seed = static_cast<std::uint64_t>(seed);
    }
  }
  if (const json* x = Reader::find(v, "num_samples")) {
    const auto n = Reader::integer(*x, child(path, "num_samples"));
    if (n < 1 || n > 1000000) throw ConfigError(child(path, "num_samples"), "must lie in [1, 1000000]");
    s.num_samples = static_cast<int>(n);
  }
  return s;
}

OutputSettings read_outputs(Reader& r, const json& v, const std::string& path) {
  r.object(v, path, {"dir", "csv", "metrics", "svg"});
  OutputSettings o;
  auto name = [&](const char* key, std::string& dst) {
    if (const json* x = Reader::find(v, key)) {
      dst = Reader::string(*x, child(path, key));
      if (dst.empty()) throw ConfigError(child(path, key), "must be non-empty");
    }
  };
  name("dir", o.dir);
  name("csv", o.csv);
  name("metrics", o.metrics);
  if (const json* x = Reader::find(v, "svg")) o.svg = Reader::boolean(*x, child(path, "svg"));
  return o;
}

json tags_json(const TagSet& tags) { return json(std::vector<std::string>(tags.begin(), tags.end())); }

json vector_json(const Vector& v) { return json(std::vector<double>(v.begin(), v.end())); }

// Splits "a.b[2].c" into tokens; array indices become integers.
std::vector<std::variant<std::string, std::size_t>> split_path(const std::string& path) {
  std::vector<std::variant<std::string, std::size_t>> out;
  std::string cur;
  std::size_t i = 0;
  auto flush = [&] {
    if (cur.empty()) throw ConfigError(path, "malformed override path");
    out.emplace_back(cur);
    cur.clear();
  };
  while (i < path.size()) {
    const char c = path[i];
    if (c == '.') {
      if (!cur.empty()) flush();
      else if (out.empty() || std::holds_alternative<std::string>(out.back()))
        throw ConfigError(path, "malformed override path");
      ++i;
    } else if (c == '[') {
      if (!cur.empty()) flush();
      const auto close = path.find(']', i);
      if (close == std::string::npos || close == i + 1)
        throw ConfigError(path, "malformed override path");
      const std::string digits = path.substr(i + 1, close - i - 1);
      if (digits.find_first_not_of("0123456789") != std::string::npos)
        throw ConfigError(path, "malformed override path");
      out.emplace_back(static_cast<std::size_t>(std::stoull(digits)));
      i = close + 1;
    } else {
      cur += c;
      ++i;
    }
  }
  if (!cur.empty()) flush();
  if (out.empty()) throw ConfigError(path, "empty override path");
  return out;
}

}  // namespace

ParseResult parse(const json& document, const ParseOptions& options) {
  Reader r(options);
  r.object(document, "$",
           {"schema_version", "scene", "prompt", "edits", "guidance", "sampler", "outputs"});
  if (const json* v = Reader::find(document, "schema_version")) {
    const auto version = Reader::integer(*v, "schema_version");
    if (version != kSchemaVersion)
      throw ConfigError("schema_version", "unsupported version " + std::to_string(version) +
                                              " (expected " + std::to_string(kSchemaVersion) + ")");
  }
  RunConfig c;
  c.scene = read_scene(r, Reader::require(document, "scene", ""), "scene");
  c.prompt = read_prompt(r, Reader::require(document, "prompt", ""), "prompt", c.scene);
  if (const json* v = Reader::find(document, "edits")) c.edits = read_edits(r, *v, "edits", c.scene);
  if (const json* v = Reader::find(document, "guidance")) c.guidance = read_guidance(r, *v, "guidance");
  if (const json* v = Reader::find(document, "sampler")) c.sampler = read_sampler(r, *v, "sampler");
  if (const json* v = Reader::find(document, "outputs")) c.outputs = read_outputs(r, *v, "outputs");
  return {std::move(c), r.take_warnings()};
}

ParseResult parse(std::string_view document, const ParseOptions& options) {
  json doc;
  try {
    doc = json::parse(document.begin(), document.end());
  } catch (const json::parse_error& e) {
    throw ConfigError("$", std::string("malformed JSON: ") + e.what());
  }
  return parse(doc, options);
}

void apply_overrides(json& document, const std::vector<std::string>& overrides) {
  for (const auto& item : overrides) {
    const auto eq = item.find('=');
    if (eq == std::string::npos || eq == 0)
      throw ConfigError(item, "override must have the form key.path=value");
    const std::string path = item.substr(0, eq);
    const std::string raw = item.substr(eq + 1);
    json value;
    try {
      value = json::parse(raw);
    } catch (const json::parse_error&) {
      value = raw;
    }
    json* node = &document;
    for (const auto& token : split_path(path)) {
      if (const auto* key = std::get_if<std::string>(&token)) {
        if (node->is_null()) *node = json::object();
        if (!node->is_object()) throw ConfigError(path, "override descends into a non-object");
        node = &(*node)[*key];
      } else {
        const std::size_t i = std::get<std::size_t>(token);
        if (!node->is_array() || i >= node->size())
          throw ConfigError(path, "override index out of range");
        node = &(*node)[i];
      }
    }
    *node = std::move(value);
  }
}

std::string to_string(Direction d) { return d == Direction::Positive ? "positive" : "negative"; }
std::string to_string(MuMode m) { return m == MuMode::Paper ? "paper" : "clamped"; }
std::string to_string(ScheduleKind k) { return k == ScheduleKind::Cosine ? "cosine" : "linear_vp"; }

json to_json(const RunConfig& c) {
  json scene_components = json::array();
  for (const auto& comp : c.scene.components()) {
    scene_components.push_back({{"mean", vector_json(comp.mean)},
                                {"variances", vector_json(comp.variances)},
                                {"weight", comp.weight},
                                {"tags", tags_json(comp.tags)}});
  }
  json edits = json::array();
  for (const auto& e : c.edits) {
    json item = {{"direction", to_string(e.params.direction)},
                 {"s_e", e.params.edit_scale},
                 {"lambda", e.params.threshold},
                 {"delta", e.params.warmup},
                 {"g", e.params.weight}};
    if (e.query.is_atomic()) {
      item["tags"] = tags_json(e.query.tags());
    } else {
      json parts = json::array();
      for (std::size_t i = 0; i < e.query.parts.size(); ++i)
        parts.push_back({{"tags", tags_json(e.query.parts[i])}, {"weight", e.query.weights[i]}});
      item["composite"] = std::move(parts);
    }
    edits.push_back(std::move(item));
  }
  return {
      {"schema_version", kSchemaVersion},
      {"scene", {{"dimension", c.scene.dimension()}, {"components", std::move(scene_components)}}},
      {"prompt", {{"tags", tags_json(c.prompt.tags())}}},
      {"edits", std::move(edits)},
      {"guidance",
       {{"s_g", c.guidance.guidance_scale},
        {"s_m", c.guidance.momentum_scale},
        {"beta_m", c.guidance.momentum_beta},
        {"mu_mode", to_string(c.guidance.mu_mode)},
        {"s_max", c.guidance.s_max}}},
      {"sampler",
       {{"steps", c.sampler.steps},
        {"schedule", to_string(c.sampler.schedule)},
        {"seed", c.sampler.seed},
        {"num_samples", c.sampler.num_samples}}},
      {"outputs",
       {{"dir", c.outputs.dir},
        {"csv", c.outputs.csv},
        {"metrics", c.outputs.metrics},
        {"svg", c.outputs.svg}}},
  };
}

std::string emit_normalized(const RunConfig& config) { return to_json(config).dump(2) + "\n"; }

Schedule make_schedule(const SamplerSettings& sampler) {
  return make_schedule(sampler.steps, sampler.schedule);
}

}  // namespace sega
