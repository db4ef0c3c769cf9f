#include "sega/concept_model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>

namespace sega {

namespace {

double log_sum_exp(std::span<const double> values) {
  double peak = -std::numeric_limits<double>::infinity();
  for (double v : values) peak = std::max(peak, v);
  if (!std::isfinite(peak)) return peak;
  double acc = 0.0;
  for (double v : values) acc += std::exp(v - peak);
  return peak + std::log(acc);
}

double log_normal_diag(const Vector& z, const Vector& mean, const Vector& var) {
  const double log_two_pi = std::log(2.0 * std::numbers::pi);
  double acc = 0.0;
  for (Eigen::Index i = 0; i < z.size(); ++i) {
    const double d = z[i] - mean[i];
    acc += log_two_pi + std::log(var[i]) + d * d / var[i];
  }
  return -0.5 * acc;
}

// log w_k + log N_k(z) under the diffused marginals; -inf for zero weights.
std::vector<double> joint_log_terms(const MixtureScene& scene, std::span<const double> weights,
                                    const Vector& z, double alpha, double omega) {
  std::vector<double> terms(scene.size(), -std::numeric_limits<double>::infinity());
  for (std::size_t k = 0; k < scene.size(); ++k) {
    if (weights[k] <= 0.0) continue;
    const auto [m, v] = marginal_at(scene.components()[k], alpha, omega);
    terms[k] = std::log(weights[k]) + log_normal_diag(z, m, v);
  }
  return terms;
}

std::vector<double> scene_weights(const MixtureScene& scene) {
  std::vector<double> w;
  w.reserve(scene.size());
  for (const auto& c : scene.components()) w.push_back(c.weight);
  return w;
}

void check_point(const MixtureScene& scene, const Vector& z) {
  if (z.size() != scene.dimension())
    throw ConceptError("point has dimension " + std::to_string(z.size()) + ", scene has " +
                       std::to_string(scene.dimension()));
  if (!z.allFinite()) throw ConceptError("point has non-finite elements");
}

}  // namespace

void normalize_weights(std::vector<double>& weights) {
  const double total = std::accumulate(weights.begin(), weights.end(), 0.0);
  if (!(total > 0.0) || !std::isfinite(total)) throw ConceptError("weights must have positive sum");
  if (std::abs(total - 1.0) <= 1e-12) return;
  for (double& w : weights) w /= total;
}

MixtureScene::MixtureScene(std::vector<Component> components)
    : components_(std::move(components)) {
  if (components_.empty()) throw ConceptError("scene needs at least one component");
  dim_ = components_.front().mean.size();
  if (dim_ < 1) throw ConceptError("scene dimension must be >= 1");
  std::vector<double> w;
  for (std::size_t k = 0; k < components_.size(); ++k) {
    const auto& c = components_[k];
    const std::string where = "component " + std::to_string(k) + ": ";
    if (c.mean.size() != dim_ || c.variances.size() != dim_)
      throw ConceptError(where + "dimension mismatch");
    if (!c.mean.allFinite()) throw ConceptError(where + "mean must be finite");
    if (!((c.variances.array() > 0.0).all() && c.variances.allFinite()))
      throw ConceptError(where + "variances must be positive");
    if (!(c.weight > 0.0) || !std::isfinite(c.weight))
      throw ConceptError(where + "weight must be positive");
    if (c.tags.empty()) throw ConceptError(where + "tags must be non-empty");
    w.push_back(c.weight);
  }
  normalize_weights(w);
  for (std::size_t k = 0; k < components_.size(); ++k) components_[k].weight = w[k];
}

ConceptQuery composite_query(std::vector<TagSet> queries, std::vector<double> weights) {
  if (queries.empty()) throw ConceptError("composite query needs at least one part");
  if (queries.size() != weights.size())
    throw ConceptError("composite query: " + std::to_string(queries.size()) + " queries but " +
                       std::to_string(weights.size()) + " weights");
  for (double w : weights)
    if (!(w > 0.0) || !std::isfinite(w))
      throw ConceptError("composite query weights must be positive");
  normalize_weights(weights);
  return {std::move(queries), std::move(weights)};
}

SubMixture select(const MixtureScene& scene, const TagSet& tags) {
  SubMixture sub;
  for (std::size_t k = 0; k < scene.size(); ++k) {
    const auto& have = scene.components()[k].tags;
    if (std::includes(have.begin(), have.end(), tags.begin(), tags.end())) {
      sub.indices.push_back(k);
      sub.weights.push_back(scene.components()[k].weight);
    }
  }
  if (sub.indices.empty()) throw ConceptError("no component matches tags " + format_tags(tags));
  normalize_weights(sub.weights);
  return sub;
}

std::vector<double> query_weights(const MixtureScene& scene, const ConceptQuery& query) {
  if (query.parts.size() != query.weights.size() || query.parts.empty())
    throw ConceptError("malformed concept query");
  std::vector<double> w(scene.size(), 0.0);
  for (std::size_t p = 0; p < query.parts.size(); ++p) {
    const SubMixture sub = select(scene, query.parts[p]);
    for (std::size_t j = 0; j < sub.indices.size(); ++j)
      w[sub.indices[j]] += query.weights[p] * sub.weights[j];
  }
  return w;
}

std::pair<Vector, Vector> marginal_at(const Component& component, double alpha, double omega) {
  Vector mean = alpha * component.mean;
  Vector var = (alpha * alpha) * component.variances.array() + omega * omega;
  return {std::move(mean), std::move(var)};
}

Vector responsibilities(const MixtureScene& scene, std::span<const double> weights,
                        const Vector& z, double alpha, double omega) {
  check_point(scene, z);
  const auto terms = joint_log_terms(scene, weights, z, alpha, omega);
  const double norm = log_sum_exp(terms);
  Vector r(static_cast<Eigen::Index>(scene.size()));
  for (std::size_t k = 0; k < scene.size(); ++k)
    r[static_cast<Eigen::Index>(k)] = weights[k] > 0.0 ? std::exp(terms[k] - norm) : 0.0;
  return r;
}

Vector eps_predict(const MixtureScene& scene, const std::optional<ConceptQuery>& query,
                   const Vector& z, double alpha, double omega) {
  const auto weights = query ? query_weights(scene, *query) : scene_weights(scene);
  const Vector r = responsibilities(scene, weights, z, alpha, omega);
  Vector eps = Vector::Zero(z.size());
  for (std::size_t k = 0; k < scene.size(); ++k) {
    const double rk = r[static_cast<Eigen::Index>(k)];
    if (rk == 0.0) continue;
    const auto [m, v] = marginal_at(scene.components()[k], alpha, omega);
    eps.array() += rk * (z - m).array() / v.array();
  }
  return omega * eps;
}

double posterior_tag_probability(const MixtureScene& scene, const Vector& x, const TagSet& tags) {
  check_point(scene, x);
  const auto terms = joint_log_terms(scene, scene_weights(scene), x, 1.0, 0.0);
  std::vector<double> matching;
  for (std::size_t k = 0; k < scene.size(); ++k) {
    const auto& have = scene.components()[k].tags;
    matching.push_back(std::includes(have.begin(), have.end(), tags.begin(), tags.end())
                           ? terms[k]
                           : -std::numeric_limits<double>::infinity());
  }
  const double p = std::exp(log_sum_exp(matching) - log_sum_exp(terms));
  return std::clamp(p, 0.0, 1.0);
}

std::size_t argmax_component(const MixtureScene& scene, const Vector& x) {
  check_point(scene, x);
  const auto terms = joint_log_terms(scene, scene_weights(scene), x, 1.0, 0.0);
  return static_cast<std::size_t>(std::max_element(terms.begin(), terms.end()) - terms.begin());
}

std::pair<Vector, Vector> query_moments(const MixtureScene& scene, const ConceptQuery& query) {
  const auto w = query_weights(scene, query);
  Vector mean = Vector::Zero(scene.dimension());
  Vector second = Vector::Zero(scene.dimension());
  for (std::size_t k = 0; k < scene.size(); ++k) {
    const auto& c = scene.components()[k];
    mean += w[k] * c.mean;
    second.array() += w[k] * (c.variances.array() + c.mean.array().square());
  }
  Vector var = second.array() - mean.array().square();
  return {std::move(mean), std::move(var)};
}

std::string format_tags(const TagSet& tags) {
  std::string out = "{";
  for (const auto& t : tags) {
    if (out.size() > 1) out += ",";
    out += t;
  }
  return out + "}";
}

MixtureScene royal_court_scene() {
  const Vector unit = Vector::Ones(2);
  return MixtureScene({
      {Vector{{-3.0, 3.0}}, unit, 1.0, {"royal", "male"}},
      {Vector{{3.0, 3.0}}, unit, 1.0, {"royal", "female"}},
      {Vector{{-3.0, -3.0}}, unit, 1.0, {"common", "male"}},
      {Vector{{3.0, -3.0}}, unit, 1.0, {"common", "female"}},
  });
}

}  // namespace sega
