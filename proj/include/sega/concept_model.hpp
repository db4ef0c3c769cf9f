#pragma once

// Analytic epsilon-prediction backend: a tag-annotated diagonal Gaussian
// mixture whose diffused score is available in closed form.

#include <Eigen/Core>

#include <optional>
#include <span>
#include <set>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace sega {

using Vector = Eigen::VectorXd;
using TagSet = std::set<std::string>;

class ConceptError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct Component {
  Vector mean;
  Vector variances;
  double weight = 1.0;
  TagSet tags;

  friend bool operator==(const Component& a, const Component& b) {
    return a.mean == b.mean && a.variances == b.variances && a.weight == b.weight &&
           a.tags == b.tags;
  }
};

/// Scales `weights` to sum to one unless they already do within 1e-12.
/// Leaving near-normalized input untouched keeps normalization idempotent.
void normalize_weights(std::vector<double>& weights);

/// Immutable mixture with weights normalized at construction.
class MixtureScene {
 public:
  MixtureScene() = default;
  explicit MixtureScene(std::vector<Component> components);

  Eigen::Index dimension() const { return dim_; }
  const std::vector<Component>& components() const { return components_; }
  std::size_t size() const { return components_.size(); }

  friend bool operator==(const MixtureScene&, const MixtureScene&) = default;

 private:
  std::vector<Component> components_;
  Eigen::Index dim_ = 0;
};

/// A conjunction of tags, or a weighted blend of such conjunctions.
/// An atomic query is a composite with a single part of weight one.
struct ConceptQuery {
  std::vector<TagSet> parts;
  std::vector<double> weights;

  static ConceptQuery atomic(TagSet tags) { return {{std::move(tags)}, {1.0}}; }
  bool is_atomic() const { return parts.size() == 1; }
  const TagSet& tags() const { return parts.front(); }

  friend bool operator==(const ConceptQuery&, const ConceptQuery&) = default;
};

ConceptQuery composite_query(std::vector<TagSet> queries, std::vector<double> weights);

/// Component indices carrying every tag in `tags`, with renormalized weights.
struct SubMixture {
  std::vector<std::size_t> indices;
  std::vector<double> weights;
};

SubMixture select(const MixtureScene& scene, const TagSet& tags);

/// Effective mixture weights for a (possibly composite) query, one entry per
/// scene component (zero for components outside the query).
std::vector<double> query_weights(const MixtureScene& scene, const ConceptQuery& query);

/// Exact marginal (mean, per-element variance) of a component after diffusion
/// with signal level alpha and noise level omega.
std::pair<Vector, Vector> marginal_at(const Component& component, double alpha, double omega);

/// Posterior responsibilities of each component at z under the diffused mixture
/// with the given per-component weights (zero-weight components get 0).
Vector responsibilities(const MixtureScene& scene, std::span<const double> weights,
                        const Vector& z, double alpha, double omega);

/// eps = -omega * grad_z log p_t(z | query); no query means the full mixture.
Vector eps_predict(const MixtureScene& scene, const std::optional<ConceptQuery>& query,
                   const Vector& z, double alpha, double omega);

/// Posterior mass (at t = 0) of the components matching `tags`.
double posterior_tag_probability(const MixtureScene& scene, const Vector& x, const TagSet& tags);

/// Index of the most responsible component at t = 0.
std::size_t argmax_component(const MixtureScene& scene, const Vector& x);

/// Mean and per-element variance of the data distribution restricted to `query`.
std::pair<Vector, Vector> query_moments(const MixtureScene& scene, const ConceptQuery& query);

std::string format_tags(const TagSet& tags);

/// Four unit-variance components in 2D: king (-3,3), queen (3,3),
/// commoner-male (-3,-3), commoner-female (3,-3), equal weights.
MixtureScene royal_court_scene();

}  // namespace sega
