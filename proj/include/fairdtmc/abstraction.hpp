#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "fairdtmc/model.hpp"

namespace fairdtmc {

/// An input coordinate.
struct FeatureTarget {
  std::size_t feature = 0;
  friend auto operator<=>(const FeatureTarget&, const FeatureTarget&) = default;
};

/// One scalar hidden activation. `layer` indexes hidden layers of a
/// feed-forward net; recurrent nets have a single cell, layer 0.
struct NeuronTarget {
  std::size_t layer = 0;
  std::size_t neuron = 0;
  friend auto operator<=>(const NeuronTarget&, const NeuronTarget&) = default;
};

/// A whole hidden activation vector (clustered with vector k-means).
struct LayerTarget {
  std::size_t layer = 0;
  friend auto operator<=>(const LayerTarget&, const LayerTarget&) = default;
};

using Target = std::variant<FeatureTarget, NeuronTarget, LayerTarget>;

/// "feature:<name>", "neuron:<layer>:<index>", "layer:<layer>".
std::string target_id(const Target& t, const Network& net);

/// Accepts the ids above, plus "feature:<index>", "cell" (layer:0) and
/// "cell:<j>" (neuron:0:j).
Target parse_target(std::string_view text, const Network& net);

/// Maps a scalar or vector value to one of k abstract values.
class Discretizer {
 public:
  enum class Method { bins, kmeans };

  /// Equal-width bins described by the k-1 interior edges.
  static Discretizer from_edges(std::vector<double> edges);
  static Discretizer from_centroids(std::vector<Vector> centroids);

  Method method() const { return method_; }
  std::size_t k() const { return method_ == Method::bins ? edges_.size() + 1 : centroids_.size(); }
  const std::vector<double>& edges() const { return edges_; }
  const std::vector<Vector>& centroids() const { return centroids_; }
  std::size_t dimension() const;

  /// Out-of-range values clamp to the end bins.
  std::size_t assign(double value) const;
  /// Nearest centroid; ties go to the lowest index.
  std::size_t assign(const Vector& value) const;

 private:
  Method method_ = Method::bins;
  std::vector<double> edges_;
  std::vector<Vector> centroids_;
};

Discretizer bin_fit(std::span<const double> values, std::size_t k);

/// Lloyd's algorithm from a k-means++ start, to a fixed point or 100 iterations.
/// Centroids come back sorted by first coordinate. If `distortion` is given it
/// receives the within-cluster sum of squares after every assignment step.
Discretizer kmeans_fit(std::span<const Vector> points, std::size_t k, std::uint64_t seed,
                       std::vector<double>* distortion = nullptr);
Discretizer kmeans_fit(std::span<const double> values, std::size_t k, std::uint64_t seed,
                       std::vector<double>* distortion = nullptr);

/// A named group of chain states representing one feature or neuron.
struct TargetGroup {
  std::string id;
  std::vector<std::size_t> states;
};

/// Network-independent view of a chain's states, enough for checking and
/// sensitivity analysis.
struct ChainLayout {
  std::vector<std::string> states;
  std::size_t start = 0;
  std::vector<std::size_t> protected_states;
  std::vector<std::size_t> outcome_states;
  std::vector<TargetGroup> targets;

  std::size_t m() const { return states.size(); }
  std::size_t index_of(std::string_view id) const;
  bool is_outcome(std::size_t s) const;
};

/// The abstract state set S: Start, one state per protected value, one per
/// (target, cluster), one per label. States are laid out in trace order.
class StateSpace {
 public:
  struct Block {
    Target target;
    std::string id;
    Discretizer discretizer;
    std::size_t first_state = 0;
  };

  const ChainLayout& layout() const { return layout_; }
  std::size_t m() const { return layout_.m(); }
  const std::vector<std::string>& states() const { return layout_.states; }
  const std::vector<Block>& blocks() const { return blocks_; }
  std::size_t protected_feature() const { return protected_feature_; }
  NetworkKind kind() const { return kind_; }

  /// Tier of a state: 0 Start, 1 protected, 2.. targets, last tier outcomes.
  std::size_t tier(std::size_t state) const { return tiers_[state]; }
  std::size_t tier_count() const { return blocks_.size() + 3; }

  /// Maps a concrete trace to its abstract state sequence.
  std::vector<std::size_t> abstract_trace(const ActivationTrace& trace) const;

 private:
  friend StateSpace build_state_space(const Network&, std::size_t, std::span<const Target>,
                                      const std::map<std::string, Discretizer>&);

  ChainLayout layout_;
  std::vector<Block> blocks_;
  std::vector<std::size_t> tiers_;
  std::size_t protected_feature_ = 0;
  int protected_cardinality_ = 0;
  NetworkKind kind_ = NetworkKind::feedforward;
};

/// Builds S for `net`. `discretizers` is keyed by target_id(). Targets are
/// reordered into tier order: features by index, then hidden targets by
/// (layer, neuron) with a whole-layer target before that layer's neurons.
StateSpace build_state_space(const Network& net, std::size_t protected_feature,
                             std::span<const Target> selected,
                             const std::map<std::string, Discretizer>& discretizers);

/// How one target should be discretized.
struct TargetConfig {
  Target target;
  Discretizer::Method method = Discretizer::Method::kmeans;
  std::size_t k = 2;
};

/// Fits a discretizer per target. Input features use their declared range
/// for binning; everything else is fit on the pilot traces.
std::map<std::string, Discretizer> fit_discretizers(const Network& net,
                                                    std::span<const TargetConfig> targets,
                                                    std::span<const ActivationTrace> pilot,
                                                    std::uint64_t seed);

}  // namespace fairdtmc
