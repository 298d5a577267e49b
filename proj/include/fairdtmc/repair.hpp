#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "fairdtmc/model.hpp"
#include "fairdtmc/rng.hpp"
#include "fairdtmc/sampler.hpp"
#include "fairdtmc/sensitivity.hpp"

namespace fairdtmc {

/// fitness = prob_diff + alpha * (1 - accuracy). Lower is better.
double fitness(double prob_diff, double accuracy, double alpha);

/// A fixed set of sampled inputs used to score candidate networks.
class EvaluationSet {
 public:
  EvaluationSet(const Network& net, const InputDistribution& dist, std::size_t n_eval,
                std::size_t protected_feature, std::size_t workers = 1);

  /// Max pairwise difference of the empirical P(label | protected = f).
  double prob_diff(const Network& net, std::size_t label) const;

  std::size_t size() const { return inputs_.size(); }

 private:
  std::vector<Vector> inputs_;
  std::vector<int> groups_;
  int group_count_ = 0;
  std::size_t workers_ = 1;
};

/// Samples `n_eval` inputs from `dist` reseeded with `seed` and returns the
/// empirical group difference for `label`. Throws if a group gets no samples.
double estimate_prob_diff(const Network& net, InputDistribution dist, std::size_t protected_feature,
                          std::size_t label, std::size_t n_eval, std::uint64_t seed);

struct Coordinate {
  WeightAddress address;
  double original = 0.0;
  double lo = 0.0;
  double hi = 0.0;
};

/// Weight coordinates the swarm is allowed to move, with their bounds.
struct SearchVector {
  std::vector<Coordinate> coordinates;

  std::size_t size() const { return coordinates.size(); }
  Vector originals() const;
  void install(Network& net, const Vector& x) const;
};

/// Search interval for one weight: [0, 2w] for w > 0, [2w, 0] for w < 0, and
/// [-0.1, 0.1] when |w| < 1e-6.
std::pair<double, double> weight_bounds(double w);

/// For each target id: a hidden neuron contributes its incoming weight row and
/// bias; a whole layer contributes every row; an input feature contributes its
/// outgoing first-layer weights.
SearchVector build_search_vector(const Network& net, std::span<const std::string> targets);

struct Evaluation {
  double fitness = 0.0;
  double prob_diff = 0.0;
  double accuracy = 1.0;
};

struct Particle {
  Vector x;
  Vector v;
  Vector p_best;
  Evaluation p_best_eval;
};

struct Swarm {
  std::vector<Particle> particles;
  Vector g_best;
  Evaluation g_best_eval;
  double omega = 0.729;
  double c1 = 1.49445;
  double c2 = 1.49445;
  std::size_t iteration = 0;
  std::size_t stall_count = 0;
};

using FitnessFn = std::function<Evaluation(const Vector& x)>;
/// Returns a uniform draw from [0, c].
using UniformDraw = std::function<double(double c)>;

UniformDraw uniform_draw(SplitMix64& rng);

/// Swarm with particle 0 at `origin` and the rest perturbed uniformly within
/// +-10% of each bound interval; velocities zero; every particle evaluated.
Swarm init_swarm(const SearchVector& bounds, std::size_t size, const FitnessFn& fitness_fn,
                 SplitMix64& rng, std::size_t workers = 1);

/// One synchronous PSO iteration:
///   v <- omega v + R(0,c1)(p_i - x) + R(0,c2)(p_g - x);  x <- clamp(x + v)
/// with per-dimension draws. Bests move only on strict improvement; the stall
/// counter resets when g_best improves and increments otherwise.
void pso_step(Swarm& swarm, const SearchVector& bounds, const FitnessFn& fitness_fn,
              const UniformDraw& draw, std::size_t workers = 1);

struct RepairConfig {
  std::size_t top_k = 10;
  double xi = 0.1;
  double alpha = 0.1;
  std::size_t n_eval = 5000;
  std::size_t swarm_size = 20;
  std::size_t max_iterations = 100;
  std::size_t stall_limit = 10;
  std::size_t label = 1;
  std::size_t protected_feature = 0;
  InputDistribution distribution;  // seed reused for the evaluation set
  std::uint64_t seed = 0;          // PSO draws
  std::size_t workers = 1;
  /// Observer called after initialization and after every iteration.
  std::function<void(const Swarm&, const SearchVector&)> on_iteration;
};

struct RepairResult {
  double prob_diff_before = 0.0;
  double prob_diff_after = 0.0;
  double accuracy_before = 0.0;
  double accuracy_after = 0.0;
  std::size_t iterations = 0;
  bool fairness_achieved = false;
  std::string stop_reason;
  std::vector<std::string> targets;
  SearchVector search;
  std::vector<double> g_best_history;
};

struct RepairOutput {
  Network network;
  RepairResult result;
};

/// PSO over the weights of the top-K ranked targets. Stops when the best
/// particle meets xi, after `stall_limit` iterations without improvement, or
/// after `max_iterations`.
RepairOutput repair_network(const Network& net, const SensitivityRanking& ranking,
                            const Dataset& dataset, const RepairConfig& config);

}  // namespace fairdtmc
