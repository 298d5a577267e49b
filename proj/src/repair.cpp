#include "fairdtmc/repair.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "fairdtmc/abstraction.hpp"
#include "fairdtmc/error.hpp"
#include "parallel.hpp"

namespace fairdtmc {

double fitness(double prob_diff, double accuracy, double alpha) {
  if (!(prob_diff >= 0.0 && prob_diff <= 1.0)) throw ArgumentError("prob_diff must lie in [0, 1]");
  if (!(accuracy >= 0.0 && accuracy <= 1.0)) throw ArgumentError("accuracy must lie in [0, 1]");
  if (!(alpha > 0.0 && alpha < 1.0)) throw ArgumentError("alpha must lie in (0, 1)");
  return prob_diff + alpha * (1.0 - accuracy);
}

// ---------------------------------------------------------------------------
// Evaluation set

EvaluationSet::EvaluationSet(const Network& net, const InputDistribution& dist, std::size_t n_eval,
                             std::size_t protected_feature, std::size_t workers)
    : workers_(workers) {
  if (n_eval == 0) throw ArgumentError("n_eval must be >= 1");
  if (protected_feature >= net.input_width()) throw ArgumentError("protected feature out of range");
  const FeatureSpec& pf = net.features()[protected_feature];
  group_count_ = pf.cardinality();
  Sampler sampler(dist, net.features());
  inputs_ = sampler.batch(0, n_eval, workers);
  std::vector<std::size_t> per_group(static_cast<std::size_t>(group_count_), 0);
  for (const Vector& x : inputs_) {
    const int g = static_cast<int>(std::lround(x[static_cast<Eigen::Index>(protected_feature)]));
    groups_.push_back(g);
    ++per_group[static_cast<std::size_t>(g)];
  }
  // Zero-weight groups are never sampled; only populated groups are compared.
  std::size_t populated = 0;
  for (std::size_t g = 0; g < per_group.size(); ++g) {
    const auto it = dist.weights.find(pf.name);
    const bool possible = it == dist.weights.end() || it->second[g] > 0.0;
    if (per_group[g] > 0) ++populated;
    else if (possible)
      throw ArgumentError("no evaluation samples for " + pf.value_name(static_cast<int>(g)) +
                          "; increase n_eval");
  }
  if (populated < 2) throw ArgumentError("evaluation set covers fewer than two groups");
}

double EvaluationSet::prob_diff(const Network& net, std::size_t label) const {
  std::vector<std::uint8_t> hit(inputs_.size(), 0);
  detail::parallel_for(inputs_.size(), workers_, [&](std::size_t i) {
    hit[i] = net.predict_label(net.forward(inputs_[i])) == label ? 1 : 0;
  });
  std::vector<double> positive(static_cast<std::size_t>(group_count_), 0.0);
  std::vector<double> total(static_cast<std::size_t>(group_count_), 0.0);
  for (std::size_t i = 0; i < inputs_.size(); ++i) {
    total[static_cast<std::size_t>(groups_[i])] += 1.0;
    positive[static_cast<std::size_t>(groups_[i])] += hit[i];
  }
  double lo = 1.0;
  double hi = 0.0;
  for (std::size_t g = 0; g < total.size(); ++g) {
    if (total[g] == 0.0) continue;
    const double p = positive[g] / total[g];
    lo = std::min(lo, p);
    hi = std::max(hi, p);
  }
  return hi - lo;
}

double estimate_prob_diff(const Network& net, InputDistribution dist, std::size_t protected_feature,
                          std::size_t label, std::size_t n_eval, std::uint64_t seed) {
  dist.seed = seed;
  return EvaluationSet(net, dist, n_eval, protected_feature).prob_diff(net, label);
}

// ---------------------------------------------------------------------------
// Search vector

Vector SearchVector::originals() const {
  Vector v(static_cast<Eigen::Index>(coordinates.size()));
  for (std::size_t i = 0; i < coordinates.size(); ++i) v[static_cast<Eigen::Index>(i)] = coordinates[i].original;
  return v;
}

void SearchVector::install(Network& net, const Vector& x) const {
  for (std::size_t i = 0; i < coordinates.size(); ++i)
    net.set_parameter(coordinates[i].address, x[static_cast<Eigen::Index>(i)]);
}

std::pair<double, double> weight_bounds(double w) {
  if (std::abs(w) < 1e-6) return {-0.1, 0.1};
  if (w > 0.0) return {0.0, 2.0 * w};
  return {2.0 * w, 0.0};
}

SearchVector build_search_vector(const Network& net, std::span<const std::string> targets) {
  using B = WeightAddress::Block;
  std::vector<WeightAddress> addresses;
  const bool recurrent = net.kind() == NetworkKind::recurrent;

  auto neuron_rows = [&](std::size_t layer, std::size_t row) {
    if (recurrent) {
      const RecurrentCell& c = *net.cell();
      for (std::size_t j = 0; j < c.step_width(); ++j) addresses.push_back({B::cell_input, 0, row, j});
      for (std::size_t j = 0; j < c.hidden_width(); ++j) addresses.push_back({B::cell_hidden, 0, row, j});
      addresses.push_back({B::cell_bias, 0, row, 0});
      return;
    }
    const Layer& l = net.layers()[layer];
    for (std::size_t j = 0; j < l.in_width(); ++j) addresses.push_back({B::weight, layer, row, j});
    addresses.push_back({B::bias, layer, row, 0});
  };

  for (const std::string& id : targets) {
    const Target t = parse_target(id, net);
    if (const auto* f = std::get_if<FeatureTarget>(&t)) {
      if (recurrent) {
        const RecurrentCell& c = *net.cell();
        const std::size_t col = f->feature % c.step_width();
        for (std::size_t r = 0; r < c.hidden_width(); ++r) addresses.push_back({B::cell_input, 0, r, col});
      } else {
        const Layer& l = net.layers().front();
        for (std::size_t r = 0; r < l.out_width(); ++r) addresses.push_back({B::weight, 0, r, f->feature});
      }
    } else if (const auto* n = std::get_if<NeuronTarget>(&t)) {
      neuron_rows(n->layer, n->neuron);
    } else {
      const std::size_t layer = std::get<LayerTarget>(t).layer;
      const std::size_t rows = recurrent ? net.cell()->hidden_width() : net.layers()[layer].out_width();
      for (std::size_t r = 0; r < rows; ++r) neuron_rows(layer, r);
    }
  }

  SearchVector sv;
  std::set<WeightAddress> seen;
  for (const WeightAddress& a : addresses) {
    if (!seen.insert(a).second) continue;
    const double w = net.parameter(a);
    const auto [lo, hi] = weight_bounds(w);
    sv.coordinates.push_back({a, w, lo, hi});
  }
  return sv;
}

// ---------------------------------------------------------------------------
// Swarm

UniformDraw uniform_draw(SplitMix64& rng) {
  return [&rng](double c) { return rng.uniform() * c; };
}

namespace {

void clamp_to(const SearchVector& bounds, Vector& x) {
  for (std::size_t i = 0; i < bounds.size(); ++i) {
    const auto ii = static_cast<Eigen::Index>(i);
    x[ii] = std::clamp(x[ii], bounds.coordinates[i].lo, bounds.coordinates[i].hi);
  }
}

std::vector<Evaluation> evaluate_all(const std::vector<Particle>& ps, const FitnessFn& fn,
                                     std::size_t workers) {
  std::vector<Evaluation> out(ps.size());
  detail::parallel_for(ps.size(), workers, [&](std::size_t i) { out[i] = fn(ps[i].x); });
  return out;
}

}  // namespace

Swarm init_swarm(const SearchVector& bounds, std::size_t size, const FitnessFn& fitness_fn,
                 SplitMix64& rng, std::size_t workers) {
  if (size == 0) throw ArgumentError("swarm needs at least one particle");
  if (bounds.size() == 0) throw ArgumentError("empty search vector");
  const Vector origin = bounds.originals();
  const auto dim = origin.size();
  Swarm swarm;
  swarm.particles.resize(size);
  for (std::size_t p = 0; p < size; ++p) {
    Particle& part = swarm.particles[p];
    part.x = origin;
    part.v = Vector::Zero(dim);
    if (p > 0) {
      for (Eigen::Index i = 0; i < dim; ++i) {
        const Coordinate& c = bounds.coordinates[static_cast<std::size_t>(i)];
        part.x[i] += (rng.uniform() * 0.2 - 0.1) * (c.hi - c.lo);
      }
      clamp_to(bounds, part.x);
    }
  }
  const std::vector<Evaluation> evals = evaluate_all(swarm.particles, fitness_fn, workers);
  std::size_t best = 0;
  for (std::size_t p = 0; p < size; ++p) {
    swarm.particles[p].p_best = swarm.particles[p].x;
    swarm.particles[p].p_best_eval = evals[p];
    if (evals[p].fitness < evals[best].fitness) best = p;
  }
  swarm.g_best = swarm.particles[best].x;
  swarm.g_best_eval = evals[best];
  return swarm;
}

void pso_step(Swarm& swarm, const SearchVector& bounds, const FitnessFn& fitness_fn,
              const UniformDraw& draw, std::size_t workers) {
  for (Particle& p : swarm.particles) {
    for (Eigen::Index i = 0; i < p.x.size(); ++i) {
      const double r1 = draw(swarm.c1);
      const double r2 = draw(swarm.c2);
      p.v[i] = swarm.omega * p.v[i] + r1 * (p.p_best[i] - p.x[i]) + r2 * (swarm.g_best[i] - p.x[i]);
      p.x[i] += p.v[i];
    }
    clamp_to(bounds, p.x);
  }

  const std::vector<Evaluation> evals = evaluate_all(swarm.particles, fitness_fn, workers);
  bool improved = false;
  for (std::size_t k = 0; k < swarm.particles.size(); ++k) {
    Particle& p = swarm.particles[k];
    if (evals[k].fitness < p.p_best_eval.fitness) {
      p.p_best = p.x;
      p.p_best_eval = evals[k];
    }
    if (p.p_best_eval.fitness < swarm.g_best_eval.fitness) {
      swarm.g_best = p.p_best;
      swarm.g_best_eval = p.p_best_eval;
      improved = true;
    }
  }
  ++swarm.iteration;
  swarm.stall_count = improved ? 0 : swarm.stall_count + 1;
}

// ---------------------------------------------------------------------------
// Repair

RepairOutput repair_network(const Network& net, const SensitivityRanking& ranking,
                            const Dataset& dataset, const RepairConfig& config) {
  if (ranking.entries.empty()) throw ArgumentError("repair needs a non-empty sensitivity ranking");
  if (config.top_k == 0) throw ArgumentError("K must be >= 1");
  if (dataset.empty()) throw ArgumentError("repair needs a non-empty dataset");
  if (config.label >= net.labels().size()) throw ArgumentError("label out of range");

  RepairResult result;
  for (std::size_t i = 0; i < std::min(config.top_k, ranking.entries.size()); ++i)
    result.targets.push_back(ranking.entries[i].target);
  result.search = build_search_vector(net, result.targets);
  const SearchVector& search = result.search;

  const EvaluationSet eval(net, config.distribution, config.n_eval, config.protected_feature,
                           config.workers);
  result.prob_diff_before = eval.prob_diff(net, config.label);
  result.accuracy_before = eval_accuracy(net, dataset);

  if (result.prob_diff_before <= config.xi) {
    result.prob_diff_after = result.prob_diff_before;
    result.accuracy_after = result.accuracy_before;
    result.fairness_achieved = true;
    result.stop_reason = "already fair";
    return {net, std::move(result)};
  }

  const FitnessFn fitness_fn = [&](const Vector& x) {
    Network candidate = net;
    search.install(candidate, x);
    Evaluation e;
    e.prob_diff = eval.prob_diff(candidate, config.label);
    e.accuracy = eval_accuracy(candidate, dataset);
    e.fitness = fitness(e.prob_diff, e.accuracy, config.alpha);
    return e;
  };

  SplitMix64 rng(config.seed);
  Swarm swarm = init_swarm(search, config.swarm_size, fitness_fn, rng, 1);
  const UniformDraw draw = uniform_draw(rng);
  result.g_best_history.push_back(swarm.g_best_eval.fitness);
  if (config.on_iteration) config.on_iteration(swarm, search);

  result.stop_reason = "iteration limit";
  while (swarm.g_best_eval.prob_diff > config.xi) {
    if (swarm.iteration >= config.max_iterations) break;
    if (swarm.stall_count >= config.stall_limit) {
      result.stop_reason = "stalled";
      break;
    }
    pso_step(swarm, search, fitness_fn, draw, 1);
    result.g_best_history.push_back(swarm.g_best_eval.fitness);
    if (config.on_iteration) config.on_iteration(swarm, search);
  }
  if (swarm.g_best_eval.prob_diff <= config.xi) result.stop_reason = "fairness satisfied";

  Network repaired = net;
  search.install(repaired, swarm.g_best);
  result.iterations = swarm.iteration;
  result.prob_diff_after = swarm.g_best_eval.prob_diff;
  result.accuracy_after = swarm.g_best_eval.accuracy;
  result.fairness_achieved = result.prob_diff_after <= config.xi;
  return {std::move(repaired), std::move(result)};
}

}  // namespace fairdtmc
