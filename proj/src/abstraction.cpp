#include "fairdtmc/abstraction.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>

#include "fairdtmc/error.hpp"
#include "fairdtmc/rng.hpp"

namespace fairdtmc {

namespace {

std::size_t hidden_layer_count(const Network& net) {
  return net.kind() == NetworkKind::feedforward ? net.layers().size() - 1 : 1;
}

std::size_t hidden_width(const Network& net, std::size_t layer) {
  if (net.kind() == NetworkKind::recurrent) return net.cell()->hidden_width();
  return net.layers()[layer].out_width();
}

void check_target(const Target& t, const Network& net) {
  if (const auto* f = std::get_if<FeatureTarget>(&t)) {
    if (f->feature >= net.input_width())
      throw ArgumentError("feature target " + std::to_string(f->feature) + " out of range");
    return;
  }
  const std::size_t layer = std::holds_alternative<NeuronTarget>(t) ? std::get<NeuronTarget>(t).layer
                                                                    : std::get<LayerTarget>(t).layer;
  if (layer >= hidden_layer_count(net))
    throw ArgumentError("hidden layer " + std::to_string(layer) + " out of range");
  if (const auto* n = std::get_if<NeuronTarget>(&t); n && n->neuron >= hidden_width(net, layer))
    throw ArgumentError("neuron " + std::to_string(n->neuron) + " out of range in layer " +
                        std::to_string(layer));
}

std::size_t parse_index(std::string_view s, std::string_view whole) {
  std::size_t v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size())
    throw ArgumentError("malformed target '" + std::string(whole) + "'");
  return v;
}

// Tier ordering key: features first by index, then hidden targets by layer
// with the whole-layer target ahead of that layer's neurons.
std::tuple<int, std::size_t, std::size_t> tier_key(const Target& t) {
  if (const auto* f = std::get_if<FeatureTarget>(&t)) return {0, f->feature, 0};
  if (const auto* l = std::get_if<LayerTarget>(&t)) return {1, l->layer, 0};
  const auto& n = std::get<NeuronTarget>(t);
  return {1, n.layer, n.neuron + 1};
}

double sq_dist(const Vector& a, const Vector& b) { return (a - b).squaredNorm(); }

}  // namespace

std::string target_id(const Target& t, const Network& net) {
  if (const auto* f = std::get_if<FeatureTarget>(&t)) {
    if (f->feature < net.input_width()) return "feature:" + net.features()[f->feature].name;
    return "feature:" + std::to_string(f->feature);
  }
  if (const auto* n = std::get_if<NeuronTarget>(&t))
    return "neuron:" + std::to_string(n->layer) + ":" + std::to_string(n->neuron);
  return "layer:" + std::to_string(std::get<LayerTarget>(t).layer);
}

Target parse_target(std::string_view text, const Network& net) {
  Target t;
  if (text == "cell") {
    t = LayerTarget{0};
  } else if (text.starts_with("cell:")) {
    t = NeuronTarget{0, parse_index(text.substr(5), text)};
  } else if (text.starts_with("feature:")) {
    const std::string_view rest = text.substr(8);
    bool found = false;
    for (const auto& f : net.features())
      if (f.name == rest) {
        t = FeatureTarget{f.index};
        found = true;
      }
    if (!found) t = FeatureTarget{parse_index(rest, text)};
  } else if (text.starts_with("neuron:")) {
    const std::string_view rest = text.substr(7);
    const auto colon = rest.find(':');
    if (colon == std::string_view::npos)
      throw ArgumentError("malformed target '" + std::string(text) + "'");
    t = NeuronTarget{parse_index(rest.substr(0, colon), text), parse_index(rest.substr(colon + 1), text)};
  } else if (text.starts_with("layer:")) {
    t = LayerTarget{parse_index(text.substr(6), text)};
  } else {
    throw ArgumentError("unknown target '" + std::string(text) + "'");
  }
  check_target(t, net);
  return t;
}

// ---------------------------------------------------------------------------
// Discretizer

Discretizer Discretizer::from_edges(std::vector<double> edges) {
  for (std::size_t i = 1; i < edges.size(); ++i)
    if (!(edges[i - 1] < edges[i])) throw ArgumentError("bin edges must be strictly increasing");
  Discretizer d;
  d.method_ = Method::bins;
  d.edges_ = std::move(edges);
  return d;
}

Discretizer Discretizer::from_centroids(std::vector<Vector> centroids) {
  if (centroids.empty()) throw ArgumentError("need at least one centroid");
  const auto dim = centroids.front().size();
  for (std::size_t i = 0; i < centroids.size(); ++i) {
    if (centroids[i].size() != dim) throw ArgumentError("centroids differ in dimension");
    for (std::size_t j = 0; j < i; ++j)
      if (centroids[i] == centroids[j]) throw ArgumentError("centroids must be pairwise distinct");
  }
  Discretizer d;
  d.method_ = Method::kmeans;
  d.centroids_ = std::move(centroids);
  return d;
}

std::size_t Discretizer::dimension() const {
  return method_ == Method::bins ? 1 : static_cast<std::size_t>(centroids_.front().size());
}

std::size_t Discretizer::assign(double value) const {
  if (method_ == Method::bins) {
    return static_cast<std::size_t>(std::upper_bound(edges_.begin(), edges_.end(), value) -
                                    edges_.begin());
  }
  Vector v(1);
  v[0] = value;
  return assign(v);
}

std::size_t Discretizer::assign(const Vector& value) const {
  if (method_ == Method::bins) {
    if (value.size() != 1) throw ArgumentError("binning applies to scalars only");
    return assign(value[0]);
  }
  if (value.size() != centroids_.front().size())
    throw ArgumentError("value dimension does not match centroids");
  std::size_t best = 0;
  double best_d = sq_dist(value, centroids_[0]);
  for (std::size_t i = 1; i < centroids_.size(); ++i) {
    const double d = sq_dist(value, centroids_[i]);
    if (d < best_d) {
      best_d = d;
      best = i;
    }
  }
  return best;
}

Discretizer bin_fit(std::span<const double> values, std::size_t k) {
  if (k < 1) throw ArgumentError("bin count must be >= 1");
  if (values.empty()) throw ArgumentError("cannot fit bins to no values");
  const auto [lo_it, hi_it] = std::minmax_element(values.begin(), values.end());
  const double lo = *lo_it;
  const double hi = *hi_it;
  if (k == 1) return Discretizer::from_edges({});
  if (!(lo < hi)) throw ArgumentError("degenerate range: all values equal, cannot make k > 1 bins");
  std::vector<double> edges;
  edges.reserve(k - 1);
  const double width = (hi - lo) / static_cast<double>(k);
  for (std::size_t i = 1; i < k; ++i) edges.push_back(lo + width * static_cast<double>(i));
  return Discretizer::from_edges(std::move(edges));
}

Discretizer kmeans_fit(std::span<const Vector> points, std::size_t k, std::uint64_t seed,
                       std::vector<double>* distortion) {
  if (k < 1) throw ArgumentError("cluster count must be >= 1");
  if (points.empty()) throw ArgumentError("cannot cluster no points");
  const auto dim = points.front().size();
  for (const auto& p : points)
    if (p.size() != dim) throw ArgumentError("points differ in dimension");

  std::vector<Vector> distinct(points.begin(), points.end());
  auto lex = [](const Vector& a, const Vector& b) {
    return std::lexicographical_compare(a.begin(), a.end(), b.begin(), b.end());
  };
  std::sort(distinct.begin(), distinct.end(), lex);
  distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
  if (k > distinct.size())
    throw ArgumentError("k = " + std::to_string(k) + " exceeds the " +
                        std::to_string(distinct.size()) + " distinct points");

  // k-means++ seeding. Points already chosen have zero weight, so the picks
  // are always distinct.
  SplitMix64 rng(seed);
  const std::size_t n = points.size();
  std::vector<Vector> centroids;
  centroids.push_back(points[static_cast<std::size_t>(rng.uniform() * static_cast<double>(n)) % n]);
  std::vector<double> d2(n);
  while (centroids.size() < k) {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double best = std::numeric_limits<double>::infinity();
      for (const auto& c : centroids) best = std::min(best, sq_dist(points[i], c));
      d2[i] = best;
      total += best;
    }
    const double u = rng.uniform() * total;
    double acc = 0.0;
    std::size_t pick = n;
    for (std::size_t i = 0; i < n; ++i) {
      if (d2[i] <= 0.0) continue;
      acc += d2[i];
      pick = i;
      if (u < acc) break;
    }
    centroids.push_back(points[pick]);
  }

  std::vector<std::size_t> assignment(n, k);
  for (int iter = 0; iter < 100; ++iter) {
    bool changed = false;
    double sse = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      std::size_t best = 0;
      double best_d = sq_dist(points[i], centroids[0]);
      for (std::size_t c = 1; c < k; ++c) {
        const double d = sq_dist(points[i], centroids[c]);
        if (d < best_d) {
          best_d = d;
          best = c;
        }
      }
      sse += best_d;
      if (assignment[i] != best) {
        assignment[i] = best;
        changed = true;
      }
    }
    if (distortion) distortion->push_back(sse);
    if (!changed) break;
    std::vector<Vector> sums(k, Vector::Zero(dim));
    std::vector<std::size_t> counts(k, 0);
    for (std::size_t i = 0; i < n; ++i) {
      sums[assignment[i]] += points[i];
      ++counts[assignment[i]];
    }
    // An emptied cluster keeps its centroid.
    for (std::size_t c = 0; c < k; ++c)
      if (counts[c] > 0) centroids[c] = sums[c] / static_cast<double>(counts[c]);
  }

  std::sort(centroids.begin(), centroids.end(), lex);
  for (std::size_t i = 1; i < centroids.size(); ++i)
    if (centroids[i] == centroids[i - 1])
      throw ArgumentError("k-means converged to coincident centroids; lower k");
  return Discretizer::from_centroids(std::move(centroids));
}

Discretizer kmeans_fit(std::span<const double> values, std::size_t k, std::uint64_t seed,
                       std::vector<double>* distortion) {
  std::vector<Vector> points;
  points.reserve(values.size());
  for (double v : values) points.push_back(Vector::Constant(1, v));
  return kmeans_fit(points, k, seed, distortion);
}

// ---------------------------------------------------------------------------
// State space

std::size_t ChainLayout::index_of(std::string_view id) const {
  for (std::size_t i = 0; i < states.size(); ++i)
    if (states[i] == id) return i;
  throw ArgumentError("unknown state '" + std::string(id) + "'");
}

bool ChainLayout::is_outcome(std::size_t s) const {
  return std::find(outcome_states.begin(), outcome_states.end(), s) != outcome_states.end();
}

StateSpace build_state_space(const Network& net, std::size_t protected_feature,
                             std::span<const Target> selected,
                             const std::map<std::string, Discretizer>& discretizers) {
  if (protected_feature >= net.input_width())
    throw ArgumentError("protected feature index out of range");
  const FeatureSpec& pf = net.features()[protected_feature];
  if (!pf.categorical()) throw ArgumentError("protected feature '" + pf.name + "' must be categorical");

  std::vector<Target> targets(selected.begin(), selected.end());
  std::sort(targets.begin(), targets.end(),
            [](const Target& a, const Target& b) { return tier_key(a) < tier_key(b); });
  for (std::size_t i = 1; i < targets.size(); ++i)
    if (targets[i] == targets[i - 1]) throw ArgumentError("duplicate abstraction target");

  StateSpace space;
  space.kind_ = net.kind();
  space.protected_feature_ = protected_feature;
  space.protected_cardinality_ = pf.cardinality();

  if (net.kind() == NetworkKind::recurrent) {
    if (targets.size() > 1 || (targets.size() == 1 && std::holds_alternative<FeatureTarget>(targets[0])))
      throw ArgumentError("recurrent abstraction takes at most one cell target");
  }

  ChainLayout& L = space.layout_;
  auto add = [&](std::string id, std::size_t tier) {
    L.states.push_back(std::move(id));
    space.tiers_.push_back(tier);
    return L.states.size() - 1;
  };
  L.start = add("Start", 0);
  for (int v = 0; v < pf.cardinality(); ++v) L.protected_states.push_back(add(pf.value_name(v), 1));

  std::size_t tier = 2;
  for (const Target& t : targets) {
    check_target(t, net);
    if (const auto* f = std::get_if<FeatureTarget>(&t); f && f->feature == protected_feature)
      throw ArgumentError("the protected feature already has its own states");
    const std::string id = target_id(t, net);
    auto it = discretizers.find(id);
    if (it == discretizers.end()) throw ArgumentError("missing discretizer for target '" + id + "'");
    const Discretizer& d = it->second;
    const std::size_t want_dim =
        std::holds_alternative<LayerTarget>(t) ? hidden_width(net, std::get<LayerTarget>(t).layer) : 1;
    if (d.dimension() != want_dim)
      throw ArgumentError("discretizer for '" + id + "' has the wrong dimension");
    StateSpace::Block block{t, id, d, L.states.size()};
    TargetGroup group{id, {}};
    for (std::size_t c = 0; c < d.k(); ++c) group.states.push_back(add(id + "#" + std::to_string(c), tier));
    L.targets.push_back(std::move(group));
    space.blocks_.push_back(std::move(block));
    ++tier;
  }
  for (const auto& label : net.labels()) L.outcome_states.push_back(add(label, tier));

  std::vector<std::string> sorted = L.states;
  std::sort(sorted.begin(), sorted.end());
  if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end())
    throw ArgumentError("state ids collide; rename protected values or labels");
  return space;
}

std::vector<std::size_t> StateSpace::abstract_trace(const ActivationTrace& trace) const {
  std::vector<std::size_t> out;
  out.reserve(3 + blocks_.size() * std::max<std::size_t>(1, trace.steps.size()));
  out.push_back(layout_.start);

  const double pv = trace.input[static_cast<Eigen::Index>(protected_feature_)];
  const long v = std::lround(pv);
  if (v < 0 || v >= protected_cardinality_ || std::abs(pv - static_cast<double>(v)) > 1e-9)
    throw Error("protected value " + std::to_string(pv) + " has no abstract state");
  out.push_back(layout_.protected_states[static_cast<std::size_t>(v)]);

  auto emit = [&](const Block& b, const Vector& hidden) {
    std::size_t c = 0;
    if (const auto* n = std::get_if<NeuronTarget>(&b.target))
      c = b.discretizer.assign(hidden[static_cast<Eigen::Index>(n->neuron)]);
    else
      c = b.discretizer.assign(hidden);
    out.push_back(b.first_state + c);
  };

  for (const Block& b : blocks_) {
    if (const auto* f = std::get_if<FeatureTarget>(&b.target)) {
      out.push_back(b.first_state + b.discretizer.assign(trace.input[static_cast<Eigen::Index>(f->feature)]));
    } else if (kind_ == NetworkKind::recurrent) {
      for (const Vector& h : trace.steps) emit(b, h);
    } else {
      const std::size_t layer = std::holds_alternative<NeuronTarget>(b.target)
                                    ? std::get<NeuronTarget>(b.target).layer
                                    : std::get<LayerTarget>(b.target).layer;
      if (layer >= trace.steps.size()) throw Error("trace lacks hidden layer " + std::to_string(layer));
      emit(b, trace.steps[layer]);
    }
  }

  if (trace.label >= layout_.outcome_states.size()) throw Error("trace label has no outcome state");
  out.push_back(layout_.outcome_states[trace.label]);
  return out;
}

std::map<std::string, Discretizer> fit_discretizers(const Network& net,
                                                    std::span<const TargetConfig> targets,
                                                    std::span<const ActivationTrace> pilot,
                                                    std::uint64_t seed) {
  std::map<std::string, Discretizer> out;
  for (std::size_t ti = 0; ti < targets.size(); ++ti) {
    const TargetConfig& tc = targets[ti];
    check_target(tc.target, net);
    const std::string id = target_id(tc.target, net);
    const std::uint64_t target_seed = derive_seed(seed, ti);

    if (const auto* f = std::get_if<FeatureTarget>(&tc.target);
        f && tc.method == Discretizer::Method::bins) {
      const FeatureSpec& spec = net.features()[f->feature];
      std::vector<double> range;
      if (spec.categorical())
        range = {0.0, static_cast<double>(spec.cardinality() - 1)};
      else
        range = {std::get<Continuous>(spec.domain).lo, std::get<Continuous>(spec.domain).hi};
      out.emplace(id, bin_fit(range, tc.k));
      continue;
    }

    if (pilot.empty()) throw ArgumentError("fitting '" + id + "' needs pilot traces");
    std::vector<Vector> points;
    for (const ActivationTrace& tr : pilot) {
      if (const auto* f = std::get_if<FeatureTarget>(&tc.target)) {
        points.push_back(Vector::Constant(1, tr.input[static_cast<Eigen::Index>(f->feature)]));
        continue;
      }
      const std::size_t layer = std::holds_alternative<NeuronTarget>(tc.target)
                                    ? std::get<NeuronTarget>(tc.target).layer
                                    : std::get<LayerTarget>(tc.target).layer;
      auto take = [&](const Vector& h) {
        if (const auto* n = std::get_if<NeuronTarget>(&tc.target))
          points.push_back(Vector::Constant(1, h[static_cast<Eigen::Index>(n->neuron)]));
        else
          points.push_back(h);
      };
      if (net.kind() == NetworkKind::recurrent)
        for (const Vector& h : tr.steps) take(h);
      else
        take(tr.steps.at(layer));
    }

    if (tc.method == Discretizer::Method::bins) {
      if (std::holds_alternative<LayerTarget>(tc.target))
        throw ArgumentError("target '" + id + "' is a vector; use kmeans");
      std::vector<double> values;
      values.reserve(points.size());
      for (const Vector& p : points) values.push_back(p[0]);
      out.emplace(id, bin_fit(values, tc.k));
    } else {
      out.emplace(id, kmeans_fit(points, tc.k, target_seed));
    }
  }
  return out;
}

}  // namespace fairdtmc
