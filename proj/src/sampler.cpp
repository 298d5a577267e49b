#include "fairdtmc/sampler.hpp"

#include <cmath>

#include "fairdtmc/error.hpp"
#include "parallel.hpp"

namespace fairdtmc {

namespace {

void validate(const InputDistribution& dist, std::span<const FeatureSpec> spec) {
  for (const auto& [name, w] : dist.weights) {
    const FeatureSpec* f = nullptr;
    for (const auto& s : spec)
      if (s.name == name) f = &s;
    if (!f) throw ArgumentError("distribution names unknown feature '" + name + "'");
    if (!f->categorical())
      throw ArgumentError("weights given for continuous feature '" + name + "'");
    if (w.size() != static_cast<std::size_t>(f->cardinality()))
      throw ArgumentError("feature '" + name + "': " + std::to_string(w.size()) +
                          " weights for cardinality " + std::to_string(f->cardinality()));
    double total = 0.0;
    for (double p : w) {
      if (!(p >= 0.0)) throw ArgumentError("feature '" + name + "': negative weight");
      total += p;
    }
    if (std::abs(total - 1.0) > 1e-9)
      throw ArgumentError("feature '" + name + "': weights sum to " + std::to_string(total));
  }
}

double draw(const FeatureSpec& f, const std::vector<double>* weights, SplitMix64& rng) {
  const double u = rng.uniform();
  if (const auto* c = std::get_if<Categorical>(&f.domain)) {
    if (weights) {
      double acc = 0.0;
      int last_positive = 0;
      for (int v = 0; v < c->cardinality; ++v) {
        const double p = (*weights)[static_cast<std::size_t>(v)];
        if (p <= 0.0) continue;
        last_positive = v;
        acc += p;
        if (u < acc) return v;
      }
      return last_positive;  // rounding slack at the top of the cumulative table
    }
    return std::min(c->cardinality - 1, static_cast<int>(u * c->cardinality));
  }
  const auto& r = std::get<Continuous>(f.domain);
  return r.lo + u * (r.hi - r.lo);
}

}  // namespace

Vector sample_input(const InputDistribution& dist, std::span<const FeatureSpec> spec,
                    SplitMix64& rng) {
  validate(dist, spec);
  Vector x(static_cast<Eigen::Index>(spec.size()));
  for (const FeatureSpec& f : spec) {
    auto it = dist.weights.find(f.name);
    x[static_cast<Eigen::Index>(f.index)] =
        draw(f, it == dist.weights.end() ? nullptr : &it->second, rng);
  }
  return x;
}

Sampler::Sampler(InputDistribution dist, std::vector<FeatureSpec> spec)
    : dist_(std::move(dist)), spec_(std::move(spec)) {
  validate(dist_, spec_);
  for (std::size_t i = 0; i < spec_.size(); ++i)
    if (spec_[i].index >= spec_.size())
      throw ArgumentError("feature index out of range for '" + spec_[i].name + "'");
}

Vector Sampler::sample(std::uint64_t index) const {
  SplitMix64 rng(derive_seed(dist_.seed, index));
  Vector x(static_cast<Eigen::Index>(spec_.size()));
  for (const FeatureSpec& f : spec_) {
    auto it = dist_.weights.find(f.name);
    x[static_cast<Eigen::Index>(f.index)] =
        draw(f, it == dist_.weights.end() ? nullptr : &it->second, rng);
  }
  return x;
}

std::vector<Vector> Sampler::batch(std::uint64_t first, std::size_t n, std::size_t workers) const {
  if (n == 0) throw ArgumentError("batch size must be >= 1");
  std::vector<Vector> out(n);
  detail::parallel_for(n, workers, [&](std::size_t i) { out[i] = sample(first + i); });
  return out;
}

std::vector<Vector> sample_batch(const InputDistribution& dist, std::span<const FeatureSpec> spec,
                                 std::size_t n, std::size_t workers) {
  Sampler s(dist, std::vector<FeatureSpec>(spec.begin(), spec.end()));
  return s.batch(0, n, workers);
}

}  // namespace fairdtmc
