#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "fairdtmc/model.hpp"
#include "fairdtmc/rng.hpp"

namespace fairdtmc {

/// Input distribution: uniform per feature unless a categorical feature has an
/// explicit weight table.
struct InputDistribution {
  std::uint64_t seed = 0;
  std::map<std::string, std::vector<double>> weights;  // feature name -> P(value)
};

/// Draws one input using `rng`. Throws ArgumentError if `dist` names features
/// that are not in `spec` or carries malformed weights.
Vector sample_input(const InputDistribution& dist, std::span<const FeatureSpec> spec,
                    SplitMix64& rng);

/// Index-addressable IID input stream. Sample i is drawn from its own stream
/// seeded by derive_seed(seed, i), so any partition of an index range across
/// workers reproduces the serial result exactly.
class Sampler {
 public:
  Sampler(InputDistribution dist, std::vector<FeatureSpec> spec);

  Vector sample(std::uint64_t index) const;
  std::vector<Vector> batch(std::uint64_t first, std::size_t n, std::size_t workers = 1) const;

  const InputDistribution& distribution() const { return dist_; }
  const std::vector<FeatureSpec>& spec() const { return spec_; }

 private:
  InputDistribution dist_;
  std::vector<FeatureSpec> spec_;
};

/// Samples 0..n-1 of the stream defined by `dist`. n must be >= 1.
std::vector<Vector> sample_batch(const InputDistribution& dist, std::span<const FeatureSpec> spec,
                                 std::size_t n, std::size_t workers = 1);

}  // namespace fairdtmc
