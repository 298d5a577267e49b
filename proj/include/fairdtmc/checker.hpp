#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "fairdtmc/learner.hpp"

namespace fairdtmc {

struct ReachQuery {
  std::size_t source = 0;
  std::size_t target = 0;
};

struct ReachOptions {
  /// Skip elimination and use the damped iteration directly.
  bool force_iterative = false;
  double tolerance = 1e-12;
  std::size_t max_sweeps = 1'000'000;
};

/// Probability of eventually reaching `target` from each state of the chain
/// with transition matrix `a`. States that cannot reach the target get 0,
/// the target itself 1; the rest solve x = A x + b by Gaussian elimination
/// with partial pivoting, falling back to a damped fixed-point iteration when
/// the system is numerically singular.
Vector reach_all(const Matrix& a, std::size_t target, const ReachOptions& options = {});

double reach_prob(const Dtmc& dtmc, const ReachQuery& query);

struct GroupProb {
  std::string group;
  double prob = 0.0;
};

/// P(outcome | protected value) for every protected state, in layout order.
std::vector<GroupProb> group_outcome_probs(const Dtmc& dtmc, std::size_t outcome_state);

struct FairnessVerdict {
  std::vector<GroupProb> group_probs;
  double max_diff = 0.0;
  double xi = 0.0;
  bool pass = false;
};

/// Max pairwise |P_i - P_j| compared against xi; pass iff max_diff <= xi.
FairnessVerdict fairness_verdict(std::vector<GroupProb> group_probs, double xi);

}  // namespace fairdtmc
