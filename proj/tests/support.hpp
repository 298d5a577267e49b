#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <tuple>
#include <vector>

#include "fairdtmc/abstraction.hpp"
#include "fairdtmc/learner.hpp"
#include "fairdtmc/model.hpp"
#include "fairdtmc/rng.hpp"

namespace fairdtmc::testing {

inline std::filesystem::path data_path(const std::string& name) {
  return std::filesystem::path(FAIRDTMC_TEST_DATA) / name;
}

struct Edge {
  std::string from;
  std::string to;
  double p;
};

/// Builds a chain by state name. Outcome states get their self-loop
/// automatically; any state without outgoing edges also becomes absorbing.
inline Dtmc make_chain(std::vector<std::string> states, const std::vector<Edge>& edges,
                       std::vector<std::string> protected_states, std::vector<std::string> outcomes,
                       std::vector<TargetGroup> targets = {}) {
  ChainLayout layout;
  layout.states = std::move(states);
  layout.start = layout.index_of("Start");
  for (const auto& s : protected_states) layout.protected_states.push_back(layout.index_of(s));
  for (const auto& s : outcomes) layout.outcome_states.push_back(layout.index_of(s));
  layout.targets = std::move(targets);
  const auto m = static_cast<Eigen::Index>(layout.m());
  Matrix a = Matrix::Zero(m, m);
  for (const auto& e : edges)
    a(static_cast<Eigen::Index>(layout.index_of(e.from)), static_cast<Eigen::Index>(layout.index_of(e.to))) += e.p;
  for (Eigen::Index p = 0; p < m; ++p)
    if (a.row(p).sum() == 0.0) a(p, p) = 1.0;
  return Dtmc(std::move(layout), std::move(a));
}

/// Random chain over n states where state i only moves to states > i; the last
/// few states are absorbing. Edge probabilities are random, rows stochastic.
inline Matrix random_acyclic(std::size_t n, SplitMix64& rng) {
  const auto m = static_cast<Eigen::Index>(n);
  Matrix a = Matrix::Zero(m, m);
  for (Eigen::Index p = 0; p < m; ++p) {
    std::vector<Eigen::Index> succ;
    for (Eigen::Index q = p + 1; q < m; ++q)
      if (rng.uniform() < 0.6) succ.push_back(q);
    if (succ.empty() || rng.uniform() < 0.15) {
      a(p, p) = 1.0;
      continue;
    }
    double total = 0.0;
    std::vector<double> w;
    for (std::size_t i = 0; i < succ.size(); ++i) {
      w.push_back(rng.uniform() + 1e-3);
      total += w.back();
    }
    for (std::size_t i = 0; i < succ.size(); ++i) a(p, succ[i]) = w[i] / total;
  }
  return a;
}

/// Oracle: sums the probability of every simple path from `from` that first
/// hits `to`. Exact for acyclic chains (self-loops only on absorbing states).
inline double path_enumeration(const Matrix& a, Eigen::Index from, Eigen::Index to) {
  if (from == to) return 1.0;
  double total = 0.0;
  for (Eigen::Index q = 0; q < a.cols(); ++q) {
    if (q == from || a(from, q) == 0.0) continue;
    total += a(from, q) * path_enumeration(a, q, to);
  }
  return total;
}

/// Stub "network" whose abstract traces follow a known chain: each trace is a
/// walk from Start to an absorbing state, seeded by the trace index.
inline TraceSource chain_walker(const Matrix& truth, std::size_t start, std::uint64_t seed) {
  return [truth, start, seed](std::uint64_t index) {
    SplitMix64 rng(derive_seed(seed, index));
    std::vector<std::size_t> trace{start};
    auto s = static_cast<Eigen::Index>(start);
    while (truth(s, s) != 1.0) {
      const double u = rng.uniform();
      double acc = 0.0;
      Eigen::Index next = truth.cols() - 1;
      for (Eigen::Index q = 0; q < truth.cols(); ++q) {
        if (truth(s, q) == 0.0) continue;
        acc += truth(s, q);
        next = q;
        if (u < acc) break;
      }
      s = next;
      trace.push_back(static_cast<std::size_t>(s));
    }
    return trace;
  };
}

}  // namespace fairdtmc::testing
