#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "fairdtmc/abstraction.hpp"
#include "fairdtmc/model.hpp"
#include "fairdtmc/sampler.hpp"

namespace fairdtmc {

/// Transition counts n_pq, row sums n_p and the number of traces folded in.
class CountMatrix {
 public:
  CountMatrix() = default;
  explicit CountMatrix(std::size_t m) : m_(m), pairs_(m * m, 0), rows_(m, 0) {}

  std::size_t m() const { return m_; }
  std::uint64_t at(std::size_t p, std::size_t q) const { return pairs_[p * m_ + q]; }
  std::uint64_t visits(std::size_t p) const { return rows_[p]; }
  std::span<const std::uint64_t> row(std::size_t p) const {
    return {pairs_.data() + p * m_, m_};
  }
  std::uint64_t trace_count() const { return traces_; }

  /// Counts every consecutive pair of `trace`. An empty trace is a no-op.
  void add_trace(std::span<const std::size_t> trace);
  void merge(const CountMatrix& other);
  /// Adds `n` observations of p -> q without counting a trace.
  void add_transition(std::size_t p, std::size_t q, std::uint64_t n = 1);

 private:
  std::size_t m_ = 0;
  std::vector<std::uint64_t> pairs_;
  std::vector<std::uint64_t> rows_;
  std::uint64_t traces_ = 0;
};

CountMatrix update_counts(CountMatrix counts, std::span<const std::size_t> trace);

struct PacParams {
  double epsilon = 0.0;
  double delta = 0.0;
};

/// Per-probability learning parameters that make the difference of two
/// reachability estimates PAC with (mu_eps, mu_delta):
/// epsilon = mu_eps / 2, delta = 1 - sqrt(1 - mu_delta).
PacParams derive_eps_delta(double mu_eps, double mu_delta);

/// Required visit count for a state whose outgoing counts are `row`:
///   (2/eps^2) ln(2/delta') [1/4 - (max_q |1/2 - n_pq/n_p| - 2 eps/3)^2]
/// with the max taken over observed successors (offset 0 for an unvisited row).
double compute_hn(double epsilon, double delta_prime, std::span<const std::uint64_t> row);

/// Frequency estimate: visited rows n_pq/n_p, unvisited rows 1/m, outcome
/// rows forced to a self-loop of probability 1.
Matrix estimate_matrix(const CountMatrix& counts, std::span<const std::size_t> outcome_states);

/// A discrete-time Markov chain over a ChainLayout, starting in Start.
class Dtmc {
 public:
  /// Validates row-stochasticity, ranges and absorbing outcomes.
  Dtmc(ChainLayout layout, Matrix transitions, CountMatrix counts = {}, PacParams pac = {});

  const ChainLayout& layout() const { return layout_; }
  std::size_t m() const { return layout_.m(); }
  const Matrix& transitions() const { return a_; }
  double prob(std::size_t p, std::size_t q) const { return a_(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(q)); }
  Vector initial() const;
  const CountMatrix& counts() const { return counts_; }
  const PacParams& pac() const { return pac_; }

  /// True when every non-exempt state met its H(n) bound.
  bool pac_satisfied() const { return starved_.empty(); }
  const std::vector<std::size_t>& starved_states() const { return starved_; }
  void set_starved(std::vector<std::size_t> s) { starved_ = std::move(s); }

 private:
  ChainLayout layout_;
  Matrix a_;
  CountMatrix counts_;
  PacParams pac_;
  std::vector<std::size_t> starved_;
};

/// Produces the abstract trace for sample number `index`. Must be safe to call
/// concurrently and depend only on `index`.
using TraceSource = std::function<std::vector<std::size_t>(std::uint64_t index)>;

struct LearnOptions {
  PacParams pac{0.005, 0.05};
  std::uint64_t max_traces = 5'000'000;
  std::size_t batch_size = 100;
  std::size_t workers = 1;
  /// States excluded from the stopping rule in addition to the outcome states.
  std::vector<std::size_t> exempt;
  /// Called after each batch is merged (single-threaded).
  std::function<void(const CountMatrix&)> on_batch;
};

/// Samples traces in batches until every non-exempt state p satisfies
/// n_p >= H(n) with delta' = delta / m, or the trace budget runs out. In the
/// latter case the chain is returned with its starved states recorded.
Dtmc learn_dtmc(const ChainLayout& layout, const TraceSource& source, const LearnOptions& options);

/// Network front end: samples inputs, runs the network and abstracts traces.
/// Protected values with zero sampling weight are exempt.
Dtmc learn_dtmc(const Network& net, const Sampler& sampler, const StateSpace& space,
                const LearnOptions& options);

/// Text format: "m <m>", one "<index> <id>" line per state, then
/// "<p> <q> <prob> <count>" for every nonzero transition.
void write_dtmc(const Dtmc& dtmc, std::ostream& out);
/// Reads the text format back. Protected/outcome roles are not stored, so the
/// returned layout lists absorbing states as outcomes.
Dtmc read_dtmc(std::istream& in);

}  // namespace fairdtmc
