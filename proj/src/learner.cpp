#include "fairdtmc/learner.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <istream>
#include <ostream>
#include <sstream>

#include "fairdtmc/error.hpp"
#include "parallel.hpp"

namespace fairdtmc {

void CountMatrix::add_trace(std::span<const std::size_t> trace) {
  if (trace.empty()) return;
  for (std::size_t i = 0; i + 1 < trace.size(); ++i) {
    const std::size_t p = trace[i];
    const std::size_t q = trace[i + 1];
    if (p >= m_ || q >= m_) throw ArgumentError("trace state out of range");
    ++pairs_[p * m_ + q];
    ++rows_[p];
  }
  ++traces_;
}

void CountMatrix::merge(const CountMatrix& other) {
  if (other.m_ != m_) throw ArgumentError("cannot merge count matrices of different size");
  for (std::size_t i = 0; i < pairs_.size(); ++i) pairs_[i] += other.pairs_[i];
  for (std::size_t i = 0; i < rows_.size(); ++i) rows_[i] += other.rows_[i];
  traces_ += other.traces_;
}

void CountMatrix::add_transition(std::size_t p, std::size_t q, std::uint64_t n) {
  if (p >= m_ || q >= m_) throw ArgumentError("transition state out of range");
  pairs_[p * m_ + q] += n;
  rows_[p] += n;
}

CountMatrix update_counts(CountMatrix counts, std::span<const std::size_t> trace) {
  counts.add_trace(trace);
  return counts;
}

PacParams derive_eps_delta(double mu_eps, double mu_delta) {
  if (!(mu_eps > 0.0 && mu_eps < 1.0)) throw ArgumentError("mu_eps must lie in (0, 1)");
  if (!(mu_delta > 0.0 && mu_delta < 1.0)) throw ArgumentError("mu_delta must lie in (0, 1)");
  return {mu_eps / 2.0, 1.0 - std::sqrt(1.0 - mu_delta)};
}

double compute_hn(double epsilon, double delta_prime, std::span<const std::uint64_t> row) {
  std::uint64_t n = 0;
  for (auto c : row) n += c;
  double offset = 0.0;
  if (n > 0) {
    for (auto c : row) {
      if (c == 0) continue;
      offset = std::max(offset, std::abs(0.5 - static_cast<double>(c) / static_cast<double>(n)));
    }
  }
  const double shifted = offset - 2.0 * epsilon / 3.0;
  return 2.0 / (epsilon * epsilon) * std::log(2.0 / delta_prime) * (0.25 - shifted * shifted);
}

Matrix estimate_matrix(const CountMatrix& counts, std::span<const std::size_t> outcome_states) {
  const std::size_t m = counts.m();
  if (m < 2) throw ArgumentError("a chain needs at least two states");
  Matrix a(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(m));
  for (std::size_t p = 0; p < m; ++p) {
    const auto ip = static_cast<Eigen::Index>(p);
    const std::uint64_t n = counts.visits(p);
    for (std::size_t q = 0; q < m; ++q) {
      const auto iq = static_cast<Eigen::Index>(q);
      a(ip, iq) = n == 0 ? 1.0 / static_cast<double>(m)
                         : static_cast<double>(counts.at(p, q)) / static_cast<double>(n);
    }
  }
  for (std::size_t o : outcome_states) {
    if (o >= m) throw ArgumentError("outcome state out of range");
    const auto io = static_cast<Eigen::Index>(o);
    a.row(io).setZero();
    a(io, io) = 1.0;
  }
  return a;
}

// ---------------------------------------------------------------------------
// Dtmc

Dtmc::Dtmc(ChainLayout layout, Matrix transitions, CountMatrix counts, PacParams pac)
    : layout_(std::move(layout)), a_(std::move(transitions)), counts_(std::move(counts)), pac_(pac) {
  const auto m = static_cast<Eigen::Index>(layout_.m());
  if (m < 2) throw ArgumentError("a chain needs at least two states");
  if (a_.rows() != m || a_.cols() != m) throw ArgumentError("transition matrix is not m x m");
  if (layout_.start >= layout_.m()) throw ArgumentError("start state out of range");
  for (Eigen::Index p = 0; p < m; ++p) {
    double sum = 0.0;
    for (Eigen::Index q = 0; q < m; ++q) {
      const double v = a_(p, q);
      if (!(v >= 0.0 && v <= 1.0))
        throw ArgumentError("transition probability out of [0,1] in row " + layout_.states[static_cast<std::size_t>(p)]);
      sum += v;
    }
    if (std::abs(sum - 1.0) > 1e-9)
      throw ArgumentError("row " + layout_.states[static_cast<std::size_t>(p)] + " sums to " + std::to_string(sum));
  }
  for (std::size_t o : layout_.outcome_states) {
    const auto io = static_cast<Eigen::Index>(o);
    if (o >= layout_.m() || a_(io, io) != 1.0)
      throw ArgumentError("outcome state must be absorbing");
  }
  if (counts_.m() != 0 && counts_.m() != layout_.m())
    throw ArgumentError("count matrix size does not match the layout");
}

Vector Dtmc::initial() const {
  Vector v = Vector::Zero(static_cast<Eigen::Index>(m()));
  v[static_cast<Eigen::Index>(layout_.start)] = 1.0;
  return v;
}

// ---------------------------------------------------------------------------
// Learning

namespace {

std::vector<std::size_t> starved_states(const CountMatrix& counts, const std::vector<bool>& exempt,
                                        const PacParams& pac) {
  const double delta_prime = pac.delta / static_cast<double>(counts.m());
  std::vector<std::size_t> starved;
  for (std::size_t p = 0; p < counts.m(); ++p) {
    if (exempt[p]) continue;
    const std::uint64_t n = counts.visits(p);
    if (n == 0 || static_cast<double>(n) < compute_hn(pac.epsilon, delta_prime, counts.row(p)))
      starved.push_back(p);
  }
  return starved;
}

}  // namespace

Dtmc learn_dtmc(const ChainLayout& layout, const TraceSource& source, const LearnOptions& options) {
  const PacParams& pac = options.pac;
  if (!(pac.epsilon > 0.0 && pac.epsilon < 1.0)) throw ArgumentError("epsilon must lie in (0, 1)");
  if (!(pac.delta > 0.0 && pac.delta < 1.0)) throw ArgumentError("delta must lie in (0, 1)");
  if (options.batch_size == 0) throw ArgumentError("batch size must be >= 1");
  if (options.max_traces == 0) throw ArgumentError("trace budget must be >= 1");

  const std::size_t m = layout.m();
  std::vector<bool> exempt(m, false);
  for (std::size_t o : layout.outcome_states) exempt.at(o) = true;
  for (std::size_t e : options.exempt) exempt.at(e) = true;

  CountMatrix counts(m);
  std::vector<std::size_t> starved;
  std::vector<std::vector<std::size_t>> traces;
  do {
    const std::uint64_t first = counts.trace_count();
    const auto n = static_cast<std::size_t>(
        std::min<std::uint64_t>(options.batch_size, options.max_traces - first));
    traces.assign(n, {});
    detail::parallel_for(n, options.workers, [&](std::size_t i) { traces[i] = source(first + i); });
    for (const auto& t : traces) counts.add_trace(t);
    if (options.on_batch) options.on_batch(counts);
    starved = starved_states(counts, exempt, pac);
  } while (!starved.empty() && counts.trace_count() < options.max_traces);

  Matrix a = estimate_matrix(counts, layout.outcome_states);
  Dtmc dtmc(layout, std::move(a), std::move(counts), pac);
  dtmc.set_starved(std::move(starved));
  return dtmc;
}

Dtmc learn_dtmc(const Network& net, const Sampler& sampler, const StateSpace& space,
                const LearnOptions& options) {
  LearnOptions opts = options;
  const FeatureSpec& pf = net.features()[space.protected_feature()];
  if (auto it = sampler.distribution().weights.find(pf.name); it != sampler.distribution().weights.end())
    for (std::size_t v = 0; v < it->second.size(); ++v)
      if (it->second[v] == 0.0) opts.exempt.push_back(space.layout().protected_states[v]);

  TraceSource source = [&](std::uint64_t index) {
    return space.abstract_trace(net.trace(sampler.sample(index)));
  };
  return learn_dtmc(space.layout(), source, opts);
}

// ---------------------------------------------------------------------------
// Text format

void write_dtmc(const Dtmc& dtmc, std::ostream& out) {
  const std::size_t m = dtmc.m();
  out << "m " << m << "\n";
  for (std::size_t i = 0; i < m; ++i) out << i << " " << dtmc.layout().states[i] << "\n";
  std::ostringstream line;
  line << std::setprecision(17);
  for (std::size_t p = 0; p < m; ++p)
    for (std::size_t q = 0; q < m; ++q) {
      const double v = dtmc.prob(p, q);
      if (v == 0.0) continue;
      const std::uint64_t c = dtmc.counts().m() == m ? dtmc.counts().at(p, q) : 0;
      line.str("");
      line << p << " " << q << " " << v << " " << c << "\n";
      out << line.str();
    }
}

Dtmc read_dtmc(std::istream& in) {
  std::string tag;
  std::size_t m = 0;
  if (!(in >> tag >> m) || tag != "m" || m < 2) throw ModelError("DTMC file: bad header");
  ChainLayout layout;
  layout.states.resize(m);
  for (std::size_t i = 0; i < m; ++i) {
    std::size_t idx = 0;
    if (!(in >> idx) || idx != i || !std::getline(in >> std::ws, layout.states[i]))
      throw ModelError("DTMC file: bad state table");
  }
  layout.start = layout.index_of("Start");
  Matrix a = Matrix::Zero(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(m));
  CountMatrix counts(m);
  std::size_t p = 0, q = 0;
  double prob = 0.0;
  std::uint64_t count = 0;
  while (in >> p >> q >> prob >> count) {
    if (p >= m || q >= m) throw ModelError("DTMC file: state index out of range");
    a(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(q)) = prob;
    counts.add_transition(p, q, count);
  }
  for (std::size_t s = 0; s < m; ++s)
    if (a(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(s)) == 1.0) layout.outcome_states.push_back(s);
  return Dtmc(std::move(layout), std::move(a), std::move(counts));
}

}  // namespace fairdtmc
