#include "fairdtmc/checker.hpp"

#include <algorithm>
#include <cmath>
#include <utility>

#include "fairdtmc/error.hpp"

namespace fairdtmc {

namespace {

// Solves M x = b in place; returns false if a pivot falls below `tiny`.
bool gauss_solve(Matrix& mat, Vector& b, double tiny) {
  const Eigen::Index n = mat.rows();
  for (Eigen::Index col = 0; col < n; ++col) {
    Eigen::Index pivot = col;
    for (Eigen::Index r = col + 1; r < n; ++r)
      if (std::abs(mat(r, col)) > std::abs(mat(pivot, col))) pivot = r;
    if (std::abs(mat(pivot, col)) < tiny) return false;
    if (pivot != col) {
      mat.row(col).swap(mat.row(pivot));
      std::swap(b[col], b[pivot]);
    }
    for (Eigen::Index r = col + 1; r < n; ++r) {
      const double f = mat(r, col) / mat(col, col);
      if (f == 0.0) continue;
      mat.row(r).tail(n - col) -= f * mat.row(col).tail(n - col);
      b[r] -= f * b[col];
    }
  }
  for (Eigen::Index r = n - 1; r >= 0; --r) {
    double s = b[r];
    for (Eigen::Index c = r + 1; c < n; ++c) s -= mat(r, c) * b[c];
    b[r] = s / mat(r, r);
  }
  return true;
}

Vector damped_iteration(const Matrix& sub, const Vector& rhs, const ReachOptions& opt) {
  constexpr double kDamping = 0.9;
  Vector x = Vector::Zero(rhs.size());
  double residual = 0.0;
  for (std::size_t sweep = 0; sweep < opt.max_sweeps; ++sweep) {
    const Vector next = sub * x + rhs;
    residual = (next - x).cwiseAbs().maxCoeff();
    x = (1.0 - kDamping) * x + kDamping * next;
    if (residual < opt.tolerance) return x;
  }
  throw SolverError("reachability iteration did not converge", residual);
}

}  // namespace

Vector reach_all(const Matrix& a, std::size_t target, const ReachOptions& options) {
  const auto m = static_cast<std::size_t>(a.rows());
  if (target >= m) throw ArgumentError("target state out of range");

  // Backward search: which states can reach the target at all?
  std::vector<bool> reaches(m, false);
  std::vector<std::size_t> stack{target};
  reaches[target] = true;
  while (!stack.empty()) {
    const std::size_t q = stack.back();
    stack.pop_back();
    for (std::size_t p = 0; p < m; ++p)
      if (!reaches[p] && a(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(q)) > 0.0) {
        reaches[p] = true;
        stack.push_back(p);
      }
  }

  std::vector<std::size_t> unknown;
  for (std::size_t p = 0; p < m; ++p)
    if (reaches[p] && p != target) unknown.push_back(p);

  Vector result = Vector::Zero(static_cast<Eigen::Index>(m));
  result[static_cast<Eigen::Index>(target)] = 1.0;
  if (unknown.empty()) return result;

  const auto n = static_cast<Eigen::Index>(unknown.size());
  Matrix sub(n, n);
  Vector rhs(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto p = static_cast<Eigen::Index>(unknown[static_cast<std::size_t>(i)]);
    rhs[i] = a(p, static_cast<Eigen::Index>(target));
    for (Eigen::Index j = 0; j < n; ++j) sub(i, j) = a(p, static_cast<Eigen::Index>(unknown[static_cast<std::size_t>(j)]));
  }

  Vector x;
  bool solved = false;
  if (!options.force_iterative) {
    Matrix system = Matrix::Identity(n, n) - sub;
    x = rhs;
    solved = gauss_solve(system, x, options.tolerance);
  }
  if (!solved) x = damped_iteration(sub, rhs, options);

  for (Eigen::Index i = 0; i < n; ++i)
    result[static_cast<Eigen::Index>(unknown[static_cast<std::size_t>(i)])] = std::clamp(x[i], 0.0, 1.0);
  return result;
}

double reach_prob(const Dtmc& dtmc, const ReachQuery& query) {
  if (query.source >= dtmc.m() || query.target >= dtmc.m())
    throw ArgumentError("reachability query names a state outside the chain");
  return reach_all(dtmc.transitions(), query.target)[static_cast<Eigen::Index>(query.source)];
}

std::vector<GroupProb> group_outcome_probs(const Dtmc& dtmc, std::size_t outcome_state) {
  const ChainLayout& layout = dtmc.layout();
  if (!layout.is_outcome(outcome_state))
    throw ArgumentError("state '" + (outcome_state < layout.m() ? layout.states[outcome_state] : std::string("?")) +
                        "' is not an outcome state");
  const Vector reach = reach_all(dtmc.transitions(), outcome_state);
  std::vector<GroupProb> out;
  for (std::size_t s : layout.protected_states)
    out.push_back({layout.states[s], reach[static_cast<Eigen::Index>(s)]});
  return out;
}

FairnessVerdict fairness_verdict(std::vector<GroupProb> group_probs, double xi) {
  if (group_probs.size() < 2) throw ArgumentError("fairness needs at least two groups");
  if (!(xi > 0.0 && xi < 1.0)) throw ArgumentError("xi must lie in (0, 1)");
  FairnessVerdict v;
  for (std::size_t i = 0; i < group_probs.size(); ++i)
    for (std::size_t j = i + 1; j < group_probs.size(); ++j)
      v.max_diff = std::max(v.max_diff, std::abs(group_probs[i].prob - group_probs[j].prob));
  v.group_probs = std::move(group_probs);
  v.xi = xi;
  v.pass = v.max_diff <= xi;
  return v;
}

}  // namespace fairdtmc
