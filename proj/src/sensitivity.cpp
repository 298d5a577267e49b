#include "fairdtmc/sensitivity.hpp"

#include <algorithm>
#include <iomanip>
#include <ostream>

#include "fairdtmc/checker.hpp"
#include "fairdtmc/error.hpp"

namespace fairdtmc {

namespace {

const TargetGroup& find_group(const ChainLayout& layout, const std::string& target) {
  for (const TargetGroup& g : layout.targets)
    if (g.id == target) return g;
  throw ArgumentError("unknown sensitivity target '" + target + "'");
}

double group_sensitivity(const Dtmc& dtmc, const TargetGroup& group, const Vector& to_label) {
  const ChainLayout& layout = dtmc.layout();
  if (layout.protected_states.size() < 2) return 0.0;
  double total = 0.0;
  for (std::size_t state : group.states) {
    const Vector to_state = reach_all(dtmc.transitions(), state);
    double lo = 1.0;
    double hi = 0.0;
    for (std::size_t f : layout.protected_states) {
      const double r = to_state[static_cast<Eigen::Index>(f)];
      lo = std::min(lo, r);
      hi = std::max(hi, r);
    }
    total += to_state[static_cast<Eigen::Index>(layout.start)] *
             to_label[static_cast<Eigen::Index>(state)] * (hi - lo);
  }
  return total;
}

void check_label(const Dtmc& dtmc, std::size_t label_state) {
  if (!dtmc.layout().is_outcome(label_state))
    throw ArgumentError("sensitivity label must be an outcome state");
}

}  // namespace

double state_sensitivity(const Dtmc& dtmc, const std::string& target, std::size_t label_state) {
  check_label(dtmc, label_state);
  const TargetGroup& group = find_group(dtmc.layout(), target);
  return group_sensitivity(dtmc, group, reach_all(dtmc.transitions(), label_state));
}

SensitivityRanking rank_targets(const Dtmc& dtmc, std::span<const std::string> targets,
                                std::size_t label_state) {
  check_label(dtmc, label_state);
  std::vector<std::string> names(targets.begin(), targets.end());
  if (names.empty())
    for (const TargetGroup& g : dtmc.layout().targets) names.push_back(g.id);

  const Vector to_label = reach_all(dtmc.transitions(), label_state);
  SensitivityRanking ranking;
  ranking.label = dtmc.layout().states[label_state];
  for (const std::string& name : names)
    ranking.entries.push_back({name, group_sensitivity(dtmc, find_group(dtmc.layout(), name), to_label)});
  std::sort(ranking.entries.begin(), ranking.entries.end(),
            [](const SensitivityEntry& a, const SensitivityEntry& b) {
              if (a.sensitivity != b.sensitivity) return a.sensitivity > b.sensitivity;
              return a.target < b.target;
            });
  return ranking;
}

void write_ranking_csv(const SensitivityRanking& ranking, std::ostream& out) {
  double top = 0.0;
  for (const auto& e : ranking.entries) top = std::max(top, e.sensitivity);
  out << "target,sensitivity,normalized\n";
  out << std::setprecision(17);
  for (const auto& e : ranking.entries)
    out << e.target << "," << e.sensitivity << "," << (top > 0.0 ? e.sensitivity / top : 0.0) << "\n";
}

}  // namespace fairdtmc
