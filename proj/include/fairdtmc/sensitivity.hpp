#pragma once

#include <cstddef>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "fairdtmc/learner.hpp"

namespace fairdtmc {

struct SensitivityEntry {
  std::string target;
  double sensitivity = 0.0;
};

struct SensitivityRanking {
  std::vector<SensitivityEntry> entries;  // descending, ties by target id
  std::string label;
};

/// Sum over the target's states I_i of
///   reach(Start, I_i) * reach(I_i, l) * max_{f,g} |reach(f, I_i) - reach(g, I_i)|
/// where f, g range over the protected-value states. Zero with fewer than two
/// protected values.
double state_sensitivity(const Dtmc& dtmc, const std::string& target, std::size_t label_state);

/// Evaluates and sorts every named target. Empty `targets` means all of the
/// layout's target groups.
SensitivityRanking rank_targets(const Dtmc& dtmc, std::span<const std::string> targets,
                                std::size_t label_state);

/// "target,sensitivity,normalized" rows; normalized = value / max value.
void write_ranking_csv(const SensitivityRanking& ranking, std::ostream& out);

}  // namespace fairdtmc
