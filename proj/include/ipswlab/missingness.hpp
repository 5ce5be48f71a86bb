#pragma once

#include <optional>
#include <string>
#include <vector>

#include "ipswlab/rng.hpp"
#include "ipswlab/tabular.hpp"

namespace ipswlab {

enum class TrialMarRule { ranked, random };

/// MAR mechanism: within each trial-indicator stratum, mask the target
/// column on the top fraction of rows ranked by the sum of the rank
/// columns. Counts are floored; ties at the cutoff break by ascending row
/// index, so masking is deterministic.
struct MarSpec {
  std::string target_col = "X1";
  std::vector<std::string> rank_cols = {"X2", "X3"};
  double frac_nontrial = 0.30;
  double frac_trial = 0.0;
  // The trial-side mechanism is only specified by proportion; ranked
  // mirrors the non-trial rule, random masks uniformly at random.
  TrialMarRule trial_rule = TrialMarRule::ranked;

  void validate() const;
};

Dataset induce_mar(const Dataset& pop, const MarSpec& spec,
                   std::optional<RngStream> rng = std::nullopt);

}  // namespace ipswlab
