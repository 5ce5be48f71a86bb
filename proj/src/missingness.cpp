#include "ipswlab/missingness.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "ipswlab/error.hpp"

namespace ipswlab {

void MarSpec::validate() const {
  if (frac_nontrial < 0 || frac_nontrial > 1 || frac_trial < 0 || frac_trial > 1)
    throw ConfigError("MAR fractions must lie in [0, 1]");
  if (rank_cols.empty()) throw ConfigError("MAR spec needs at least one rank column");
}

Dataset induce_mar(const Dataset& pop, const MarSpec& spec, std::optional<RngStream> rng) {
  spec.validate();
  const Column* s = pop.find_role(ColumnRole::TrialIndicator);
  if (!s) throw ConfigError("dataset has no trial indicator column");
  for (auto o : s->observed)
    if (!o) throw ConfigError("trial indicator must be fully observed");
  for (const auto& name : spec.rank_cols)
    for (auto o : pop.column(name).observed)
      if (!o) throw ConfigError("rank column '" + name + "' must be fully observed");
  const Column& target = pop.column(spec.target_col);
  for (auto o : target.observed)
    if (!o)
      throw ConfigError("target column '" + spec.target_col +
                        "' already has missingness");
  if (spec.trial_rule == TrialMarRule::random && spec.frac_trial > 0 && !rng)
    throw ConfigError("random trial MAR rule requires an RNG stream");

  std::vector<double> rank_sum(pop.n_rows(), 0.0);
  for (const auto& name : spec.rank_cols) {
    const auto& v = pop.column(name).values;
    for (std::size_t i = 0; i < v.size(); ++i) rank_sum[i] += v[i];
  }

  Dataset out = pop;
  Column& masked = out.column_mut(out.column_index(spec.target_col));

  auto mask_top_ranked = [&](double stratum, double frac) {
    std::vector<std::size_t> rows;
    for (std::size_t i = 0; i < pop.n_rows(); ++i)
      if (s->values[i] == stratum) rows.push_back(i);
    std::size_t k = static_cast<std::size_t>(
        std::floor(frac * static_cast<double>(rows.size())));
    if (k == 0) return;
    // descending rank sum; ties break by ascending row index
    std::stable_sort(rows.begin(), rows.end(), [&](std::size_t a, std::size_t b) {
      return rank_sum[a] > rank_sum[b];
    });
    for (std::size_t j = 0; j < k; ++j) masked.observed[rows[j]] = 0;
  };

  auto mask_random = [&](double stratum, double frac) {
    std::vector<std::size_t> rows;
    for (std::size_t i = 0; i < pop.n_rows(); ++i)
      if (s->values[i] == stratum) rows.push_back(i);
    std::size_t k = static_cast<std::size_t>(
        std::floor(frac * static_cast<double>(rows.size())));
    if (k == 0) return;
    std::shuffle(rows.begin(), rows.end(), rng->engine());
    for (std::size_t j = 0; j < k; ++j) masked.observed[rows[j]] = 0;
  };

  mask_top_ranked(0.0, spec.frac_nontrial);
  if (spec.trial_rule == TrialMarRule::ranked) {
    mask_top_ranked(1.0, spec.frac_trial);
  } else {
    mask_random(1.0, spec.frac_trial);
  }
  return out;
}

}  // namespace ipswlab
