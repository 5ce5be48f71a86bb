#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace ipswlab {

enum class ColumnRole { Covariate, TrialIndicator, Treatment, Outcome, Weight, Derived };

std::string role_name(ColumnRole role);
ColumnRole parse_role(const std::string& name);  // case-insensitive

/// Derived columns are products of two named source columns.
struct DerivedRecipe {
  std::string source_a;
  std::string source_b;
};

struct Column {
  std::string name;
  ColumnRole role = ColumnRole::Covariate;
  std::vector<double> values;
  std::vector<std::uint8_t> observed;  // 1 = observed, 0 = masked
  std::optional<DerivedRecipe> recipe;
};

/// Column-oriented dataset with typed roles and an explicit missingness
/// mask. Missing entries are masked, never sentinel values, so the numeric
/// arrays stay clean for linear algebra. Value semantics throughout: the
/// operations below return new datasets, and const datasets are safe to
/// share across threads.
class Dataset {
public:
  Dataset() = default;

  std::size_t n_rows() const { return n_rows_; }
  std::size_t n_cols() const { return columns_.size(); }

  bool has_column(const std::string& name) const;
  std::size_t column_index(const std::string& name) const;  // throws ConfigError
  const Column& column(const std::string& name) const;
  const Column& column(std::size_t i) const { return columns_[i]; }
  Column& column_mut(std::size_t i) { return columns_[i]; }
  const std::vector<Column>& columns() const { return columns_; }

  /// First column with the given role, or nullptr. TrialIndicator,
  /// Treatment, Outcome and Weight are singletons by invariant.
  const Column* find_role(ColumnRole role) const;
  std::vector<std::string> covariate_names() const;

  /// Appends a validated column; enforces length and singleton-role
  /// invariants and the 0/1 constraint on indicator columns.
  void add_column(Column col);

  std::size_t count_masked(const std::string& name) const;

  /// Verifies value = source_a * source_b on jointly observed entries of
  /// every Derived column (or the named one).
  bool derived_consistent(const std::string& name = "") const;

private:
  std::size_t n_rows_ = 0;
  bool has_rows_ = false;
  std::vector<Column> columns_;
  std::map<std::string, std::size_t> index_;
};

/// Builds a dataset from named numeric arrays. NaN entries are the
/// in-memory missing sentinel and are converted to masked cells.
Dataset build_dataset(const std::vector<std::pair<std::string, std::vector<double>>>& columns,
                      const std::map<std::string, ColumnRole>& roles);

/// Stacks a trial dataset on top of a target dataset and adds a 0/1 trial
/// indicator column. Treatment/Outcome entries on target rows are masked
/// missing. In strict mode (default) asymmetric covariate sets are an
/// error; permissive mode fills absent columns as fully missing.
Dataset concat_trial_target(const Dataset& trial, const Dataset& target,
                            bool permissive = false,
                            const std::string& indicator_name = "S");

/// Adds `out` = `a` * `b` with role Derived; observed only where both
/// sources are observed.
Dataset add_derived_product(const Dataset& ds, const std::string& a,
                            const std::string& b, const std::string& out);

/// Row subset (indices may repeat, e.g. bootstrap resamples).
Dataset take_rows(const Dataset& ds, const std::vector<std::size_t>& rows);

// CSV: header row of column names; empty cell or literal "NA" = missing;
// roles are supplied by the caller, never inferred. Numbers are written
// with shortest round-trip formatting so seeded outputs are byte-stable.
Dataset read_csv(const std::string& path, const std::map<std::string, ColumnRole>& roles);
void write_csv(const Dataset& ds, const std::string& path);
std::string to_csv(const Dataset& ds);

std::map<std::string, ColumnRole> read_roles_json(const std::string& path);

}  // namespace ipswlab
