#include "ipswlab/tabular.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "ipswlab/error.hpp"

namespace ipswlab {

std::string role_name(ColumnRole role) {
  switch (role) {
    case ColumnRole::Covariate: return "covariate";
    case ColumnRole::TrialIndicator: return "trial_indicator";
    case ColumnRole::Treatment: return "treatment";
    case ColumnRole::Outcome: return "outcome";
    case ColumnRole::Weight: return "weight";
    case ColumnRole::Derived: return "derived";
  }
  return "covariate";
}

ColumnRole parse_role(const std::string& name) {
  std::string s;
  for (char c : name) s.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  if (s == "covariate") return ColumnRole::Covariate;
  if (s == "trial_indicator" || s == "trialindicator") return ColumnRole::TrialIndicator;
  if (s == "treatment") return ColumnRole::Treatment;
  if (s == "outcome") return ColumnRole::Outcome;
  if (s == "weight") return ColumnRole::Weight;
  if (s == "derived") return ColumnRole::Derived;
  throw ConfigError("unknown column role '" + name + "'");
}

namespace {

bool is_singleton_role(ColumnRole role) {
  return role == ColumnRole::TrialIndicator || role == ColumnRole::Treatment ||
         role == ColumnRole::Outcome || role == ColumnRole::Weight;
}

bool binary_where_observed(const Column& col) {
  for (std::size_t i = 0; i < col.values.size(); ++i) {
    if (!col.observed[i]) continue;
    if (col.values[i] != 0.0 && col.values[i] != 1.0) return false;
  }
  return true;
}

// Shortest round-trip decimal representation.
std::string format_double(double v) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  (void)ec;
  return std::string(buf, ptr);
}

}  // namespace

bool Dataset::has_column(const std::string& name) const {
  return index_.count(name) > 0;
}

std::size_t Dataset::column_index(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw ConfigError("no column named '" + name + "'");
  return it->second;
}

const Column& Dataset::column(const std::string& name) const {
  return columns_[column_index(name)];
}

const Column* Dataset::find_role(ColumnRole role) const {
  for (const auto& col : columns_)
    if (col.role == role) return &col;
  return nullptr;
}

std::vector<std::string> Dataset::covariate_names() const {
  std::vector<std::string> out;
  for (const auto& col : columns_)
    if (col.role == ColumnRole::Covariate) out.push_back(col.name);
  return out;
}

void Dataset::add_column(Column col) {
  if (index_.count(col.name))
    throw ConfigError("column name collision: '" + col.name + "'");
  if (col.observed.size() != col.values.size())
    throw ConfigError("mask length mismatch in column '" + col.name + "'");
  if (has_rows_) {
    if (col.values.size() != n_rows_)
      throw ConfigError("length mismatch: column '" + col.name + "' has " +
                        std::to_string(col.values.size()) + " rows, dataset has " +
                        std::to_string(n_rows_));
  } else {
    n_rows_ = col.values.size();
    has_rows_ = true;
  }
  if (is_singleton_role(col.role) && find_role(col.role))
    throw ConfigError("duplicate singleton role '" + role_name(col.role) +
                      "' (column '" + col.name + "')");
  if ((col.role == ColumnRole::TrialIndicator || col.role == ColumnRole::Treatment) &&
      !binary_where_observed(col))
    throw ConfigError("non-binary indicator: column '" + col.name +
                      "' must contain only 0/1 where observed");
  if (col.role == ColumnRole::Derived && !col.recipe)
    throw ConfigError("derived column '" + col.name + "' has no recipe");
  index_[col.name] = columns_.size();
  columns_.push_back(std::move(col));
}

std::size_t Dataset::count_masked(const std::string& name) const {
  const Column& col = column(name);
  std::size_t n = 0;
  for (auto o : col.observed) n += (o == 0);
  return n;
}

bool Dataset::derived_consistent(const std::string& name) const {
  for (const auto& col : columns_) {
    if (col.role != ColumnRole::Derived) continue;
    if (!name.empty() && col.name != name) continue;
    const Column& a = column(col.recipe->source_a);
    const Column& b = column(col.recipe->source_b);
    for (std::size_t i = 0; i < n_rows_; ++i) {
      if (!col.observed[i]) continue;
      if (!a.observed[i] || !b.observed[i]) return false;
      if (col.values[i] != a.values[i] * b.values[i]) return false;
    }
  }
  return true;
}

Dataset build_dataset(const std::vector<std::pair<std::string, std::vector<double>>>& columns,
                      const std::map<std::string, ColumnRole>& roles) {
  Dataset ds;
  for (const auto& [name, values] : columns) {
    Column col;
    col.name = name;
    auto it = roles.find(name);
    col.role = it == roles.end() ? ColumnRole::Covariate : it->second;
    col.values = values;
    col.observed.assign(values.size(), 1);
    for (std::size_t i = 0; i < values.size(); ++i) {
      if (std::isnan(values[i])) {
        col.observed[i] = 0;
        col.values[i] = 0.0;
      }
    }
    ds.add_column(std::move(col));
  }
  return ds;
}

Dataset concat_trial_target(const Dataset& trial, const Dataset& target,
                            bool permissive, const std::string& indicator_name) {
  if (trial.find_role(ColumnRole::TrialIndicator) || target.find_role(ColumnRole::TrialIndicator))
    throw ConfigError("input to concat_trial_target already has a trial indicator");

  auto trial_covs = trial.covariate_names();
  auto target_covs = target.covariate_names();
  std::vector<std::string> all_covs = trial_covs;
  for (const auto& name : target_covs)
    if (std::find(all_covs.begin(), all_covs.end(), name) == all_covs.end())
      all_covs.push_back(name);
  if (!permissive) {
    for (const auto& name : all_covs)
      if (!trial.has_column(name) || !target.has_column(name))
        throw ConfigError("covariate name mismatch: '" + name +
                          "' is not present in both datasets (use permissive mode "
                          "to fill it as fully missing)");
  }

  const std::size_t n1 = trial.n_rows(), n0 = target.n_rows();
  const std::size_t n = n1 + n0;

  const Column* trial_a = trial.find_role(ColumnRole::Treatment);
  const Column* trial_y = trial.find_role(ColumnRole::Outcome);
  if (trial_a)
    for (auto o : trial_a->observed)
      if (!o) throw ConfigError("trial treatment column has masked entries");
  if (trial_y)
    for (auto o : trial_y->observed)
      if (!o) throw ConfigError("trial outcome column has masked entries");

  Dataset out;
  auto stack = [&](const std::string& name, ColumnRole role) {
    Column col;
    col.name = name;
    col.role = role;
    col.values.assign(n, 0.0);
    col.observed.assign(n, 0);
    auto copy_part = [&](const Dataset& part, std::size_t offset) {
      if (!part.has_column(name)) return;
      const Column& src = part.column(name);
      std::copy(src.values.begin(), src.values.end(), col.values.begin() + offset);
      std::copy(src.observed.begin(), src.observed.end(), col.observed.begin() + offset);
    };
    copy_part(trial, 0);
    copy_part(target, n1);
    out.add_column(std::move(col));
  };

  for (const auto& name : all_covs) stack(name, ColumnRole::Covariate);

  Column s;
  s.name = indicator_name;
  s.role = ColumnRole::TrialIndicator;
  s.values.assign(n, 0.0);
  std::fill(s.values.begin(), s.values.begin() + n1, 1.0);
  s.observed.assign(n, 1);
  out.add_column(std::move(s));

  // Treatment/Outcome exist in the output whenever the trial carries them;
  // target rows are present but masked.
  if (trial_a) stack(trial_a->name, ColumnRole::Treatment);
  if (trial_y) stack(trial_y->name, ColumnRole::Outcome);

  return out;
}

Dataset add_derived_product(const Dataset& ds, const std::string& a,
                            const std::string& b, const std::string& out) {
  if (ds.has_column(out)) throw ConfigError("column name collision: '" + out + "'");
  const Column& ca = ds.column(a);
  const Column& cb = ds.column(b);
  Dataset result = ds;
  Column col;
  col.name = out;
  col.role = ColumnRole::Derived;
  col.recipe = DerivedRecipe{a, b};
  col.values.assign(ds.n_rows(), 0.0);
  col.observed.assign(ds.n_rows(), 0);
  for (std::size_t i = 0; i < ds.n_rows(); ++i) {
    if (ca.observed[i] && cb.observed[i]) {
      col.values[i] = ca.values[i] * cb.values[i];
      col.observed[i] = 1;
    }
  }
  result.add_column(std::move(col));
  return result;
}

Dataset take_rows(const Dataset& ds, const std::vector<std::size_t>& rows) {
  Dataset out;
  for (const auto& src : ds.columns()) {
    Column col;
    col.name = src.name;
    col.role = src.role;
    col.recipe = src.recipe;
    col.values.reserve(rows.size());
    col.observed.reserve(rows.size());
    for (std::size_t r : rows) {
      col.values.push_back(src.values[r]);
      col.observed.push_back(src.observed[r]);
    }
    out.add_column(std::move(col));
  }
  return out;
}

std::string to_csv(const Dataset& ds) {
  std::ostringstream os;
  for (std::size_t j = 0; j < ds.n_cols(); ++j) {
    if (j) os << ',';
    os << ds.column(j).name;
  }
  os << '\n';
  for (std::size_t i = 0; i < ds.n_rows(); ++i) {
    for (std::size_t j = 0; j < ds.n_cols(); ++j) {
      if (j) os << ',';
      const Column& col = ds.column(j);
      if (col.observed[i]) os << format_double(col.values[i]);
    }
    os << '\n';
  }
  return os.str();
}

void write_csv(const Dataset& ds, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot open '" + path + "' for writing");
  f << to_csv(ds);
}

Dataset read_csv(const std::string& path, const std::map<std::string, ColumnRole>& roles) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open '" + path + "'");
  std::string line;
  if (!std::getline(f, line)) throw ConfigError("empty CSV file '" + path + "'");
  if (!line.empty() && line.back() == '\r') line.pop_back();

  auto split = [](const std::string& s) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : s) {
      if (c == ',') {
        out.push_back(cur);
        cur.clear();
      } else {
        cur.push_back(c);
      }
    }
    out.push_back(cur);
    return out;
  };

  std::vector<std::string> names = split(line);
  std::vector<std::vector<double>> values(names.size());
  std::vector<std::vector<std::uint8_t>> observed(names.size());

  std::size_t row = 0;
  while (std::getline(f, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() && f.eof()) break;
    auto cells = split(line);
    if (cells.size() != names.size())
      throw ConfigError("CSV row " + std::to_string(row + 2) + " has " +
                        std::to_string(cells.size()) + " cells, expected " +
                        std::to_string(names.size()));
    for (std::size_t j = 0; j < cells.size(); ++j) {
      const std::string& cell = cells[j];
      if (cell.empty() || cell == "NA") {
        values[j].push_back(0.0);
        observed[j].push_back(0);
        continue;
      }
      double v = 0.0;
      auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
      if (ec != std::errc() || ptr != cell.data() + cell.size())
        throw ConfigError("CSV cell '" + cell + "' in column '" + names[j] +
                          "' is not numeric");
      values[j].push_back(v);
      observed[j].push_back(1);
    }
    ++row;
  }

  Dataset ds;
  for (std::size_t j = 0; j < names.size(); ++j) {
    Column col;
    col.name = names[j];
    auto it = roles.find(names[j]);
    col.role = it == roles.end() ? ColumnRole::Covariate : it->second;
    col.values = std::move(values[j]);
    col.observed = std::move(observed[j]);
    ds.add_column(std::move(col));
  }
  return ds;
}

std::map<std::string, ColumnRole> read_roles_json(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open roles file '" + path + "'");
  nlohmann::json j;
  try {
    f >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("roles file '" + path + "': " + e.what());
  }
  if (!j.is_object()) throw ConfigError("roles file must be a JSON object");
  std::map<std::string, ColumnRole> roles;
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!it.value().is_string())
      throw ConfigError("role for '" + it.key() + "' must be a string");
    roles[it.key()] = parse_role(it.value().get<std::string>());
  }
  return roles;
}

}  // namespace ipswlab
