#include "oewt/csv.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <unordered_map>

namespace oewt {

std::string format_double(double v) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

namespace {

std::string trim(const std::string& s) {
  auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::stringstream ss(line);
  while (std::getline(ss, cell, ',')) out.push_back(trim(cell));
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

double parse_double(const std::string& cell, const std::filesystem::path& path,
                    std::size_t row, const std::string& col) {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
  if (ec != std::errc{} || ptr != cell.data() + cell.size()) {
    throw ValidationError(path.string() + ": row " + std::to_string(row) +
                          ", column '" + col + "': cannot parse '" + cell + "'");
  }
  if (!std::isfinite(v)) {
    throw ValidationError(path.string() + ": row " + std::to_string(row) +
                          ", column '" + col + "': non-finite value");
  }
  return v;
}

std::int64_t parse_id(const std::string& cell, const std::filesystem::path& path,
                      std::size_t row) {
  std::int64_t v = 0;
  auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
  if (ec != std::errc{} || ptr != cell.data() + cell.size()) {
    throw ValidationError(path.string() + ": row " + std::to_string(row) +
                          ": cannot parse id '" + cell + "'");
  }
  return v;
}

struct RawTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

RawTable read_table(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open " + path.string());
  RawTable t;
  std::string line;
  if (!std::getline(in, line)) {
    throw ValidationError(path.string() + ": empty file, header row required");
  }
  t.header = split_line(line);
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    auto cells = split_line(line);
    if (cells.size() != t.header.size()) {
      throw ValidationError(path.string() + ": row " + std::to_string(t.rows.size() + 1) +
                            " has " + std::to_string(cells.size()) + " cells, header has " +
                            std::to_string(t.header.size()));
    }
    t.rows.push_back(std::move(cells));
  }
  if (t.rows.empty()) throw ValidationError(path.string() + ": no data rows");
  return t;
}

std::optional<std::size_t> find_col(const RawTable& t, const std::string& name) {
  auto it = std::find(t.header.begin(), t.header.end(), name);
  if (it == t.header.end()) return std::nullopt;
  return static_cast<std::size_t>(it - t.header.begin());
}

std::size_t require_col(const RawTable& t, const std::string& name,
                        const std::filesystem::path& path) {
  auto idx = find_col(t, name);
  if (!idx) throw SchemaError(path.string() + ": missing required column '" + name + "'");
  return *idx;
}

// Covariate columns: the explicit schema list, or every column not claimed
// by a named role, in header order.
std::vector<std::size_t> covariate_cols(const RawTable& t, const CsvSchema& schema,
                                        const std::filesystem::path& path) {
  std::vector<std::size_t> cols;
  if (!schema.covariates.empty()) {
    for (const auto& name : schema.covariates) cols.push_back(require_col(t, name, path));
    return cols;
  }
  for (std::size_t j = 0; j < t.header.size(); ++j) {
    const auto& name = t.header[j];
    if (name == schema.id || name == schema.weight || name == schema.overlap ||
        name == schema.outcome || name == schema.ref_weight || name == "pi_b_true") {
      continue;
    }
    cols.push_back(j);
  }
  return cols;
}

void check_dimension(Eigen::Index p, std::optional<Eigen::Index> expected,
                     const std::filesystem::path& path) {
  if (expected && p != *expected) {
    throw DimensionError(path.string() + ": has p=" + std::to_string(p) +
                         " design columns, expected p=" + std::to_string(*expected));
  }
}

}  // namespace

ReferenceSample load_reference_sample(const std::filesystem::path& path,
                                      const CsvSchema& schema,
                                      std::optional<Eigen::Index> expected_p) {
  const auto t = read_table(path);
  const auto id_col = require_col(t, schema.id, path);
  const auto w_col = require_col(t, schema.weight, path);
  const auto flag_col = find_col(t, schema.overlap);
  const auto x_cols = covariate_cols(t, schema, path);

  const auto n = static_cast<Eigen::Index>(t.rows.size());
  ReferenceSample a;
  a.ids.resize(n);
  a.dA.resize(n);
  a.XA.resize(n, 1 + static_cast<Eigen::Index>(x_cols.size()));
  a.XA.col(0).setOnes();
  std::vector<std::uint8_t> flags(flag_col ? n : 0);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& row = t.rows[i];
    const auto r = static_cast<std::size_t>(i) + 1;
    a.ids[i] = parse_id(row[id_col], path, r);
    a.dA[i] = parse_double(row[w_col], path, r, schema.weight);
    for (std::size_t j = 0; j < x_cols.size(); ++j) {
      a.XA(i, 1 + static_cast<Eigen::Index>(j)) =
          parse_double(row[x_cols[j]], path, r, t.header[x_cols[j]]);
    }
    if (flag_col) {
      const double f = parse_double(row[*flag_col], path, r, schema.overlap);
      if (f != 0.0 && f != 1.0) {
        throw ValidationError(path.string() + ": row " + std::to_string(r) +
                              ": overlap flag must be 0 or 1");
      }
      flags[i] = static_cast<std::uint8_t>(f);
    }
  }
  if (flag_col) a.delta = std::move(flags);
  check_dimension(a.p(), expected_p, path);
  a.validate();
  return a;
}

BigSample load_big_sample(const std::filesystem::path& path, const CsvSchema& schema,
                          std::optional<Eigen::Index> expected_p) {
  const auto t = read_table(path);
  const auto id_col = require_col(t, schema.id, path);
  const auto y_col = require_col(t, schema.outcome, path);
  const auto dref_col = find_col(t, schema.ref_weight);
  const auto x_cols = covariate_cols(t, schema, path);

  const auto n = static_cast<Eigen::Index>(t.rows.size());
  BigSample b;
  b.ids.resize(n);
  b.yB.resize(n);
  b.XB.resize(n, 1 + static_cast<Eigen::Index>(x_cols.size()));
  b.XB.col(0).setOnes();
  Eigen::VectorXd dref(dref_col ? n : 0);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& row = t.rows[i];
    const auto r = static_cast<std::size_t>(i) + 1;
    b.ids[i] = parse_id(row[id_col], path, r);
    b.yB[i] = parse_double(row[y_col], path, r, schema.outcome);
    for (std::size_t j = 0; j < x_cols.size(); ++j) {
      b.XB(i, 1 + static_cast<Eigen::Index>(j)) =
          parse_double(row[x_cols[j]], path, r, t.header[x_cols[j]]);
    }
    if (dref_col) dref[i] = parse_double(row[*dref_col], path, r, schema.ref_weight);
  }
  if (dref_col) b.d_ref = std::move(dref);
  check_dimension(b.p(), expected_p, path);
  b.validate();
  return b;
}

namespace {

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write " + path.string());
  return out;
}

void write_covariate_header(std::ostream& out, Eigen::Index p) {
  for (Eigen::Index j = 1; j < p; ++j) out << ",x" << j;
}

void write_covariates(std::ostream& out, const Eigen::MatrixXd& x, Eigen::Index i) {
  for (Eigen::Index j = 1; j < x.cols(); ++j) out << ',' << format_double(x(i, j));
}

}  // namespace

void write_reference_csv(const std::filesystem::path& path, const ReferenceSample& a,
                         const CsvSchema& schema) {
  auto out = open_out(path);
  out << schema.id;
  write_covariate_header(out, a.p());
  out << ',' << schema.weight;
  if (a.delta) out << ',' << schema.overlap;
  out << '\n';
  for (Eigen::Index i = 0; i < a.n(); ++i) {
    out << a.ids[i];
    write_covariates(out, a.XA, i);
    out << ',' << format_double(a.dA[i]);
    if (a.delta) out << ',' << int((*a.delta)[i]);
    out << '\n';
  }
}

void write_big_csv(const std::filesystem::path& path, const BigSample& b,
                   const CsvSchema& schema) {
  auto out = open_out(path);
  out << schema.id;
  write_covariate_header(out, b.p());
  out << ',' << schema.outcome;
  if (b.d_ref) out << ',' << schema.ref_weight;
  out << '\n';
  for (Eigen::Index i = 0; i < b.n(); ++i) {
    out << b.ids[i];
    write_covariates(out, b.XB, i);
    out << ',' << format_double(b.yB[i]);
    if (b.d_ref) out << ',' << format_double((*b.d_ref)[i]);
    out << '\n';
  }
}

void write_population_csv(const std::filesystem::path& path, const Population& pop) {
  auto out = open_out(path);
  out << "id";
  write_covariate_header(out, pop.p());
  out << ",y";
  if (pop.pi_b_true) out << ",pi_b_true";
  out << '\n';
  for (Eigen::Index i = 0; i < pop.n(); ++i) {
    out << (i + 1);
    write_covariates(out, pop.X, i);
    out << ',' << format_double(pop.y[i]);
    if (pop.pi_b_true) out << ',' << format_double((*pop.pi_b_true)[i]);
    out << '\n';
  }
}

void write_weights_csv(const std::filesystem::path& path,
                       const std::vector<std::int64_t>& ids,
                       const Eigen::VectorXd& pi_hat) {
  if (static_cast<Eigen::Index>(ids.size()) != pi_hat.size()) {
    throw ValidationError("weights csv: id and propensity lengths differ");
  }
  auto out = open_out(path);
  out << "id,pi_hat,weight\n";
  for (Eigen::Index i = 0; i < pi_hat.size(); ++i) {
    out << ids[i] << ',' << format_double(pi_hat[i]) << ','
        << format_double(1.0 / pi_hat[i]) << '\n';
  }
}

WeightsFile load_weights_csv(const std::filesystem::path& path) {
  const auto t = read_table(path);
  const auto id_col = require_col(t, "id", path);
  const auto pi_col = require_col(t, "pi_hat", path);

  const auto n = static_cast<Eigen::Index>(t.rows.size());
  WeightsFile w;
  w.ids.resize(n);
  w.pi_hat.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto r = static_cast<std::size_t>(i) + 1;
    w.ids[i] = parse_id(t.rows[i][id_col], path, r);
    w.pi_hat[i] = parse_double(t.rows[i][pi_col], path, r, "pi_hat");
    if (!(w.pi_hat[i] > 0.0)) {
      throw ValidationError(path.string() + ": row " + std::to_string(r) +
                            ": pi_hat must be strictly positive");
    }
  }
  return w;
}

}  // namespace oewt
