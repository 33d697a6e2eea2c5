#include "inverseflow/dataset.hpp"

#include <cstdio>
#include <istream>
#include <ostream>
#include <sstream>

namespace inverseflow {

std::string to_string(Fidelity f) { return f == Fidelity::Low ? "low" : "high"; }

Fidelity fidelity_from(const std::string& s) {
  if (s == "low") return Fidelity::Low;
  if (s == "high") return Fidelity::High;
  throw ConfigError("fidelity must be 'low' or 'high', got '" + s + "'");
}

Dataset Dataset::empty(Eigen::Index d, Eigen::Index m, double cost_ratio) {
  Dataset ds;
  ds.x.resize(0, d);
  ds.y.resize(0, m);
  for (Eigen::Index k = 0; k < d; ++k) ds.x_names.push_back("x" + std::to_string(k + 1));
  for (Eigen::Index k = 0; k < m; ++k) ds.y_names.push_back("y" + std::to_string(k + 1));
  ds.cost_ratio = cost_ratio;
  return ds;
}

void Dataset::validate() const {
  require_shape(x.rows() == y.rows() && static_cast<std::size_t>(x.rows()) == fidelity.size(),
                "dataset row counts disagree across X, Y and fidelity");
  require_shape(static_cast<Eigen::Index>(x_names.size()) == x.cols() &&
                    static_cast<Eigen::Index>(y_names.size()) == y.cols(),
                "dataset column names do not match column counts");
  if (!(cost_ratio > 1.0)) throw ConfigError("cost_ratio must exceed 1");
}

void Dataset::append(const Vec& xi, const Vec& yi, Fidelity f) {
  require_shape(xi.size() == x.cols() && yi.size() == y.cols(), "dataset append: row shape mismatch");
  x.conservativeResize(x.rows() + 1, Eigen::NoChange);
  y.conservativeResize(y.rows() + 1, Eigen::NoChange);
  x.row(x.rows() - 1) = xi.transpose();
  y.row(y.rows() - 1) = yi.transpose();
  fidelity.push_back(f);
}

std::vector<Eigen::Index> Dataset::rows_with(Fidelity f) const {
  std::vector<Eigen::Index> out;
  for (std::size_t i = 0; i < fidelity.size(); ++i)
    if (fidelity[i] == f) out.push_back(static_cast<Eigen::Index>(i));
  return out;
}

Eigen::Index Dataset::count(Fidelity f) const { return static_cast<Eigen::Index>(rows_with(f).size()); }

Dataset Dataset::subset(const std::vector<Eigen::Index>& rows) const {
  Dataset out;
  out.x.resize(static_cast<Eigen::Index>(rows.size()), x.cols());
  out.y.resize(static_cast<Eigen::Index>(rows.size()), y.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out.x.row(static_cast<Eigen::Index>(i)) = x.row(rows[i]);
    out.y.row(static_cast<Eigen::Index>(i)) = y.row(rows[i]);
    out.fidelity.push_back(fidelity.at(static_cast<std::size_t>(rows[i])));
  }
  out.x_names = x_names;
  out.y_names = y_names;
  out.cost_ratio = cost_ratio;
  return out;
}

namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) {
    while (!cell.empty() && (cell.back() == '\r' || cell.back() == ' ')) cell.pop_back();
    while (!cell.empty() && cell.front() == ' ') cell.erase(cell.begin());
    out.push_back(cell);
  }
  return out;
}

}  // namespace

void Dataset::write_csv(std::ostream& os) const {
  validate();
  for (const auto& n : x_names) os << n << ',';
  for (const auto& n : y_names) os << n << ',';
  os << "fidelity\n";
  for (Eigen::Index r = 0; r < rows(); ++r) {
    for (Eigen::Index c = 0; c < x.cols(); ++c) os << fmt(x(r, c)) << ',';
    for (Eigen::Index c = 0; c < y.cols(); ++c) os << fmt(y(r, c)) << ',';
    os << to_string(fidelity[static_cast<std::size_t>(r)]) << '\n';
  }
}

Dataset Dataset::read_csv(std::istream& is, double cost_ratio) {
  std::string line;
  std::vector<std::string> header;
  while (std::getline(is, line)) {
    if (line.empty() || line[0] == '#') continue;
    header = split_csv(line);
    break;
  }
  if (header.empty() || header.back() != "fidelity") throw ConfigError("dataset CSV must end with a 'fidelity' column");
  Dataset ds;
  ds.cost_ratio = cost_ratio;
  for (std::size_t i = 0; i + 1 < header.size(); ++i) {
    const auto& h = header[i];
    if (!h.empty() && h[0] == 'x') {
      if (!ds.y_names.empty()) throw ConfigError("dataset CSV: input columns must precede outputs");
      ds.x_names.push_back(h);
    } else if (!h.empty() && h[0] == 'y') {
      ds.y_names.push_back(h);
    } else {
      throw ConfigError("dataset CSV: column '" + h + "' is neither x* nor y*");
    }
  }
  const auto d = static_cast<Eigen::Index>(ds.x_names.size());
  const auto m = static_cast<Eigen::Index>(ds.y_names.size());
  ds.x.resize(0, d);
  ds.y.resize(0, m);
  std::size_t lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    const auto cells = split_csv(line);
    if (cells.size() != header.size()) {
      throw ConfigError("dataset CSV line " + std::to_string(lineno) + ": expected " +
                        std::to_string(header.size()) + " cells");
    }
    Vec xi(d), yi(m);
    try {
      for (Eigen::Index k = 0; k < d; ++k) xi(k) = std::stod(cells[static_cast<std::size_t>(k)]);
      for (Eigen::Index k = 0; k < m; ++k) yi(k) = std::stod(cells[static_cast<std::size_t>(d + k)]);
    } catch (const std::logic_error&) {
      throw ConfigError("dataset CSV line " + std::to_string(lineno) + ": bad number");
    }
    ds.append(xi, yi, fidelity_from(cells.back()));
  }
  ds.validate();
  return ds;
}

double equivalent_cost(Eigen::Index n_high, Eigen::Index n_low, double cost_ratio) {
  if (!(cost_ratio > 0.0)) throw ConfigError("cost_ratio must be positive");
  return static_cast<double>(n_high) + static_cast<double>(n_low) / cost_ratio;
}

}  // namespace inverseflow
