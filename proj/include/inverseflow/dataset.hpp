#pragma once

#include "inverseflow/common.hpp"

#include <iosfwd>
#include <string>
#include <vector>

namespace inverseflow {

enum class Fidelity { Low, High };

std::string to_string(Fidelity f);
Fidelity fidelity_from(const std::string& s);

// Universal training container: inputs, outputs and a fidelity tag per row.
struct Dataset {
  Mat x;  // N x d
  Mat y;  // N x m
  std::vector<Fidelity> fidelity;
  std::vector<std::string> x_names;
  std::vector<std::string> y_names;
  double cost_ratio = 5.0;  // cost(high) / cost(low)

  static Dataset empty(Eigen::Index d, Eigen::Index m, double cost_ratio = 5.0);

  Eigen::Index rows() const { return x.rows(); }
  Eigen::Index dim() const { return x.cols(); }
  Eigen::Index outputs() const { return y.cols(); }

  void validate() const;
  void append(const Vec& xi, const Vec& yi, Fidelity f);
  std::vector<Eigen::Index> rows_with(Fidelity f) const;
  Eigen::Index count(Fidelity f) const;
  Dataset subset(const std::vector<Eigen::Index>& rows) const;

  // CSV: header x1..xd,y1..ym,fidelity. Lines starting with '#' are metadata.
  void write_csv(std::ostream& os) const;
  static Dataset read_csv(std::istream& is, double cost_ratio = 5.0);
};

// N_high + N_low / cost_ratio.
double equivalent_cost(Eigen::Index n_high, Eigen::Index n_low, double cost_ratio);

}  // namespace inverseflow
