#pragma once

#include <string>
#include <vector>

namespace ifl {

/// One figure's worth of curves indexed by step. Column 0 of the file is `step`.
struct CurveTable {
  std::vector<int> steps;
  std::vector<std::string> names;
  std::vector<std::vector<double>> columns;

  void add(const std::string& name, std::vector<double> values);
  const std::vector<double>& column(const std::string& name) const;
  bool has(const std::string& name) const;
};

/// Writes with 17 significant digits, comma separated, header first.
std::string to_csv(const CurveTable& table);
void write_csv(const CurveTable& table, const std::string& path);

CurveTable parse_csv(const std::string& text);
CurveTable read_csv(const std::string& path);

}  // namespace ifl
