#include "ifl/csv.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace ifl {

void CurveTable::add(const std::string& name, std::vector<double> values) {
  if (has(name)) throw std::invalid_argument("duplicate curve name '" + name + "'");
  if (values.size() != steps.size())
    throw std::invalid_argument("curve '" + name + "' length differs from the step column");
  names.push_back(name);
  columns.push_back(std::move(values));
}

const std::vector<double>& CurveTable::column(const std::string& name) const {
  for (size_t i = 0; i < names.size(); ++i)
    if (names[i] == name) return columns[i];
  throw std::out_of_range("no curve named '" + name + "'");
}

bool CurveTable::has(const std::string& name) const {
  for (const auto& n : names)
    if (n == name) return true;
  return false;
}

std::string to_csv(const CurveTable& t) {
  std::string out = "step";
  for (const auto& n : t.names) out += "," + n;
  out += "\n";
  char buf[64];
  for (size_t r = 0; r < t.steps.size(); ++r) {
    out += std::to_string(t.steps[r]);
    for (const auto& col : t.columns) {
      std::snprintf(buf, sizeof buf, ",%.17g", col[r]);
      out += buf;
    }
    out += "\n";
  }
  return out;
}

void write_csv(const CurveTable& table, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open '" + path + "' for writing");
  os << to_csv(table);
  if (!os) throw std::runtime_error("failed writing '" + path + "'");
}

namespace {

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> cells;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

}  // namespace

CurveTable parse_csv(const std::string& text) {
  std::istringstream is(text);
  std::string line;
  if (!std::getline(is, line)) throw std::invalid_argument("csv is empty");
  const auto header = split(line);
  if (header.empty() || header[0] != "step") throw std::invalid_argument("csv header must start with 'step'");
  CurveTable t;
  t.names.assign(header.begin() + 1, header.end());
  t.columns.resize(t.names.size());
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto cells = split(line);
    if (cells.size() != header.size()) throw std::invalid_argument("csv row has wrong number of cells");
    t.steps.push_back(std::stoi(cells[0]));
    for (size_t c = 1; c < cells.size(); ++c) t.columns[c - 1].push_back(std::stod(cells[c]));
  }
  return t;
}

CurveTable read_csv(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open '" + path + "'");
  std::stringstream ss;
  ss << is.rdbuf();
  return parse_csv(ss.str());
}

}  // namespace ifl
