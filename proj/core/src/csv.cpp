#include "knockens/csv.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "knockens/errors.hpp"

namespace knockens {

namespace {

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::stringstream ss(line);
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string::npos) return "";
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

}  // namespace

int CsvTable::column_index(const std::string& name) const {
  for (std::size_t i = 0; i < header.size(); ++i)
    if (header[i] == name) return static_cast<int>(i);
  return -1;
}

CsvTable read_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open CSV file: " + path.string());

  std::string line;
  if (!std::getline(in, line)) throw DataError("CSV file has no header row: " + path.string());

  CsvTable table;
  for (const auto& cell : split_line(line)) table.header.push_back(trim(cell));
  const std::size_t cols = table.header.size();
  if (cols == 0) throw DataError("CSV header row is empty: " + path.string());

  std::vector<double> data;
  std::size_t rows = 0;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    const auto cells = split_line(line);
    if (cells.size() != cols)
      throw DataError("CSV row " + std::to_string(lineno) + " has " +
                      std::to_string(cells.size()) + " cells, expected " + std::to_string(cols) +
                      ": " + path.string());
    for (std::size_t c = 0; c < cols; ++c) {
      const std::string cell = trim(cells[c]);
      char* end = nullptr;
      const double v = std::strtod(cell.c_str(), &end);
      if (cell.empty() || end != cell.c_str() + cell.size())
        throw DataError("non-numeric cell '" + cell + "' at row " + std::to_string(lineno) +
                        ", column '" + table.header[c] + "': " + path.string());
      data.push_back(v);
    }
    ++rows;
  }

  table.values.resize(rows, cols);
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t c = 0; c < cols; ++c) table.values(i, c) = data[i * cols + c];
  return table;
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void write_csv(const std::filesystem::path& path, const std::vector<std::string>& header,
               const Eigen::MatrixXd& values) {
  if (header.size() != static_cast<std::size_t>(values.cols()))
    throw DataError("CSV header size does not match column count");
  std::ofstream out(path);
  if (!out) throw IoError("cannot write CSV file: " + path.string());
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (i) out << ',';
    out << header[i];
  }
  out << '\n';
  for (Eigen::Index r = 0; r < values.rows(); ++r) {
    for (Eigen::Index c = 0; c < values.cols(); ++c) {
      if (c) out << ',';
      out << format_double(values(r, c));
    }
    out << '\n';
  }
  if (!out) throw IoError("error while writing CSV file: " + path.string());
}

}  // namespace knockens
