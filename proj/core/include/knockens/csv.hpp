#pragma once

#include <Eigen/Core>
#include <filesystem>
#include <string>
#include <vector>

namespace knockens {

/// Numeric CSV table: comma separated, one header row, '.' decimal separator.
struct CsvTable {
  std::vector<std::string> header;
  Eigen::MatrixXd values;  // rows x header.size()

  int column_index(const std::string& name) const;  // -1 when absent
};

CsvTable read_csv(const std::filesystem::path& path);

/// Writes doubles with "%.17g" so values round-trip exactly and output bytes
/// are deterministic.
std::string format_double(double v);

void write_csv(const std::filesystem::path& path, const std::vector<std::string>& header,
               const Eigen::MatrixXd& values);

}  // namespace knockens
