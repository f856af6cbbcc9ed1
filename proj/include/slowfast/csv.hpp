#pragma once

#include "slowfast/types.hpp"

#include <fstream>
#include <string>
#include <variant>
#include <vector>

namespace slowfast {

/// Floats rendered with 17 significant digits so reruns diff byte-identically.
std::string fmt17(double v);

using CsvCell = std::variant<double, long long, std::string>;

class CsvWriter {
 public:
  CsvWriter(const std::string& path, const std::vector<std::string>& columns);
  void row(const std::vector<CsvCell>& cells);
  void close();

 private:
  std::ofstream out_;
  std::size_t n_columns_;
};

void write_text_file(const std::string& path, const std::string& body);
void ensure_directory(const std::string& path);

}  // namespace slowfast
