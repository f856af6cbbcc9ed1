#include "slowfast/csv.hpp"

#include <cstdio>
#include <filesystem>

namespace slowfast {

std::string fmt17(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

CsvWriter::CsvWriter(const std::string& path,
                     const std::vector<std::string>& columns)
    : out_(path), n_columns_(columns.size()) {
  if (!out_) fault(FaultKind::usage, "cannot open output file " + path);
  for (std::size_t i = 0; i < columns.size(); ++i) {
    if (i) out_ << ',';
    out_ << columns[i];
  }
  out_ << '\n';
}

void CsvWriter::row(const std::vector<CsvCell>& cells) {
  if (cells.size() != n_columns_)
    fault(FaultKind::usage, "csv row width mismatch");
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (i) out_ << ',';
    if (std::holds_alternative<double>(cells[i]))
      out_ << fmt17(std::get<double>(cells[i]));
    else if (std::holds_alternative<long long>(cells[i]))
      out_ << std::get<long long>(cells[i]);
    else
      out_ << std::get<std::string>(cells[i]);
  }
  out_ << '\n';
}

void CsvWriter::close() { out_.close(); }

void write_text_file(const std::string& path, const std::string& body) {
  std::ofstream out(path);
  if (!out) fault(FaultKind::usage, "cannot open output file " + path);
  out << body;
}

void ensure_directory(const std::string& path) {
  std::error_code ec;
  std::filesystem::create_directories(path, ec);
  if (ec) fault(FaultKind::usage, "cannot create output directory " + path);
}

}  // namespace slowfast
