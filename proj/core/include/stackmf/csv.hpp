#pragma once

#include <fstream>
#include <string>
#include <vector>

namespace stackmf {

/// Formats a double with 17 significant digits; round-trips exactly.
std::string format_double(double v);

/// Minimal CSV writer with fixed column order and reproducible float text.
class CsvWriter {
 public:
  explicit CsvWriter(const std::string& path);

  void write_header(const std::vector<std::string>& columns);
  void begin_row();
  void field(double v);
  void field(long long v);
  void field(int v) { field(static_cast<long long>(v)); }
  void field(const std::string& v);
  void end_row();

  const std::string& path() const { return path_; }

 private:
  std::ofstream out_;
  std::string path_;
  bool first_in_row_ = true;
  void sep();
};

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  int column(const std::string& name) const;  // -1 when absent
  double number(size_t row, int col) const;
};

CsvTable read_csv(const std::string& path);

}  // namespace stackmf
