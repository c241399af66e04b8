#pragma once

#include <cstddef>
#include <fstream>
#include <string>
#include <vector>

namespace kervolt::csv {

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;  // data rows only
  std::vector<std::size_t> line_numbers;       // 1-based file line per row
};

// Plain comma-separated values, no quoting; cells are trimmed, blank lines
// skipped. Throws std::runtime_error on I/O failure.
Table read(const std::string& path);

void expect_header(const Table& table, const std::vector<std::string>& expected,
                   const std::string& path);

double to_double(const std::string& cell, const std::string& path,
                 std::size_t line, const std::string& column);
double to_double_or(const std::string& cell, double fallback,
                    const std::string& path, std::size_t line,
                    const std::string& column);
long to_long(const std::string& cell, const std::string& path, std::size_t line,
             const std::string& column);

// Round-trip-exact decimal rendering (17 significant digits).
std::string g17(double v);

// Writes through a temp file and renames on commit; a failure or an early
// destruction never leaves a partial output behind.
class AtomicFile {
 public:
  explicit AtomicFile(std::string path);
  ~AtomicFile();
  AtomicFile(const AtomicFile&) = delete;
  AtomicFile& operator=(const AtomicFile&) = delete;

  std::ostream& stream() { return out_; }
  void commit();

 private:
  std::string path_;
  std::string tmp_path_;
  std::ofstream out_;
  bool committed_ = false;
};

}  // namespace kervolt::csv
