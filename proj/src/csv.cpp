#include "kervolt/csv.hpp"

#include <cerrno>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <sstream>
#include <stdexcept>

namespace kervolt::csv {

namespace {

std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r\n");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t\r\n");
  return s.substr(begin, end - begin + 1);
}

std::vector<std::string> split_row(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) cells.push_back(trim(cell));
  if (!line.empty() && line.back() == ',') cells.push_back("");
  return cells;
}

[[noreturn]] void fail(const std::string& path, std::size_t line,
                       const std::string& what) {
  throw std::runtime_error(path + ":" + std::to_string(line) + ": " + what);
}

}  // namespace

Table read(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  Table table;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    if (table.header.empty()) {
      table.header = split_row(line);
    } else {
      table.rows.push_back(split_row(line));
      table.line_numbers.push_back(line_no);
    }
  }
  if (table.header.empty())
    throw std::runtime_error(path + ": missing header row");
  return table;
}

void expect_header(const Table& table, const std::vector<std::string>& expected,
                   const std::string& path) {
  if (table.header != expected) {
    std::string want;
    for (std::size_t i = 0; i < expected.size(); ++i)
      want += (i ? "," : "") + expected[i];
    throw std::runtime_error(path + ": expected header `" + want + "`");
  }
}

double to_double(const std::string& cell, const std::string& path,
                 std::size_t line, const std::string& column) {
  if (cell.empty()) fail(path, line, "empty " + column + " value");
  char* end = nullptr;
  errno = 0;
  const double v = std::strtod(cell.c_str(), &end);
  if (errno != 0 || end != cell.c_str() + cell.size())
    fail(path, line, "malformed " + column + " value `" + cell + "`");
  return v;
}

double to_double_or(const std::string& cell, double fallback,
                    const std::string& path, std::size_t line,
                    const std::string& column) {
  if (cell.empty()) return fallback;
  return to_double(cell, path, line, column);
}

long to_long(const std::string& cell, const std::string& path, std::size_t line,
             const std::string& column) {
  if (cell.empty()) fail(path, line, "empty " + column + " value");
  char* end = nullptr;
  errno = 0;
  const long v = std::strtol(cell.c_str(), &end, 10);
  if (errno != 0 || end != cell.c_str() + cell.size())
    fail(path, line, "malformed " + column + " value `" + cell + "`");
  return v;
}

std::string g17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

AtomicFile::AtomicFile(std::string path)
    : path_(std::move(path)), tmp_path_(path_ + ".tmp") {
  out_.open(tmp_path_, std::ios::binary | std::ios::trunc);
  if (!out_) throw std::runtime_error("cannot open " + tmp_path_ + " for write");
}

AtomicFile::~AtomicFile() {
  if (!committed_) {
    out_.close();
    std::error_code ec;
    std::filesystem::remove(tmp_path_, ec);
  }
}

void AtomicFile::commit() {
  out_.flush();
  if (!out_) throw std::runtime_error("write failed for " + tmp_path_);
  out_.close();
  std::error_code ec;
  std::filesystem::rename(tmp_path_, path_, ec);
  if (ec) throw std::runtime_error("cannot rename " + tmp_path_ + " to " + path_);
  committed_ = true;
}

}  // namespace kervolt::csv
