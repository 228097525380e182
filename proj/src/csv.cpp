#include "gnnkit/csv.hpp"

#include <cstdio>
#include <fstream>
#include <stdexcept>

namespace gnnkit {

void RunRecord::set(const std::string& key, const std::string& value) {
  for (auto& [k, v] : config_)
    if (k == key) {
      v = value;
      return;
    }
  config_.emplace_back(key, value);
}

void RunRecord::set(const std::string& key, const char* value) {
  set(key, std::string(value));
}
void RunRecord::set(const std::string& key, double value) {
  set(key, format_double(value));
}
void RunRecord::set(const std::string& key, std::int64_t value) {
  set(key, std::to_string(value));
}
void RunRecord::set(const std::string& key, int value) {
  set(key, std::to_string(value));
}
void RunRecord::set(const std::string& key, bool value) {
  set(key, std::string(value ? "true" : "false"));
}
void RunRecord::set_hash(const std::string& key, std::uint64_t value) {
  set(key, format_hash(value));
}

void RunRecord::set_columns(std::vector<std::string> columns) {
  columns_ = std::move(columns);
}

void RunRecord::add_row(std::vector<std::string> cells) {
  if (cells.size() != columns_.size())
    throw std::logic_error("RunRecord: row width " +
                           std::to_string(cells.size()) + " vs " +
                           std::to_string(columns_.size()) + " columns");
  rows_.push_back(std::move(cells));
}

void RunRecord::write(std::ostream& os) const {
  os << "# gnnkit " << command_ << "\n";
  for (const auto& [k, v] : config_) os << "# " << k << "=" << v << "\n";
  for (std::size_t i = 0; i < columns_.size(); ++i)
    os << (i ? "," : "") << columns_[i];
  os << "\n";
  for (const auto& row : rows_) {
    for (std::size_t i = 0; i < row.size(); ++i) os << (i ? "," : "") << row[i];
    os << "\n";
  }
}

void RunRecord::write_file(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  write(out);
}

std::string RunRecord::format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

std::string RunRecord::format_hash(std::uint64_t v) {
  char buf[24];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

}  // namespace gnnkit
