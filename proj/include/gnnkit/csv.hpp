#pragma once

#include <cstdint>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

// A RunRecord is the on-disk trace of one command: every resolved config
// value, the dataset content hash, and a metric table.  Serialized as CSV
// with '#' comment headers; re-running the command with the same flags and
// seed reproduces the body byte for byte (timing columns aside).

namespace gnnkit {

class RunRecord {
 public:
  explicit RunRecord(std::string command) : command_(std::move(command)) {}

  void set(const std::string& key, const std::string& value);
  void set(const std::string& key, const char* value);
  void set(const std::string& key, double value);
  void set(const std::string& key, std::int64_t value);
  void set(const std::string& key, int value);
  void set(const std::string& key, bool value);
  void set_hash(const std::string& key, std::uint64_t value);

  void set_columns(std::vector<std::string> columns);
  void add_row(std::vector<std::string> cells);

  const std::vector<std::pair<std::string, std::string>>& config() const {
    return config_;
  }
  const std::vector<std::string>& columns() const { return columns_; }
  const std::vector<std::vector<std::string>>& rows() const { return rows_; }

  void write(std::ostream& os) const;
  void write_file(const std::string& path) const;

  static std::string format_double(double v);
  static std::string format_hash(std::uint64_t v);

 private:
  std::string command_;
  std::vector<std::pair<std::string, std::string>> config_;
  std::vector<std::string> columns_;
  std::vector<std::vector<std::string>> rows_;
};

}  // namespace gnnkit
