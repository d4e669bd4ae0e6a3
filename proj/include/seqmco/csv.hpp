#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace seqmco {

// Minimal CSV document builder: UTF-8, comma separated, one header row.
// Doubles are printed with 17 significant digits so re-runs compare
// byte-for-byte.
class CsvWriter {
 public:
  explicit CsvWriter(std::vector<std::string> header);

  void add_row(std::vector<std::string> cells);
  std::string str() const;
  void write_file(const std::filesystem::path& path) const;

  static std::string fmt(double v);
  static std::string fmt(std::size_t v);
  static std::string fmt(long long v);

 private:
  std::vector<std::string> header_;
  std::vector<std::vector<std::string>> rows_;
};

}  // namespace seqmco
