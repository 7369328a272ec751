#pragma once

// Minimal CSV support for the flat numeric tables this project reads and
// writes. No quoting: fields never contain commas.

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace spoofsim::csv {

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  // Column position by name, if present.
  [[nodiscard]] std::optional<std::size_t> column(std::string_view name) const;
};

// Parses text into a table. Blank lines and lines starting with '#' are
// skipped; the first remaining line is the header. Throws InvalidArgument
// when a row has the wrong number of fields.
[[nodiscard]] Table parse(std::string_view text);
[[nodiscard]] Table read_file(const std::filesystem::path& path);
[[nodiscard]] std::string read_text(const std::filesystem::path& path);

[[nodiscard]] double to_double(std::string_view field);
[[nodiscard]] long long to_int(std::string_view field);

// Shortest round-trippable text for a double; identical inputs always give
// identical bytes.
[[nodiscard]] std::string format(double value);

[[nodiscard]] std::string join(const std::vector<std::string>& fields);

}  // namespace spoofsim::csv
