#pragma once

#include "json.hpp"

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace raretab {

/// Fixed-point text with the given number of decimals; non-finite or null gives "NA".
std::string format_fixed(double v, int decimals = 4);
std::string format_fixed(const nlohmann::json& v, int decimals = 4);

/// Regime label as a file-name stem: generator(arf,500) -> generator_arf_500.
std::string file_stem(std::string_view label);

struct CsvTable {
  std::string name;  // file name under tables/
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::string render() const;
};

/// Parses one CSV line with quoted fields.
std::vector<std::string> parse_csv_line(std::string_view line);

struct SvgFigure {
  std::string name;  // file name under figures/
  std::string svg;
};

/// Every table and figure is a pure function of report.json.
std::vector<CsvTable> report_tables(const nlohmann::json& report);
std::vector<SvgFigure> report_figures(const nlohmann::json& report);

/// Canonical report.json text (sorted keys, two-space indent, trailing newline).
std::string render_report_json(const nlohmann::json& report);

/// Writes report.json (when asked), tables/*.csv and figures/*.svg under out.
void write_report_bundle(const nlohmann::json& report, const std::filesystem::path& out, bool with_json = true);

void write_text_file(const std::filesystem::path& path, std::string_view text);
std::string read_text_file(const std::filesystem::path& path);

}  // namespace raretab
