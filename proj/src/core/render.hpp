#pragma once

#include <string>
#include <vector>

namespace sblab {

// Monospace table with padded columns; header row separated by dashes.
std::string render_table(const std::vector<std::string>& headers,
                         const std::vector<std::vector<std::string>>& rows);

struct ChartSeries {
  std::string name;
  std::vector<double> x;
  std::vector<double> y;
};

// Self-contained SVG line chart. `config_digest`, when set, is embedded as a
// comment so the verifier can tie the image back to its config.
void write_line_chart(const std::string& path, const std::string& title,
                      const std::string& x_label, const std::string& y_label,
                      const std::vector<ChartSeries>& series,
                      const std::string& config_digest = "");

}  // namespace sblab
