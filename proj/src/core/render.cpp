#include "core/render.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "core/errors.hpp"

namespace sblab {

std::string render_table(const std::vector<std::string>& headers,
                         const std::vector<std::vector<std::string>>& rows) {
  std::vector<size_t> widths(headers.size());
  for (size_t c = 0; c < headers.size(); ++c) widths[c] = headers[c].size();
  for (const auto& row : rows) {
    if (row.size() != headers.size()) {
      fail(ErrorCode::invalid_argument, "table row width does not match headers");
    }
    for (size_t c = 0; c < row.size(); ++c) widths[c] = std::max(widths[c], row[c].size());
  }

  auto emit_row = [&](const std::vector<std::string>& row, std::string& out) {
    for (size_t c = 0; c < row.size(); ++c) {
      out += row[c];
      if (c + 1 < row.size()) out += std::string(widths[c] - row[c].size() + 2, ' ');
    }
    out += '\n';
  };

  std::string out;
  emit_row(headers, out);
  size_t total = 0;
  for (size_t c = 0; c < widths.size(); ++c) total += widths[c] + (c + 1 < widths.size() ? 2 : 0);
  out += std::string(total, '-');
  out += '\n';
  for (const auto& row : rows) emit_row(row, out);
  return out;
}

namespace {

std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.4g", v);
  return buf;
}

const char* kSeriesColors[] = {"#1f6fb2", "#c23b22", "#2e8b57", "#8a2be2",
                               "#b8860b", "#555555"};

}  // namespace

void write_line_chart(const std::string& path, const std::string& title,
                      const std::string& x_label, const std::string& y_label,
                      const std::vector<ChartSeries>& series,
                      const std::string& config_digest) {
  if (series.empty()) fail(ErrorCode::invalid_argument, "chart needs at least one series");
  double xmin = INFINITY, xmax = -INFINITY, ymin = INFINITY, ymax = -INFINITY;
  for (const auto& s : series) {
    if (s.x.size() != s.y.size()) {
      fail(ErrorCode::invalid_argument, "series '" + s.name + "' has mismatched x/y");
    }
    for (size_t i = 0; i < s.x.size(); ++i) {
      xmin = std::min(xmin, s.x[i]);
      xmax = std::max(xmax, s.x[i]);
      ymin = std::min(ymin, s.y[i]);
      ymax = std::max(ymax, s.y[i]);
    }
  }
  if (!std::isfinite(xmin) || !std::isfinite(ymin)) {
    fail(ErrorCode::invalid_argument, "chart series are empty or non-finite");
  }
  if (xmax == xmin) xmax = xmin + 1.0;
  // Ratios live in [0,1]; keep that frame whenever the data fits it.
  if (ymin >= 0.0 && ymax <= 1.0) {
    ymin = 0.0;
    ymax = 1.0;
  } else {
    double pad = (ymax - ymin) * 0.05 + 1e-12;
    ymin -= pad;
    ymax += pad;
  }

  const double W = 640, H = 420, L = 70, R = 20, T = 40, B = 55;
  auto px = [&](double x) { return L + (x - xmin) / (xmax - xmin) * (W - L - R); };
  auto py = [&](double y) { return H - B - (y - ymin) / (ymax - ymin) * (H - T - B); };

  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorCode::io, "cannot write chart '" + path + "'");
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
      << "\" viewBox=\"0 0 " << W << " " << H << "\">\n";
  if (!config_digest.empty()) out << "<!-- config_digest: " << xml_escape(config_digest) << " -->\n";
  out << "<rect width=\"" << W << "\" height=\"" << H << "\" fill=\"white\"/>\n";
  out << "<text x=\"" << W / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\" "
      << "font-family=\"sans-serif\">" << xml_escape(title) << "</text>\n";

  out << "<line x1=\"" << L << "\" y1=\"" << H - B << "\" x2=\"" << W - R << "\" y2=\""
      << H - B << "\" stroke=\"black\"/>\n";
  out << "<line x1=\"" << L << "\" y1=\"" << T << "\" x2=\"" << L << "\" y2=\"" << H - B
      << "\" stroke=\"black\"/>\n";

  for (int i = 0; i <= 5; ++i) {
    double xv = xmin + (xmax - xmin) * i / 5.0;
    double yv = ymin + (ymax - ymin) * i / 5.0;
    out << "<line x1=\"" << px(xv) << "\" y1=\"" << H - B << "\" x2=\"" << px(xv)
        << "\" y2=\"" << H - B + 5 << "\" stroke=\"black\"/>\n";
    out << "<text x=\"" << px(xv) << "\" y=\"" << H - B + 20
        << "\" text-anchor=\"middle\" font-size=\"11\" font-family=\"sans-serif\">" << fmt(xv)
        << "</text>\n";
    out << "<line x1=\"" << L - 5 << "\" y1=\"" << py(yv) << "\" x2=\"" << L << "\" y2=\""
        << py(yv) << "\" stroke=\"black\"/>\n";
    out << "<text x=\"" << L - 9 << "\" y=\"" << py(yv) + 4
        << "\" text-anchor=\"end\" font-size=\"11\" font-family=\"sans-serif\">" << fmt(yv)
        << "</text>\n";
  }
  out << "<text x=\"" << (L + W - R) / 2 << "\" y=\"" << H - 12
      << "\" text-anchor=\"middle\" font-size=\"12\" font-family=\"sans-serif\">"
      << xml_escape(x_label) << "</text>\n";
  out << "<text x=\"18\" y=\"" << (T + H - B) / 2
      << "\" text-anchor=\"middle\" font-size=\"12\" font-family=\"sans-serif\" "
      << "transform=\"rotate(-90 18 " << (T + H - B) / 2 << ")\">" << xml_escape(y_label)
      << "</text>\n";

  for (size_t si = 0; si < series.size(); ++si) {
    const auto& s = series[si];
    const char* color = kSeriesColors[si % 6];
    out << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"";
    for (size_t i = 0; i < s.x.size(); ++i) {
      out << px(s.x[i]) << "," << py(s.y[i]) << " ";
    }
    out << "\"/>\n";
    for (size_t i = 0; i < s.x.size(); ++i) {
      out << "<circle cx=\"" << px(s.x[i]) << "\" cy=\"" << py(s.y[i])
          << "\" r=\"3\" fill=\"" << color << "\"/>\n";
    }
    double lx = W - R - 150, ly = T + 16 * static_cast<double>(si) + 8;
    out << "<line x1=\"" << lx << "\" y1=\"" << ly << "\" x2=\"" << lx + 22 << "\" y2=\"" << ly
        << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
    out << "<text x=\"" << lx + 28 << "\" y=\"" << ly + 4
        << "\" font-size=\"12\" font-family=\"sans-serif\">" << xml_escape(s.name)
        << "</text>\n";
  }
  out << "</svg>\n";
  if (!out) fail(ErrorCode::io, "short write on chart '" + path + "'");
}

}  // namespace sblab
