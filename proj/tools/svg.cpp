#include "svg.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>

#include "chronoalign/error.hpp"

namespace chronoalign::svg {

namespace {

constexpr double kWidth = 640, kHeight = 400, kLeft = 60, kRight = 20, kTop = 40, kBottom = 50;

std::string escape(const std::string& s) {
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

struct Frame {
  double x0, x1, y0, y1;
  double px(double x) const { return kLeft + (x - x0) / std::max(x1 - x0, 1e-9) * (kWidth - kLeft - kRight); }
  double py(double y) const { return kHeight - kBottom - (y - y0) / std::max(y1 - y0, 1e-9) * (kHeight - kTop - kBottom); }
};

void header(std::ostringstream& os, const std::string& title, const std::string& x_label, const std::string& y_label,
            const Frame& f) {
  os << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
     << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\"" << kHeight
     << "\" viewBox=\"0 0 " << kWidth << ' ' << kHeight << "\">\n"
     << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
     << "<text x=\"" << kWidth / 2 << "\" y=\"24\" text-anchor=\"middle\" font-size=\"16\">" << escape(title)
     << "</text>\n"
     << "<line x1=\"" << kLeft << "\" y1=\"" << kHeight - kBottom << "\" x2=\"" << kWidth - kRight << "\" y2=\""
     << kHeight - kBottom << "\" stroke=\"black\"/>\n"
     << "<line x1=\"" << kLeft << "\" y1=\"" << kTop << "\" x2=\"" << kLeft << "\" y2=\"" << kHeight - kBottom
     << "\" stroke=\"black\"/>\n"
     << "<text x=\"" << kWidth / 2 << "\" y=\"" << kHeight - 12 << "\" text-anchor=\"middle\" font-size=\"12\">"
     << escape(x_label) << "</text>\n"
     << "<text x=\"16\" y=\"" << kHeight / 2 << "\" text-anchor=\"middle\" font-size=\"12\" transform=\"rotate(-90 16 "
     << kHeight / 2 << ")\">" << escape(y_label) << "</text>\n";
  for (int t = 0; t <= 4; ++t) {
    const double xv = f.x0 + (f.x1 - f.x0) * t / 4.0, yv = f.y0 + (f.y1 - f.y0) * t / 4.0;
    os << "<text x=\"" << f.px(xv) << "\" y=\"" << kHeight - kBottom + 16
       << "\" text-anchor=\"middle\" font-size=\"10\">" << std::lround(xv) << "</text>\n"
       << "<text x=\"" << kLeft - 6 << "\" y=\"" << f.py(yv) + 3 << "\" text-anchor=\"end\" font-size=\"10\">"
       << std::lround(yv) << "</text>\n";
  }
}

}  // namespace

std::string line_chart(const std::string& title, const std::string& x_label, const std::string& y_label,
                       const std::vector<Series>& series) {
  Frame f{0, 1, std::numeric_limits<double>::max(), std::numeric_limits<double>::lowest()};
  for (const auto& s : series) {
    f.x1 = std::max(f.x1, static_cast<double>(s.y.size()) - 1);
    for (double v : s.y)
      if (std::isfinite(v)) {
        f.y0 = std::min(f.y0, v);
        f.y1 = std::max(f.y1, v);
      }
  }
  if (f.y0 > f.y1) f.y0 = 0, f.y1 = 1;
  if (f.y0 == f.y1) f.y1 = f.y0 + 1;

  std::ostringstream os;
  header(os, title, x_label, y_label, f);
  for (std::size_t i = 0; i < series.size(); ++i) {
    const auto& s = series[i];
    std::string points;
    auto flush = [&] {
      if (!points.empty())
        os << "<polyline fill=\"none\" stroke=\"" << s.color << "\" stroke-width=\"1.5\" points=\"" << points
           << "\"/>\n";
      points.clear();
    };
    for (std::size_t k = 0; k < s.y.size(); ++k) {
      if (!std::isfinite(s.y[k])) {
        flush();
        continue;
      }
      std::ostringstream pt;
      pt << f.px(static_cast<double>(k)) << ',' << f.py(s.y[k]) << ' ';
      points += pt.str();
    }
    flush();
    os << "<text x=\"" << kWidth - kRight - 4 << "\" y=\"" << kTop + 14 * (i + 1)
       << "\" text-anchor=\"end\" font-size=\"11\" fill=\"" << s.color << "\">" << escape(s.label) << "</text>\n";
  }
  os << "</svg>\n";
  return os.str();
}

std::string histogram(const std::string& title, const std::string& x_label, const std::vector<int>& samples) {
  std::map<int, int> counts;
  for (int v : samples) ++counts[v];
  const int lo = counts.empty() ? 0 : counts.begin()->first, hi = counts.empty() ? 1 : counts.rbegin()->first;
  int peak = 1;
  for (const auto& [v, c] : counts) peak = std::max(peak, c);
  const Frame f{lo - 0.5, hi + 0.5, 0.0, static_cast<double>(peak)};

  std::ostringstream os;
  header(os, title, x_label, "count", f);
  const double bar = (f.px(1.0) - f.px(0.0)) * 0.8;
  for (const auto& [v, c] : counts)
    os << "<rect x=\"" << f.px(v) - bar / 2 << "\" y=\"" << f.py(c) << "\" width=\"" << bar << "\" height=\""
       << f.py(0) - f.py(c) << "\" fill=\"steelblue\"/>\n";
  os << "</svg>\n";
  return os.str();
}

void write(const std::filesystem::path& file, const std::string& document) {
  std::ofstream out(file, std::ios::binary);
  if (!out) throw IoError("cannot write " + file.string());
  out << document;
  if (!out) throw IoError("write failed: " + file.string());
}

}  // namespace chronoalign::svg
