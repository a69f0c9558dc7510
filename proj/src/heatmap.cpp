#include "patchlens/heatmap.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

namespace patchlens {
namespace {

constexpr int kCell = 28;
constexpr int kLeft = 80;
constexpr int kTop = 70;

int lerp(int a, int b, double t) { return static_cast<int>(std::lround(a + (b - a) * t)); }

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out.push_back(c);
    }
  }
  return out;
}

}  // namespace

std::string Rgb::hex() const {
  char buf[8];
  std::snprintf(buf, sizeof(buf), "#%02x%02x%02x", r, g, b);
  return buf;
}

Rgb diverging_color(double value, double limit) {
  if (!(limit > 0.0) || !std::isfinite(value)) return kCenter;
  const double t = std::clamp(value / limit, -1.0, 1.0);
  const Rgb& end = t < 0 ? kNegativeEnd : kPositiveEnd;
  const double a = std::fabs(t);
  return Rgb{lerp(kCenter.r, end.r, a), lerp(kCenter.g, end.g, a), lerp(kCenter.b, end.b, a)};
}

std::string render_heatmap_svg(const EffectMatrix& m, const std::string& title) {
  double limit = 0.0;
  for (double v : m.values) {
    if (std::isfinite(v)) limit = std::max(limit, std::fabs(v));
  }
  if (limit == 0.0) limit = 1.0;

  const int width = kLeft + static_cast<int>(m.cols()) * kCell + 20;
  const int height = kTop + static_cast<int>(m.rows()) * kCell + 40;
  std::ostringstream os;
  os << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
     << "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"" << width << "\" height=\"" << height
     << "\" viewBox=\"0 0 " << width << ' ' << height << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  if (!title.empty()) os << "  <text x=\"" << kLeft << "\" y=\"18\" font-size=\"14\">" << escape(title) << "</text>\n";
  os << "  <text x=\"" << kLeft + static_cast<int>(m.cols()) * kCell / 2 << "\" y=\"38\" text-anchor=\"middle\">"
     << escape(m.col_axis) << "</text>\n";
  os << "  <text x=\"16\" y=\"" << kTop + static_cast<int>(m.rows()) * kCell / 2
     << "\" text-anchor=\"middle\" transform=\"rotate(-90 16 " << kTop + static_cast<int>(m.rows()) * kCell / 2
     << ")\">" << escape(m.row_axis) << "</text>\n";
  for (std::size_t c = 0; c < m.cols(); ++c) {
    os << "  <text x=\"" << kLeft + static_cast<int>(c) * kCell + kCell / 2 << "\" y=\"" << kTop - 6
       << "\" text-anchor=\"middle\">" << escape(m.col_labels[c]) << "</text>\n";
  }
  for (std::size_t r = 0; r < m.rows(); ++r) {
    os << "  <text x=\"" << kLeft - 6 << "\" y=\"" << kTop + static_cast<int>(r) * kCell + kCell / 2 + 4
       << "\" text-anchor=\"end\">" << escape(m.row_labels[r]) << "</text>\n";
  }
  char value_buf[32];
  for (std::size_t r = 0; r < m.rows(); ++r) {
    for (std::size_t c = 0; c < m.cols(); ++c) {
      const double v = m.value(r, c);
      std::snprintf(value_buf, sizeof(value_buf), "%.6g", v);
      os << "  <rect class=\"cell\" x=\"" << kLeft + static_cast<int>(c) * kCell << "\" y=\""
         << kTop + static_cast<int>(r) * kCell << "\" width=\"" << kCell << "\" height=\"" << kCell << "\" fill=\""
         << diverging_color(v, limit).hex() << "\"><title>" << escape(m.row_axis) << ' ' << escape(m.row_labels[r])
         << ", " << escape(m.col_axis) << ' ' << escape(m.col_labels[c]) << ": " << value_buf << "</title></rect>\n";
    }
  }
  std::snprintf(value_buf, sizeof(value_buf), "%.4g", limit);
  os << "  <text x=\"" << kLeft << "\" y=\"" << height - 12 << "\">scale: -" << value_buf << " (blue) .. 0 (white) .. +"
     << value_buf << " (red)</text>\n";
  os << "</svg>\n";
  return os.str();
}

}  // namespace patchlens
