#include "svg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

#include "casdet/error.hpp"

namespace casdet::cli {
namespace {

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      default: out += c;
    }
  }
  return out;
}

}  // namespace

std::string roc_svg(const RocCurve& curve, const std::string& title) {
  const double size = 400.0, pad = 50.0;
  auto x = [&](double fpr) { return pad + fpr * size; };
  auto y = [&](double tpr) { return pad + (1.0 - tpr) * size; };
  std::ostringstream o;
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << size + 2 * pad << "\" height=\""
    << size + 2 * pad << "\">\n";
  o << "<rect x=\"" << pad << "\" y=\"" << pad << "\" width=\"" << size << "\" height=\"" << size
    << "\" fill=\"none\" stroke=\"black\"/>\n";
  o << "<line x1=\"" << x(0) << "\" y1=\"" << y(0) << "\" x2=\"" << x(1) << "\" y2=\"" << y(1)
    << "\" stroke=\"gray\" stroke-dasharray=\"4\"/>\n";
  o << "<polyline fill=\"none\" stroke=\"steelblue\" stroke-width=\"2\" points=\"";
  for (const auto& p : curve.points) o << num(x(p.fpr)) << ',' << num(y(p.tpr)) << ' ';
  o << "\"/>\n";
  o << "<text x=\"" << pad << "\" y=\"30\" font-family=\"sans-serif\" font-size=\"14\">"
    << escape(title) << " AUC=" << num(curve.auc * 100.0) << "%</text>\n";
  o << "<text x=\"" << pad + size / 2 - 15 << "\" y=\"" << size + pad + 35
    << "\" font-family=\"sans-serif\" font-size=\"12\">FPR</text>\n";
  o << "<text x=\"10\" y=\"" << pad + size / 2 << "\" font-family=\"sans-serif\" font-size=\"12\">TPR</text>\n";
  o << "</svg>\n";
  return o.str();
}

std::string spectrogram_svg(const Spectrogram& spectrogram, const std::vector<LabelEvent>& labels,
                            const std::vector<DetectedEvent>& events, const std::string& title) {
  const Matrix& mag = spectrogram.magnitudes;
  const std::size_t bins = mag.rows(), frames = mag.cols();
  if (bins == 0 || frames == 0) throw DataError("empty spectrogram");
  // Cells pool 2 bins by 4 frames so the image stays small.
  const std::size_t fb = 2, tf = 4;
  const std::size_t rows = (bins + fb - 1) / fb, cols = (frames + tf - 1) / tf;
  std::vector<double> cell(rows * cols, 0.0);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      double acc = 0.0;
      for (std::size_t b = r * fb; b < std::min(bins, (r + 1) * fb); ++b) {
        for (std::size_t m = c * tf; m < std::min(frames, (c + 1) * tf); ++m) acc += mag(b, m) * mag(b, m);
      }
      cell[r * cols + c] = 10.0 * std::log10(acc + 1e-12);
    }
  }
  const double hi = *std::max_element(cell.begin(), cell.end());
  const double lo = hi - 60.0;

  const double cw = 1.0, ch = 3.0, left = 50.0, top = 40.0;
  const double width = cols * cw, height = rows * ch;
  const double duration = frames * spectrogram.grid.hop_s;
  auto tx = [&](double t) { return left + t / duration * width; };
  std::ostringstream o;
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width + left + 20 << "\" height=\""
    << height + top + 60 << "\" shape-rendering=\"crispEdges\">\n";
  o << "<text x=\"" << left << "\" y=\"18\" font-family=\"sans-serif\" font-size=\"13\">" << escape(title)
    << "</text>\n";
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      const double v = std::clamp((cell[r * cols + c] - lo) / (hi - lo), 0.0, 1.0);
      const int g = static_cast<int>(std::lround(255.0 * (1.0 - v)));
      o << "<rect x=\"" << num(left + c * cw) << "\" y=\"" << num(top + (rows - 1 - r) * ch) << "\" width=\""
        << cw << "\" height=\"" << ch << "\" fill=\"rgb(" << g << ',' << g << ',' << g << ")\"/>\n";
    }
  }
  for (const auto& l : labels) {
    if (!is_cas(l.kind)) continue;
    o << "<rect x=\"" << num(tx(l.t_start)) << "\" y=\"" << top - 12 << "\" width=\""
      << num(tx(l.t_end) - tx(l.t_start)) << "\" height=\"8\" fill=\"seagreen\"/>\n";
  }
  for (const auto& e : events) {
    o << "<rect x=\"" << num(tx(e.t_start)) << "\" y=\"" << top + height + 4 << "\" width=\""
      << num(tx(e.t_end) - tx(e.t_start)) << "\" height=\"8\" fill=\"crimson\"/>\n";
  }
  o << "<text x=\"" << left << "\" y=\"" << top + height + 30
    << "\" font-family=\"sans-serif\" font-size=\"11\">green: labelled CAS, red: detected, 0 to "
    << num(duration) << " s, 0 to " << num(spectrogram.freq_resolution * (bins - 1)) << " Hz</text>\n";
  o << "</svg>\n";
  return o.str();
}

RocCurve parse_roc_csv(const std::string& text) {
  RocCurve curve;
  std::istringstream in(text);
  std::string line;
  bool header = false;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    if (!header) {
      header = true;
      if (line.rfind("threshold,", 0) == 0) continue;
    }
    RocPoint p{};
    char comma = 0;
    std::istringstream row(line);
    std::string th;
    if (!std::getline(row, th, ',') || !(row >> p.fpr >> comma >> p.tpr) || comma != ',') {
      throw DataError("malformed ROC row: " + line);
    }
    p.threshold = th == "inf" ? std::numeric_limits<double>::infinity() : std::stod(th);
    curve.points.push_back(p);
  }
  if (curve.points.size() < 2) throw DataError("ROC CSV has fewer than two points");
  std::sort(curve.points.begin(), curve.points.end(),
            [](const RocPoint& a, const RocPoint& b) { return a.fpr < b.fpr || (a.fpr == b.fpr && a.tpr < b.tpr); });
  for (std::size_t i = 1; i < curve.points.size(); ++i) {
    const auto& a = curve.points[i - 1];
    const auto& b = curve.points[i];
    curve.auc += (b.fpr - a.fpr) * (a.tpr + b.tpr) / 2.0;
  }
  return curve;
}

}  // namespace casdet::cli
