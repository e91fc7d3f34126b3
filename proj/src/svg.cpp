#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include "rfb/format.hpp"
#include "rfb/harness.hpp"
#include "rfb/stats.hpp"

namespace rfb {

namespace {

constexpr double kCanvas = 520.0;
constexpr double kMargin = 10.0;

struct Frame {
  double x0, y0, scale;  // world -> canvas: (x - x0) * scale + margin, y flipped

  double px(double x) const { return kMargin + (x - x0) * scale; }
  double py(double y) const { return kCanvas - kMargin - (y - y0) * scale; }
};

Frame fit_frame(double xmin, double xmax, double ymin, double ymax) {
  const double w = std::max(xmax - xmin, 1e-12);
  const double h = std::max(ymax - ymin, 1e-12);
  Frame f;
  f.scale = (kCanvas - 2.0 * kMargin) / std::max(w, h);
  f.x0 = xmin;
  f.y0 = ymin;
  return f;
}

std::ofstream open_svg(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"" << format_double(kCanvas)
      << "\" height=\"" << format_double(kCanvas) << "\" viewBox=\"0 0 " << format_double(kCanvas)
      << " " << format_double(kCanvas) << "\">\n";
  return out;
}

}  // namespace

void emit_svg_curve(const std::vector<Vec>& polyline, const std::string& path) {
  if (polyline.empty()) throw std::invalid_argument("emit_svg_curve: empty polyline");
  double xmin = polyline[0](0), xmax = xmin, ymin = polyline[0](1), ymax = ymin;
  for (const Vec& v : polyline) {
    xmin = std::min(xmin, v(0));
    xmax = std::max(xmax, v(0));
    ymin = std::min(ymin, v(1));
    ymax = std::max(ymax, v(1));
  }
  const Frame f = fit_frame(xmin, xmax, ymin, ymax);
  std::ofstream out = open_svg(path);
  out << "<path fill=\"none\" stroke=\"#1f3b73\" stroke-width=\"1\" d=\"";
  for (std::size_t i = 0; i < polyline.size(); ++i) {
    out << (i == 0 ? "M" : " L") << format_double(f.px(polyline[i](0))) << " "
        << format_double(f.py(polyline[i](1)));
  }
  out << "\"/>\n</svg>\n";
}

void emit_svg_covering(const std::vector<Ball>& good, const std::vector<Ball>& bad,
                       const std::vector<Ball>& fin, const std::string& path) {
  double xmin = -1.0, xmax = 1.0, ymin = -1.0, ymax = 1.0;
  auto widen = [&](const Ball& b) {
    xmin = std::min(xmin, b.center(0) - b.radius);
    xmax = std::max(xmax, b.center(0) + b.radius);
    ymin = std::min(ymin, b.center(1) - b.radius);
    ymax = std::max(ymax, b.center(1) + b.radius);
  };
  for (const Ball& b : good) widen(b);
  for (const Ball& b : bad) widen(b);
  for (const Ball& b : fin) widen(b);
  const Frame f = fit_frame(xmin, xmax, ymin, ymax);
  std::ofstream out = open_svg(path);
  auto circles = [&](const std::vector<Ball>& balls, const char* color) {
    for (const Ball& b : balls) {
      out << "<circle cx=\"" << format_double(f.px(b.center(0))) << "\" cy=\""
          << format_double(f.py(b.center(1))) << "\" r=\"" << format_double(b.radius * f.scale)
          << "\" fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1\"/>\n";
    }
  };
  circles(good, "#2a9d3a");
  circles(bad, "#c22f2f");
  circles(fin, "#2255cc");
  out << "</svg>\n";
}

void emit_svg_covering(const CoveringHierarchy& h, int scale, const std::string& path) {
  if (scale < 0 || scale > h.depth) throw std::invalid_argument("emit_svg_covering: scale out of range");
  const ScaleLevel& lv = h.levels[static_cast<std::size_t>(scale)];
  emit_svg_covering(lv.good, lv.bad, lv.fin, path);
}

void emit_svg_surface(const MeshSurface& mesh, const std::string& path) {
  if (mesh.vertices.empty()) throw std::invalid_argument("emit_svg_surface: empty mesh");
  double xmin = mesh.vertices[0](0), xmax = xmin, ymin = mesh.vertices[0](1), ymax = ymin;
  for (const Vec& v : mesh.vertices) {
    xmin = std::min(xmin, v(0));
    xmax = std::max(xmax, v(0));
    ymin = std::min(ymin, v(1));
    ymax = std::max(ymax, v(1));
  }
  const Frame f = fit_frame(xmin, xmax, ymin, ymax);
  std::ofstream out = open_svg(path);
  out << "<path fill=\"none\" stroke=\"#444444\" stroke-width=\"1\" d=\"";
  if (mesh.k == 1) {
    for (const auto& e : mesh.edges) {
      const Vec& a = mesh.vertices[static_cast<std::size_t>(e[0])];
      const Vec& b = mesh.vertices[static_cast<std::size_t>(e[1])];
      out << "M" << format_double(f.px(a(0))) << " " << format_double(f.py(a(1))) << " L"
          << format_double(f.px(b(0))) << " " << format_double(f.py(b(1))) << " ";
    }
  } else {
    for (const auto& t : mesh.triangles) {
      const Vec& a = mesh.vertices[static_cast<std::size_t>(t[0])];
      const Vec& b = mesh.vertices[static_cast<std::size_t>(t[1])];
      const Vec& c = mesh.vertices[static_cast<std::size_t>(t[2])];
      out << "M" << format_double(f.px(a(0))) << " " << format_double(f.py(a(1))) << " L"
          << format_double(f.px(b(0))) << " " << format_double(f.py(b(1))) << " L"
          << format_double(f.px(c(0))) << " " << format_double(f.py(c(1))) << " Z ";
    }
  }
  out << "\"/>\n</svg>\n";
}

void emit_svg_scaling(const std::vector<double>& x, const std::vector<double>& y,
                      const std::string& path) {
  if (x.size() != y.size() || x.size() < 2)
    throw std::invalid_argument("emit_svg_scaling: need >= 2 paired samples");
  const LineFit fit = fit_loglog(x, y);
  std::vector<double> lx(x.size()), ly(y.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    lx[i] = std::log(x[i]);
    ly[i] = std::log(y[i]);
  }
  const double xmin = *std::min_element(lx.begin(), lx.end());
  const double xmax = *std::max_element(lx.begin(), lx.end());
  const double ymin = *std::min_element(ly.begin(), ly.end());
  const double ymax = *std::max_element(ly.begin(), ly.end());
  const Frame f = fit_frame(xmin, xmax, ymin, ymax);
  std::ofstream out = open_svg(path);
  for (std::size_t i = 0; i < lx.size(); ++i) {
    out << "<circle cx=\"" << format_double(f.px(lx[i])) << "\" cy=\"" << format_double(f.py(ly[i]))
        << "\" r=\"3\" fill=\"#1f3b73\"/>\n";
  }
  out << "<line x1=\"" << format_double(f.px(xmin)) << "\" y1=\""
      << format_double(f.py(fit.intercept + fit.slope * xmin)) << "\" x2=\""
      << format_double(f.px(xmax)) << "\" y2=\""
      << format_double(f.py(fit.intercept + fit.slope * xmax))
      << "\" stroke=\"#c22f2f\" stroke-width=\"1\"/>\n";
  out << "<text x=\"" << format_double(kMargin + 4.0) << "\" y=\"" << format_double(kMargin + 14.0)
      << "\" font-family=\"monospace\" font-size=\"12\">slope " << format_double(fit.slope)
      << "</text>\n";
  out << "</svg>\n";
}

}  // namespace rfb
