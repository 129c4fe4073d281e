#include "wla/plotio.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

namespace wla::plot {

namespace {

const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd",
                         "#8c564b", "#17becf", "#7f7f7f"};

std::string num(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.4g", v);
    return buf;
}

}  // namespace

void write_line_svg(const std::string& path, const std::string& title,
                    const std::string& xlabel, const std::string& ylabel,
                    const std::vector<Series>& series, bool log_y) {
    const double width = 640, height = 420;
    const double ml = 70, mr = 150, mt = 40, mb = 50;
    double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
    for (const auto& s : series) {
        for (size_t i = 0; i < s.x.size(); ++i) {
            double y = log_y ? std::log10(std::max(s.y[i], 1e-300)) : s.y[i];
            xmin = std::min(xmin, s.x[i]);
            xmax = std::max(xmax, s.x[i]);
            ymin = std::min(ymin, y);
            ymax = std::max(ymax, y);
        }
    }
    if (xmin > xmax) { xmin = 0; xmax = 1; }
    if (ymin > ymax) { ymin = 0; ymax = 1; }
    if (xmax == xmin) xmax = xmin + 1;
    if (ymax == ymin) ymax = ymin + 1;
    double pw = width - ml - mr, ph = height - mt - mb;
    auto px = [&](double x) { return ml + (x - xmin) / (xmax - xmin) * pw; };
    auto py = [&](double yv) {
        double y = log_y ? std::log10(std::max(yv, 1e-300)) : yv;
        return mt + ph - (y - ymin) / (ymax - ymin) * ph;
    };

    std::ofstream out(path);
    if (!out) throw IoError("cannot write plot " + path);
    out << "<svg xmlns='http://www.w3.org/2000/svg' width='" << width << "' height='" << height
        << "' font-family='sans-serif' font-size='12'>\n";
    out << "<rect width='100%' height='100%' fill='white'/>\n";
    out << "<text x='" << width / 2 << "' y='22' text-anchor='middle' font-size='15'>" << title
        << "</text>\n";
    // frame and ticks
    out << "<rect x='" << ml << "' y='" << mt << "' width='" << pw << "' height='" << ph
        << "' fill='none' stroke='black'/>\n";
    for (int i = 0; i <= 5; ++i) {
        double fx = xmin + (xmax - xmin) * i / 5.0;
        out << "<line x1='" << px(fx) << "' y1='" << mt + ph << "' x2='" << px(fx) << "' y2='"
            << mt + ph + 5 << "' stroke='black'/>\n";
        out << "<text x='" << px(fx) << "' y='" << mt + ph + 18 << "' text-anchor='middle'>"
            << num(fx) << "</text>\n";
        double fy = ymin + (ymax - ymin) * i / 5.0;
        double yv = log_y ? std::pow(10.0, fy) : fy;
        double ypix = mt + ph - (fy - ymin) / (ymax - ymin) * ph;
        out << "<line x1='" << ml - 5 << "' y1='" << ypix << "' x2='" << ml << "' y2='" << ypix
            << "' stroke='black'/>\n";
        out << "<text x='" << ml - 8 << "' y='" << ypix + 4 << "' text-anchor='end'>" << num(yv)
            << "</text>\n";
    }
    out << "<text x='" << ml + pw / 2 << "' y='" << height - 10 << "' text-anchor='middle'>"
        << xlabel << "</text>\n";
    out << "<text x='18' y='" << mt + ph / 2 << "' text-anchor='middle' transform='rotate(-90 18 "
        << mt + ph / 2 << ")'>" << ylabel << (log_y ? " (log)" : "") << "</text>\n";
    // series
    for (size_t si = 0; si < series.size(); ++si) {
        const auto& s = series[si];
        const char* color = kColors[si % std::size(kColors)];
        out << "<polyline fill='none' stroke='" << color << "' stroke-width='1.5' points='";
        for (size_t i = 0; i < s.x.size(); ++i) {
            out << px(s.x[i]) << "," << py(s.y[i]) << " ";
        }
        out << "'/>\n";
        for (size_t i = 0; i < s.x.size(); ++i) {
            out << "<circle cx='" << px(s.x[i]) << "' cy='" << py(s.y[i]) << "' r='2.5' fill='"
                << color << "'/>\n";
        }
        double ly = mt + 14 + 18 * static_cast<double>(si);
        out << "<line x1='" << width - mr + 10 << "' y1='" << ly - 4 << "' x2='" << width - mr + 34
            << "' y2='" << ly - 4 << "' stroke='" << color << "' stroke-width='2'/>\n";
        out << "<text x='" << width - mr + 40 << "' y='" << ly << "'>" << s.label << "</text>\n";
    }
    out << "</svg>\n";
}

namespace {

// five-stop ramp, dark blue to yellow
void colormap(double t, uint8_t* rgb) {
    static const double stops[5][3] = {{13, 8, 135},
                                       {126, 3, 168},
                                       {204, 71, 120},
                                       {248, 149, 64},
                                       {240, 249, 33}};
    t = std::clamp(t, 0.0, 1.0) * 4.0;
    int i = std::min(3, static_cast<int>(t));
    double f = t - i;
    for (int c = 0; c < 3; ++c) {
        rgb[c] = static_cast<uint8_t>(stops[i][c] * (1 - f) + stops[i + 1][c] * f);
    }
}

}  // namespace

void write_heatmap_ppm(const std::string& path, const float* data, int64_t h, int64_t w) {
    float lo = data[0], hi = data[0];
    for (int64_t i = 0; i < h * w; ++i) {
        lo = std::min(lo, data[i]);
        hi = std::max(hi, data[i]);
    }
    double span = hi > lo ? hi - lo : 1.0;
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write map " + path);
    out << "P6\n" << w << " " << h << "\n255\n";
    std::vector<uint8_t> row(static_cast<size_t>(w) * 3);
    for (int64_t y = 0; y < h; ++y) {
        for (int64_t x = 0; x < w; ++x) {
            colormap((data[y * w + x] - lo) / span, &row[static_cast<size_t>(x) * 3]);
        }
        out.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size()));
    }
}

void write_field_maps(const std::string& prefix, const grid::GridField& f) {
    for (int64_t c = 0; c < f.channels(); ++c) {
        write_heatmap_ppm(prefix + "_" + f.meta.entries[static_cast<size_t>(c)].str() + ".ppm",
                          f.channel(c), f.height(), f.width());
    }
}

}  // namespace wla::plot
