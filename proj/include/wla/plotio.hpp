#pragma once

#include <string>
#include <vector>

#include "wla/griddata.hpp"

namespace wla::plot {

struct Series {
    std::string label;
    std::vector<double> x;
    std::vector<double> y;
};

// standalone SVG line plot with axes, ticks and a legend
void write_line_svg(const std::string& path, const std::string& title,
                    const std::string& xlabel, const std::string& ylabel,
                    const std::vector<Series>& series, bool log_y = false);

// single-channel heat map rendered to a binary PPM with a perceptual ramp
void write_heatmap_ppm(const std::string& path, const float* data, int64_t h, int64_t w);

// one PPM per channel next to `prefix`, e.g. prefix_t500.ppm
void write_field_maps(const std::string& prefix, const grid::GridField& f);

}  // namespace wla::plot
