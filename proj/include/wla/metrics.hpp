#pragma once

#include <vector>

#include "wla/griddata.hpp"

namespace wla::metrics {

// latitude-weighted RMSE per channel:
// sqrt( mean over pixels of w_row * (pred - truth)^2 )
std::vector<double> weighted_rmse(const grid::GridField& pred, const grid::GridField& truth,
                                  const grid::LatWeights& weights);

// |pred - truth| per pixel, one output channel per input channel
grid::GridField mae_map(const grid::GridField& pred, const grid::GridField& truth);

// Symmetric Extremal Dependence Index at per-channel quantile thresholds.
// Events are truth > threshold; forecast events pred > threshold. H and F
// are clamped to [eps, 1-eps] before the log-odds form.
struct SediCell {
    double q = 0.0;
    double hit_rate = 0.0;     // H = hits / (hits + misses)
    double false_alarm = 0.0;  // F = false alarms / (false alarms + correct negatives)
    double sedi = 0.0;
    bool defined = false;      // false when a threshold has no events
};

struct SediReport {
    std::vector<double> quantiles;
    std::vector<std::vector<SediCell>> per_channel;  // [channel][quantile]
};

inline const std::vector<double>& default_sedi_quantiles() {
    static const std::vector<double> q = {0.90, 0.95, 0.98, 0.99};
    return q;
}

SediReport sedi(const grid::GridField& pred, const grid::GridField& truth,
                const std::vector<double>& quantiles = default_sedi_quantiles(),
                double clamp_eps = 1e-6);

// the scalar form on already-computed rates (unit checks, reports)
double sedi_score(double hit_rate, double false_alarm, double clamp_eps = 1e-6);

// stored bits per scalar of the original field
double bpsp(int64_t payload_bits, int64_t c, int64_t h, int64_t w);

// linear-interpolation quantile of a sample (exposed for tests)
double quantile(std::vector<float> values, double q);

}  // namespace wla::metrics
