#include "wla/metrics.hpp"

#include <algorithm>
#include <cmath>

namespace wla::metrics {

std::vector<double> weighted_rmse(const grid::GridField& pred, const grid::GridField& truth,
                                  const grid::LatWeights& weights) {
    if (pred.values.shape != truth.values.shape) {
        throw ShapeError("weighted_rmse: " + pred.values.shape_str() + " vs " +
                         truth.values.shape_str());
    }
    int64_t c = pred.channels(), h = pred.height(), w = pred.width();
    if (static_cast<int64_t>(weights.w.size()) != h) {
        throw ShapeError("weighted_rmse: weight rows do not match grid height");
    }
    std::vector<double> out(static_cast<size_t>(c));
    for (int64_t ch = 0; ch < c; ++ch) {
        const float* p = pred.channel(ch);
        const float* t = truth.channel(ch);
        double acc = 0.0;
        for (int64_t y = 0; y < h; ++y) {
            double wr = weights.w[static_cast<size_t>(y)];
            double row = 0.0;
            for (int64_t x = 0; x < w; ++x) {
                double d = static_cast<double>(p[y * w + x]) - t[y * w + x];
                row += d * d;
            }
            acc += wr * row;
        }
        out[static_cast<size_t>(ch)] = std::sqrt(acc / static_cast<double>(h * w));
    }
    return out;
}

grid::GridField mae_map(const grid::GridField& pred, const grid::GridField& truth) {
    if (pred.values.shape != truth.values.shape) {
        throw ShapeError("mae_map: " + pred.values.shape_str() + " vs " +
                         truth.values.shape_str());
    }
    grid::GridField out = pred;
    for (int64_t i = 0; i < out.values.numel(); ++i) {
        out.values[i] = std::fabs(pred.values[i] - truth.values[i]);
    }
    return out;
}

double quantile(std::vector<float> values, double q) {
    if (values.empty()) throw DataError("quantile of empty sample");
    std::sort(values.begin(), values.end());
    double pos = q * static_cast<double>(values.size() - 1);
    auto lo = static_cast<size_t>(pos);
    size_t hi = std::min(lo + 1, values.size() - 1);
    double frac = pos - static_cast<double>(lo);
    return static_cast<double>(values[lo]) * (1.0 - frac) + static_cast<double>(values[hi]) * frac;
}

double sedi_score(double hit_rate, double false_alarm, double clamp_eps) {
    double h = std::clamp(hit_rate, clamp_eps, 1.0 - clamp_eps);
    double f = std::clamp(false_alarm, clamp_eps, 1.0 - clamp_eps);
    double num = std::log(f) - std::log(h) - std::log(1.0 - f) + std::log(1.0 - h);
    double den = std::log(f) + std::log(h) + std::log(1.0 - f) + std::log(1.0 - h);
    return num / den;
}

SediReport sedi(const grid::GridField& pred, const grid::GridField& truth,
                const std::vector<double>& quantiles, double clamp_eps) {
    if (pred.values.shape != truth.values.shape) {
        throw ShapeError("sedi: " + pred.values.shape_str() + " vs " + truth.values.shape_str());
    }
    for (double q : quantiles) {
        if (!(q > 0.0 && q < 1.0)) throw ConfigError("sedi quantiles must lie in (0,1)");
    }
    int64_t c = pred.channels(), plane = pred.height() * pred.width();
    SediReport rep;
    rep.quantiles = quantiles;
    rep.per_channel.resize(static_cast<size_t>(c));
    for (int64_t ch = 0; ch < c; ++ch) {
        const float* p = pred.channel(ch);
        const float* t = truth.channel(ch);
        std::vector<float> sample(t, t + plane);
        for (double q : quantiles) {
            double thr = quantile(sample, q);
            int64_t hits = 0, misses = 0, fas = 0, cns = 0;
            for (int64_t i = 0; i < plane; ++i) {
                bool ev = t[i] > thr;
                bool fev = p[i] > thr;
                if (ev && fev) ++hits;
                else if (ev) ++misses;
                else if (fev) ++fas;
                else ++cns;
            }
            SediCell cell;
            cell.q = q;
            if (hits + misses == 0) {
                cell.defined = false;  // no events at this threshold
            } else {
                cell.hit_rate = static_cast<double>(hits) / static_cast<double>(hits + misses);
                cell.false_alarm = (fas + cns) > 0
                                       ? static_cast<double>(fas) / static_cast<double>(fas + cns)
                                       : 0.0;
                cell.hit_rate = std::clamp(cell.hit_rate, clamp_eps, 1.0 - clamp_eps);
                cell.false_alarm = std::clamp(cell.false_alarm, clamp_eps, 1.0 - clamp_eps);
                cell.sedi = sedi_score(cell.hit_rate, cell.false_alarm, clamp_eps);
                cell.defined = true;
            }
            rep.per_channel[static_cast<size_t>(ch)].push_back(cell);
        }
    }
    return rep;
}

double bpsp(int64_t payload_bits, int64_t c, int64_t h, int64_t w) {
    if (payload_bits <= 0 || c <= 0 || h <= 0 || w <= 0) {
        throw ConfigError("bpsp requires positive counts");
    }
    return static_cast<double>(payload_bits) / static_cast<double>(c * h * w);
}

}  // namespace wla::metrics
