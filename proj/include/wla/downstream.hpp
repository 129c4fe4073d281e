#pragma once

#include <string>
#include <vector>

#include "wla/codec.hpp"
#include "wla/latentds.hpp"
#include "wla/metrics.hpp"
#include "wla/model.hpp"

namespace wla::fcst {

// window tiling of the token grid for the task model's self-attention
struct WindowConfig {
    int64_t window = 3;
    int depth = 2;
    int64_t d_model = 64;
    int heads = 4;
    bool copy_head = false;  // depth 0 + copy_head: logits reproduce the input bits

    void validate() const {
        if (window < 1) throw ConfigError("window must be positive");
        if (d_model % heads != 0) throw ConfigError("d_model not divisible by heads");
        if (depth < 0) throw ConfigError("depth must be non-negative");
    }
};

// One-step-ahead forecaster on bitwise tokens: dequantized +-1/sqrt(nb)
// vectors are embedded, run through windowed self-attention blocks over the
// token grid, and projected to per-bit logits.
template <typename T>
struct ForecasterT {
    WindowConfig cfg;
    int nb = 32;
    LinearT<T> embed;                // nb -> d_model
    TransformerStackT<T> blocks;     // windowed attention
    LinearT<T> head;                 // d_model -> nb logits

    static ForecasterT init(const WindowConfig& cfg, int nb, Rng& rng) {
        cfg.validate();
        ForecasterT f;
        f.cfg = cfg;
        f.nb = nb;
        f.embed = LinearT<T>::init(nb, cfg.d_model, rng);
        f.blocks = TransformerStackT<T>::init(cfg.depth, cfg.d_model, cfg.heads, rng);
        f.head = LinearT<T>::init(cfg.d_model, nb, rng);
        return f;
    }

    void reg(ParamStoreT<T>& ps, const std::string& prefix) {
        embed.reg(ps, prefix + ".embed");
        blocks.reg(ps, prefix + ".blocks");
        head.reg(ps, prefix + ".head");
    }

    // deq_tokens: [th*tw x nb] dequantized codes -> [th*tw x nb] logits
    typename GraphT<T>::Id forward(GraphT<T>& g, typename GraphT<T>::Id deq_tokens, int64_t th,
                                   int64_t tw) {
        if (g.val(deq_tokens).shape[1] != nb) {
            throw ShapeError("forecaster expects " + std::to_string(nb) + "-bit tokens");
        }
        if (g.val(deq_tokens).shape[0] != th * tw) {
            throw ShapeError("token grid mismatch in forecaster input");
        }
        if (cfg.depth == 0 && cfg.copy_head) return deq_tokens;  // persistence wiring
        auto x = g.add(embed.apply(g, deq_tokens),
                       g.constant(grid_pos_encoding<T>(th, tw, cfg.d_model)));
        auto y = blocks.apply(g, x, th, tw, cfg.window);
        return head.apply(g, y);
    }
};

using Forecaster = ForecasterT<float>;

// {0,1} targets for the BCE objective, -1 -> 0 and +1 -> 1
template <typename T>
TensorT<T> bce_targets(const bqm::LatentBits& bits) {
    Tensor signs = bqm::unpack_bits(bits);
    TensorT<T> t({signs.shape[0], signs.shape[1]});
    for (int64_t i = 0; i < signs.numel(); ++i) t[i] = signs[i] > 0 ? T(1) : T(0);
    return t;
}

// hard bits from logits, consistent with the quantizer tie rule sign(0)=+1
bqm::LatentBits bits_from_logits(const Tensor& logits, int64_t th, int64_t tw);

// fraction of bits equal between two token grids
double bit_accuracy(const bqm::LatentBits& a, const bqm::LatentBits& b);

// --------------------------------------------------------------- training

// consecutive latent snapshots of one family; inputs at t pair with
// targets at t+1 (the 6-hour-step analog)
struct LatentSeries {
    int64_t th = 0, tw = 0;
    int nb = 0;
    int64_t t_begin = 0;
    std::vector<bqm::LatentBits> bits;  // indexed t - t_begin

    const bqm::LatentBits& at(int64_t t) const {
        return bits.at(static_cast<size_t>(t - t_begin));
    }
};

LatentSeries load_series(const std::string& ds_dir, const lds::FamilyManifest& fam,
                         int64_t t_begin, int64_t t_end);

struct ForecastTrainConfig {
    int64_t steps = 1500;
    int64_t batch = 4;
    Schedule schedule{.warmup_steps = 50, .total_steps = 1500, .lr_floor = 1e-5, .lr_peak = 3e-4};
    double weight_decay = 0.01;
    double clip_norm = 1.0;
    uint64_t seed = 0;
    std::string out_dir;
};

// BCE training on consecutive-step pairs; touches only LatentBits
std::vector<double> fit_forecaster(const ForecastTrainConfig& cfg, Forecaster& model,
                                   ParamStore& store, const LatentSeries& series);

void save_forecaster(const std::string& path, const Forecaster& model, const ParamStore& store);
Forecaster load_forecaster(const std::string& path);

// --------------------------------------------------------------- rollout

struct ForecastRow {
    int64_t lead;
    std::string model;    // "latent", "persistence" or "pixel"
    std::string channel;
    double rmse;
    std::vector<double> sedi;  // one per quantile threshold
    double bit_acc;            // NaN where bits are not defined (pixel model)
};

struct ForecastReport {
    std::vector<double> quantiles = metrics::default_sedi_quantiles();
    std::vector<ForecastRow> rows;
    std::string csv() const;
};

// Autoregressive rollout from each initial time: predictions stay in token
// space and are decoded only for the pixel metrics; the persistence
// baseline (initial tokens held) is always included.
ForecastReport evaluate_forecast(Forecaster& fc, const LatentSeries& series, WlaModel& wla,
                                 const grid::Archive& truth, const std::vector<int64_t>& inits,
                                 int64_t max_lead);

// -------------------------------------------------------- pixel baseline

// Same windowed backbone operating in pixel space, wrapped in the patch
// down/up-sampling the latent variant omits.
template <typename T>
struct PixelForecasterT {
    WindowConfig cfg;
    vae::PatchConfig patch;
    int64_t channels = 1;
    LinearT<T> down;   // (ph*pw*C) -> d_model
    TransformerStackT<T> blocks;
    LinearT<T> up;     // d_model -> (ph*pw*C)

    static PixelForecasterT init(const WindowConfig& cfg, const vae::PatchConfig& patch,
                                 int64_t channels, Rng& rng) {
        cfg.validate();
        patch.validate();
        PixelForecasterT f;
        f.cfg = cfg;
        f.patch = patch;
        f.channels = channels;
        int64_t win = patch.ph * patch.pw * channels;
        f.down = LinearT<T>::init(win, cfg.d_model, rng);
        f.blocks = TransformerStackT<T>::init(cfg.depth, cfg.d_model, cfg.heads, rng);
        f.up = LinearT<T>::init(cfg.d_model, win, rng);
        return f;
    }

    void reg(ParamStoreT<T>& ps, const std::string& prefix) {
        down.reg(ps, prefix + ".down");
        blocks.reg(ps, prefix + ".blocks");
        up.reg(ps, prefix + ".up");
    }

    // normalized [L x C] rows -> predicted normalized rows at t+1
    typename GraphT<T>::Id forward(GraphT<T>& g, typename GraphT<T>::Id x_rows, int64_t h,
                                   int64_t w) {
        auto geom = vae::patch_geom(h, w, channels, patch);
        auto tokens = g.add(down.apply(g, g.im2col(x_rows, geom)),
                            g.constant(grid_pos_encoding<T>(geom.th, geom.tw, cfg.d_model)));
        auto y = blocks.apply(g, tokens, geom.th, geom.tw, cfg.window);
        return g.col2im_avg(up.apply(g, y), geom);
    }
};

using PixelForecaster = PixelForecasterT<float>;

// weighted-MSE training on consecutive archive frames (pixel space)
std::vector<double> fit_pixel_forecaster(const ForecastTrainConfig& cfg, PixelForecaster& model,
                                         ParamStore& store, const grid::Archive& archive,
                                         const grid::PVSMeta& meta, const grid::NormStats& stats,
                                         int64_t t_begin, int64_t t_end);

void save_pixel_forecaster(const std::string& path, const PixelForecaster& model,
                           const ParamStore& store);
PixelForecaster load_pixel_forecaster(const std::string& path);

// identical report schema to the latent evaluation
ForecastReport evaluate_pixel_forecast(PixelForecaster& fc, const grid::Archive& truth,
                                       const grid::PVSMeta& meta, const grid::NormStats& stats,
                                       const std::vector<int64_t>& inits, int64_t max_lead);

}  // namespace wla::fcst
