#pragma once

#include <functional>
#include <memory>
#include <string>

#include "wla/codec.hpp"
#include "wla/model.hpp"

namespace wla::train {

struct TrainConfig {
    int64_t steps = 2000;
    int64_t batch = 8;
    Schedule schedule;  // total_steps defaults to `steps` via normalize()
    double lambda_entropy = 1e-3;
    double weight_decay = 0.01;
    double clip_norm = 1.0;
    uint64_t seed = 0;
    int64_t checkpoint_every = 0;  // 0: final checkpoint only
    std::string out_dir;           // loss csv and checkpoints; empty: in-memory run

    void normalize() {
        if (schedule.total_steps < steps) schedule.total_steps = steps;
        if (schedule.warmup_steps >= steps) schedule.warmup_steps = std::max<int64_t>(1, steps / 10);
    }
    void validate() const {
        if (steps <= schedule.warmup_steps) throw ConfigError("steps must exceed warmup");
        if (batch < 1) throw ConfigError("batch must be positive");
        schedule.validate();
    }
};

// Training data: one subset family on a fixed grid, sampled by seed so a
// resumed run replays the identical stream.
class DataSource {
public:
    virtual ~DataSource() = default;
    virtual const grid::PVSMeta& meta() const = 0;
    virtual int64_t height() const = 0;
    virtual int64_t width() const = 0;
    virtual GridField sample(uint64_t seed) const = 0;  // original units
};

class SynthSource : public DataSource {
public:
    SynthSource(grid::PVSMeta meta, int64_t h, int64_t w, grid::SynthConfig cfg = {})
        : meta_(std::move(meta)), h_(h), w_(w), cfg_(cfg) {}
    const grid::PVSMeta& meta() const override { return meta_; }
    int64_t height() const override { return h_; }
    int64_t width() const override { return w_; }
    GridField sample(uint64_t seed) const override {
        return grid::synth_generate(meta_, h_, w_, seed, cfg_);
    }

private:
    grid::PVSMeta meta_;
    int64_t h_, w_;
    grid::SynthConfig cfg_;
};

// samples uniformly over a timeline range of an archive
class ArchiveSource : public DataSource {
public:
    ArchiveSource(const grid::Archive& archive, grid::PVSMeta meta, int64_t t_begin, int64_t t_end)
        : archive_(archive), meta_(std::move(meta)), t_begin_(t_begin), t_end_(t_end) {
        if (t_begin_ < 0 || t_end_ > archive_.timesteps() || t_begin_ >= t_end_) {
            throw ConfigError("archive source range invalid");
        }
    }
    const grid::PVSMeta& meta() const override { return meta_; }
    int64_t height() const override { return archive_.subset(meta_, t_begin_).height(); }
    int64_t width() const override { return archive_.subset(meta_, t_begin_).width(); }
    GridField sample(uint64_t seed) const override {
        Rng r(seed);
        int64_t t = t_begin_ + static_cast<int64_t>(r.below(static_cast<uint64_t>(t_end_ - t_begin_)));
        return archive_.subset(meta_, t);
    }

private:
    const grid::Archive& archive_;
    grid::PVSMeta meta_;
    int64_t t_begin_, t_end_;
};

// ------------------------------------------------------------------ loss

template <typename T>
struct LossParts {
    typename GraphT<T>::Id total;
    typename GraphT<T>::Id recon;
    typename GraphT<T>::Id entropy;
};

// latitude-weighted MSE between the normalized input and its round trip,
// plus the weighted entropy surrogate; the round-trip nodes are passed in
// so tests can substitute an exact reconstruction
template <typename T>
LossParts<T> wla_loss_from(GraphT<T>& g, typename GraphT<T>::Id x_rows,
                           typename GraphT<T>::Id recon_rows,
                           typename GraphT<T>::Id pre_quant, const std::vector<T>& pixel_w,
                           double lambda_entropy) {
    LossParts<T> parts;
    parts.recon = g.weighted_mse(recon_rows, x_rows, pixel_w);
    parts.entropy = g.entropy_reg(pre_quant, 10.0);
    parts.total = lambda_entropy != 0.0
                      ? g.add(parts.recon, g.scale(parts.entropy, lambda_entropy))
                      : parts.recon;
    return parts;
}

// model-bound form on one normalized sample in row layout
template <typename T>
LossParts<T> wla_loss(GraphT<T>& g, WlaModelT<T>& model, typename GraphT<T>::Id x_rows,
                      int64_t h, int64_t w, const std::vector<T>& pixel_w,
                      double lambda_entropy) {
    auto rt = model.roundtrip(g, x_rows, h, w);
    return wla_loss_from(g, x_rows, rt.recon, rt.pre_quant, pixel_w, lambda_entropy);
}

// ------------------------------------------------------------------ loop

struct StepLog {
    int64_t step;
    double lr;
    double recon;
    double entropy;
    double total;
};

// Runs from store.step() to cfg.steps. The model's NormStats must already
// be frozen (fit_norm_stats) before the first step. Loss rows are appended
// to <out_dir>/loss.csv and returned. Non-finite loss aborts the run with
// the last good parameters checkpointed.
std::vector<StepLog> fit(const TrainConfig& cfg, const DataSource& source, WlaModel& model,
                         ParamStore& store,
                         const std::function<void(const StepLog&)>& on_step = nullptr);

// estimate per-channel statistics from `n` samples of the source and
// freeze them into the model
void fit_norm_stats(WlaModel& model, const DataSource& source, int64_t n, uint64_t seed);

// ------------------------------------------------------------ evaluation

struct ChannelEval {
    std::string channel;
    double rmse;     // weighted, original units, mean over test fields
    double std_ref;  // per-channel std of the truth sample
};

struct EvalReport {
    std::vector<ChannelEval> channels;
    double ratio = 0.0;
    double bpsp = 0.0;

    std::string csv() const;
};

// compress/decompress every test field through the hard codec path and
// report weighted RMSE against the climatology reference row
EvalReport evaluate(WlaModel& model, const std::vector<GridField>& test_fields);

}  // namespace wla::train
