#pragma once

#include <string>
#include <vector>

#include "wla/graph.hpp"
#include "wla/tensor.hpp"

namespace wla {

// Named parameter registry with AdamW moment accumulators. Parameters are
// owned by the model structs; the store holds stable pointers plus the
// per-parameter first/second moments and the shared step counter.
template <typename T>
class ParamStoreT {
public:
    struct Entry {
        std::string name;
        TensorT<T>* p;
        TensorT<T> m;
        TensorT<T> v;
    };

    void add(const std::string& name, TensorT<T>* p) {
        for (const auto& e : entries_) {
            if (e.name == name) throw ConfigError("duplicate parameter name: " + name);
        }
        entries_.push_back({name, p, TensorT<T>(p->shape), TensorT<T>(p->shape)});
    }

    std::vector<Entry>& entries() { return entries_; }
    const std::vector<Entry>& entries() const { return entries_; }
    int64_t step() const { return step_; }
    void set_step(int64_t s) { step_ = s; }

    int64_t param_count() const {
        int64_t n = 0;
        for (const auto& e : entries_) n += e.p->numel();
        return n;
    }

    // global L2 norm of the gradients held by the graph (64-bit accumulation)
    double grad_norm(const GraphT<T>& g) const {
        double ss = 0.0;
        for (const auto& e : entries_) {
            const TensorT<T>* gr = g.grad_of(e.p);
            if (gr) ss += kern::sumsq64(gr->data.data(), gr->numel());
        }
        return std::sqrt(ss);
    }


private:
    std::vector<Entry> entries_;
    int64_t step_ = 0;
};

using ParamStore = ParamStoreT<float>;

struct AdamWConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double clip_norm = 0.0;  // 0 disables clipping
};

// Adaptive-moment update with decoupled weight decay and bias-corrected
// moments. Gradients are read from the graph; a parameter that was never
// touched in the step receives only the decay term. Throws NumericError
// on any non-finite gradient before mutating anything.
template <typename T>
void optimizer_step(ParamStoreT<T>& store, const GraphT<T>& g, double lr, double weight_decay,
                    const AdamWConfig& cfg = {}) {
    for (const auto& e : store.entries()) {
        const TensorT<T>* gr = g.grad_of(e.p);
        if (gr && !gr->all_finite()) {
            throw NumericError("non-finite gradient in parameter '" + e.name + "'; step aborted");
        }
    }
    double scale = 1.0;
    if (cfg.clip_norm > 0.0) {
        double norm = store.grad_norm(g);
        if (norm > cfg.clip_norm) scale = cfg.clip_norm / norm;
    }
    store.set_step(store.step() + 1);
    const double t = static_cast<double>(store.step());
    const double bc1 = 1.0 - std::pow(cfg.beta1, t);
    const double bc2 = 1.0 - std::pow(cfg.beta2, t);
    for (auto& e : store.entries()) {
        const TensorT<T>* gr = g.grad_of(e.p);
        TensorT<T>& p = *e.p;
        for (int64_t i = 0; i < p.numel(); ++i) {
            double gi = gr ? static_cast<double>((*gr)[i]) * scale : 0.0;
            double m = cfg.beta1 * static_cast<double>(e.m[i]) + (1.0 - cfg.beta1) * gi;
            double v = cfg.beta2 * static_cast<double>(e.v[i]) + (1.0 - cfg.beta2) * gi * gi;
            e.m[i] = static_cast<T>(m);
            e.v[i] = static_cast<T>(v);
            double mhat = m / bc1;
            double vhat = v / bc2;
            double upd = lr * mhat / (std::sqrt(vhat) + cfg.eps) + lr * weight_decay * static_cast<double>(p[i]);
            p[i] = static_cast<T>(static_cast<double>(p[i]) - upd);
        }
    }
}

// ------------------------------------------------------------- schedule

// Linear warmup from lr_floor to lr_peak, then cosine decay back to the
// floor at total_steps.
struct Schedule {
    int64_t warmup_steps = 1000;
    int64_t total_steps = 10000;
    double lr_floor = 3.2e-6;
    double lr_peak = 3.2e-5;

    void validate() const {
        if (!(warmup_steps > 0 && warmup_steps < total_steps)) {
            throw ConfigError("schedule requires 0 < warmup_steps < total_steps");
        }
        if (lr_floor > lr_peak) throw ConfigError("schedule requires lr_floor <= lr_peak");
    }
};

inline double lr_at(const Schedule& s, int64_t step) {
    s.validate();
    if (step < 0 || step > s.total_steps) {
        throw ConfigError("lr_at: step " + std::to_string(step) + " outside [0, " +
                          std::to_string(s.total_steps) + "]");
    }
    if (step <= s.warmup_steps) {
        double f = static_cast<double>(step) / static_cast<double>(s.warmup_steps);
        return s.lr_floor + (s.lr_peak - s.lr_floor) * f;
    }
    double tau = static_cast<double>(step - s.warmup_steps) /
                 static_cast<double>(s.total_steps - s.warmup_steps);
    return s.lr_floor + (s.lr_peak - s.lr_floor) * 0.5 * (1.0 + std::cos(3.14159265358979323846 * tau));
}

// ----------------------------------------------------------- checkpoint

// Named-tensor container: magic "WCKP", version, step, a config JSON blob,
// then a shape table and 32-bit payloads. Adam moments are stored next to
// the parameters so a resumed run continues the same trajectory.
void save_checkpoint(const std::string& path, const ParamStore& store,
                     const std::string& config_json);
void load_checkpoint(const std::string& path, ParamStore& store, int64_t* step_out = nullptr);
std::string read_checkpoint_config(const std::string& path);

// fingerprint binding .wlat files to the model that wrote them: FNV-1a over
// parameter names, shapes and payload bytes (moments excluded)
uint64_t fingerprint(const ParamStore& store);

}  // namespace wla
