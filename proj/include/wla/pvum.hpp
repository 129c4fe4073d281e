#pragma once

#include <cmath>
#include <utility>

#include "wla/griddata.hpp"
#include "wla/nn.hpp"

namespace wla::pvum {

// Hypernetwork configuration. d is the metadata embedding width, c2 the
// fixed unified channel count every subset is mapped to.
struct PVUMConfig {
    int64_t d = 64;
    int blocks = 2;
    int heads = 4;
    int64_t c2 = 16;

    void validate() const {
        if (d % heads != 0) throw ConfigError("pvum embedding width not divisible by heads");
        if (c2 < 1) throw ConfigError("pvum unified channel count must be positive");
    }
};

// dense embedding-table index for a variable id
inline int64_t variable_index(grid::VariableId v) { return grid::variable_dense_index(v); }
inline int64_t variable_vocab_size() { return grid::variable_count(); }

// scalar code fed to the sinusoidal encoding: log-pressure normalized by
// 1000 hPa; surface entries use a reserved code above the physical range
inline double pressure_code(const grid::PVEntry& e) {
    if (e.level == grid::kSurfaceLevel) return 0.5;
    return std::log(static_cast<double>(e.level) / 1000.0);
}

// constant [C1 x d] sinusoidal encodings for a subset; depends only on the
// entry contents, never on entry order
template <typename T>
TensorT<T> metadata_encodings(const grid::PVSMeta& meta, int64_t d) {
    TensorT<T> enc({meta.channels(), d});
    for (int64_t i = 0; i < meta.channels(); ++i) {
        auto pe = sinusoid_encoding<T>(pressure_code(meta.entries[static_cast<size_t>(i)]), d);
        std::copy(pe.begin(), pe.end(), enc.data.data() + i * d);
    }
    return enc;
}

// Metadata-to-linear-map hypernetwork: embeds the subset entries, runs
// them (with a prepended class token) through content-only transformer
// blocks, and projects the outputs into an adaptive map
//   W in R^{C1 x C2} (one row per entry), b in R^{C2} (from the class token).
template <typename T>
struct HyperNetT {
    PVUMConfig cfg;
    TensorT<T> var_embed;  // [vocab x d]
    TensorT<T> cls;        // [1 x d]
    TransformerStackT<T> stack;
    LinearT<T> row_head;   // d -> c2, rows of W (or columns of the inverse map)
    LinearT<T> bias_head;  // d -> bias width

    static HyperNetT init(const PVUMConfig& cfg, int64_t bias_width, Rng& rng) {
        cfg.validate();
        HyperNetT h;
        h.cfg = cfg;
        h.var_embed = TensorT<T>::randn({variable_vocab_size(), cfg.d}, rng, 0.5);
        h.cls = TensorT<T>::randn({1, cfg.d}, rng, 0.5);
        h.stack = TransformerStackT<T>::init(cfg.blocks, cfg.d, cfg.heads, rng);
        h.row_head = LinearT<T>::init(cfg.d, cfg.c2, rng);
        h.bias_head = LinearT<T>::init(cfg.d, bias_width, rng, 1e-2);
        return h;
    }

    void reg(ParamStoreT<T>& ps, const std::string& prefix) {
        ps.add(prefix + ".var_embed", &var_embed);
        ps.add(prefix + ".cls", &cls);
        stack.reg(ps, prefix + ".stack");
        row_head.reg(ps, prefix + ".row_head");
        bias_head.reg(ps, prefix + ".bias_head");
    }

    // token sequence [C1+1 x d], entry 0 the class token; each metadata
    // token is embedding(variable) + sinusoid(pressure code)
    typename GraphT<T>::Id embed_metadata(GraphT<T>& g, const grid::PVSMeta& meta) {
        meta.validate();
        std::vector<int64_t> idx;
        idx.reserve(meta.entries.size());
        for (const auto& e : meta.entries) idx.push_back(variable_index(e.var));
        auto toks = g.add(g.gather_rows(g.param(&var_embed), std::move(idx)),
                          g.constant(metadata_encodings<T>(meta, cfg.d)));
        return g.concat_rows(g.param(&cls), toks);
    }

    // transformer output rows split back into (class token, entry tokens)
    std::pair<typename GraphT<T>::Id, typename GraphT<T>::Id> relate(GraphT<T>& g,
                                                                     const grid::PVSMeta& meta) {
        auto toks = embed_metadata(g, meta);
        auto y = stack.apply(g, toks);  // content-only attention, no positions
        int64_t c1 = meta.channels();
        return {g.slice_rows(y, 0, 1), g.slice_rows(y, 1, c1)};
    }
};

// Encoder-side module: unified feature Y = X W + b with (W, b) generated
// from the metadata.
template <typename T>
struct PVUMT {
    HyperNetT<T> net;

    static PVUMT init(const PVUMConfig& cfg, Rng& rng) {
        return {HyperNetT<T>::init(cfg, cfg.c2, rng)};
    }
    void reg(ParamStoreT<T>& ps, const std::string& prefix) { net.reg(ps, prefix); }

    // { W: [C1 x c2], b: [1 x c2] }
    std::pair<typename GraphT<T>::Id, typename GraphT<T>::Id> generate_mapping(
        GraphT<T>& g, const grid::PVSMeta& meta) {
        auto [cls_out, entry_out] = net.relate(g, meta);
        auto w = net.row_head.apply(g, entry_out);
        auto b = net.bias_head.apply(g, cls_out);
        return {w, b};
    }

    // x_lc: [L x C1] normalized pixels -> [L x c2]
    typename GraphT<T>::Id unify(GraphT<T>& g, typename GraphT<T>::Id x_lc,
                                 const grid::PVSMeta& meta) {
        if (g.val(x_lc).shape[1] != meta.channels()) {
            throw ShapeError("unify: field has " + std::to_string(g.val(x_lc).shape[1]) +
                             " channels, metadata " + std::to_string(meta.channels()));
        }
        auto [w, b] = generate_mapping(g, meta);
        return g.add_bias(g.matmul(x_lc, w), g.reshape(b, {net.cfg.c2}));
    }
};

// Decoder-side module with its own parameters: X_hat = Y W' + b' where
// W' in R^{c2 x C1} is assembled from one generated column per metadata
// entry and b' holds one generated scalar per entry.
template <typename T>
struct PVUMInverseT {
    HyperNetT<T> net;

    static PVUMInverseT init(const PVUMConfig& cfg, Rng& rng) {
        return {HyperNetT<T>::init(cfg, 1, rng)};
    }
    void reg(ParamStoreT<T>& ps, const std::string& prefix) { net.reg(ps, prefix); }

    // y_lc2: [L x c2] -> [L x C1] normalized pixels
    typename GraphT<T>::Id apply(GraphT<T>& g, typename GraphT<T>::Id y_lc2,
                                 const grid::PVSMeta& meta) {
        auto [cls_out, entry_out] = net.relate(g, meta);
        (void)cls_out;  // participates in attention only
        auto cols = net.row_head.apply(g, entry_out);        // [C1 x c2]
        auto w_inv = g.transpose2d(cols);                    // [c2 x C1]
        auto b_col = net.bias_head.apply(g, entry_out);      // [C1 x 1]
        auto b = g.reshape(b_col, {meta.channels()});
        return g.add_bias(g.matmul(y_lc2, w_inv), b);
    }
};

}  // namespace wla::pvum
