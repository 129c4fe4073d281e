#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "wla/graph.hpp"
#include "wla/params.hpp"

namespace wla {

template <typename T>
struct LinearT {
    TensorT<T> w;  // [in x out]
    TensorT<T> b;  // [out]

    static LinearT init(int64_t in, int64_t out, Rng& rng, double w_std = 0.0) {
        if (w_std == 0.0) w_std = 1.0 / std::sqrt(static_cast<double>(in));
        LinearT l;
        l.w = TensorT<T>::randn({in, out}, rng, w_std);
        l.b = TensorT<T>({out});
        return l;
    }

    static LinearT zeros(int64_t in, int64_t out) {
        LinearT l;
        l.w = TensorT<T>({in, out});
        l.b = TensorT<T>({out});
        return l;
    }

    typename GraphT<T>::Id apply(GraphT<T>& g, typename GraphT<T>::Id x) {
        return g.add_bias(g.matmul(x, g.param(&w)), g.param(&b));
    }

    void reg(ParamStoreT<T>& ps, const std::string& prefix) {
        ps.add(prefix + ".w", &w);
        ps.add(prefix + ".b", &b);
    }
};

template <typename T>
struct LayerNormT {
    TensorT<T> gain;
    TensorT<T> bias;

    static LayerNormT init(int64_t n) {
        LayerNormT l;
        l.gain = TensorT<T>::full({n}, T(1));
        l.bias = TensorT<T>({n});
        return l;
    }

    typename GraphT<T>::Id apply(GraphT<T>& g, typename GraphT<T>::Id x) {
        return g.layernorm(x, g.param(&gain), g.param(&bias));
    }

    void reg(ParamStoreT<T>& ps, const std::string& prefix) {
        ps.add(prefix + ".gain", &gain);
        ps.add(prefix + ".bias", &bias);
    }
};

// Pre-norm transformer block: x + W_o MHSA(LN(x)); then x + FFN(LN(x)) with
// GELU. Window size 0 means full self-attention; w > 0 restricts attention
// to w x w tiles of a (th x tw) token grid.
template <typename T>
struct TransformerBlockT {
    LayerNormT<T> ln1, ln2;
    LinearT<T> wq, wk, wv, wo;
    LinearT<T> ff1, ff2;
    int heads = 4;

    static TransformerBlockT init(int64_t d, int heads, Rng& rng) {
        if (d % heads != 0) throw ConfigError("transformer width not divisible by head count");
        TransformerBlockT blk;
        blk.heads = heads;
        blk.ln1 = LayerNormT<T>::init(d);
        blk.ln2 = LayerNormT<T>::init(d);
        blk.wq = LinearT<T>::init(d, d, rng);
        blk.wk = LinearT<T>::init(d, d, rng);
        blk.wv = LinearT<T>::init(d, d, rng);
        blk.wo = LinearT<T>::init(d, d, rng, 0.5 / std::sqrt(static_cast<double>(d)));
        blk.ff1 = LinearT<T>::init(d, 4 * d, rng);
        blk.ff2 = LinearT<T>::init(4 * d, d, rng, 0.5 / std::sqrt(static_cast<double>(4 * d)));
        return blk;
    }

    typename GraphT<T>::Id apply(GraphT<T>& g, typename GraphT<T>::Id x, int64_t th = 0,
                                 int64_t tw = 0, int64_t win = 0) {
        auto h = ln1.apply(g, x);
        auto att = g.attention(wq.apply(g, h), wk.apply(g, h), wv.apply(g, h), heads, th, tw, win);
        auto y = g.add(x, wo.apply(g, att));
        auto h2 = ln2.apply(g, y);
        auto ff = ff2.apply(g, g.gelu(ff1.apply(g, h2)));
        return g.add(y, ff);
    }

    void reg(ParamStoreT<T>& ps, const std::string& prefix) {
        ln1.reg(ps, prefix + ".ln1");
        ln2.reg(ps, prefix + ".ln2");
        wq.reg(ps, prefix + ".wq");
        wk.reg(ps, prefix + ".wk");
        wv.reg(ps, prefix + ".wv");
        wo.reg(ps, prefix + ".wo");
        ff1.reg(ps, prefix + ".ff1");
        ff2.reg(ps, prefix + ".ff2");
    }
};

template <typename T>
struct TransformerStackT {
    std::vector<TransformerBlockT<T>> blocks;
    LayerNormT<T> final_ln;

    static TransformerStackT init(int depth, int64_t d, int heads, Rng& rng) {
        TransformerStackT s;
        s.blocks.reserve(depth);
        for (int i = 0; i < depth; ++i) s.blocks.push_back(TransformerBlockT<T>::init(d, heads, rng));
        s.final_ln = LayerNormT<T>::init(d);
        return s;
    }

    // depth 0 is the identity (final_ln skipped as well)
    typename GraphT<T>::Id apply(GraphT<T>& g, typename GraphT<T>::Id x, int64_t th = 0,
                                 int64_t tw = 0, int64_t win = 0) {
        if (blocks.empty()) return x;
        for (auto& blk : blocks) x = blk.apply(g, x, th, tw, win);
        return final_ln.apply(g, x);
    }

    void reg(ParamStoreT<T>& ps, const std::string& prefix) {
        for (size_t i = 0; i < blocks.size(); ++i) {
            blocks[i].reg(ps, prefix + ".blk" + std::to_string(i));
        }
        if (!blocks.empty()) final_ln.reg(ps, prefix + ".final_ln");
    }
};

// ------------------------------------------------------ position codes

// Sinusoidal encoding of a scalar code over d dims; wavelengths span the
// log-pressure range so nearby levels land on nearby encodings.
template <typename T>
std::vector<T> sinusoid_encoding(double code, int64_t d) {
    std::vector<T> pe(static_cast<size_t>(d));
    int64_t m = d / 2;
    for (int64_t i = 0; i < m; ++i) {
        double frac = m > 1 ? static_cast<double>(i) / static_cast<double>(m - 1) : 0.0;
        double omega = 0.5 * std::pow(256.0, frac);
        pe[2 * i] = static_cast<T>(std::sin(code * omega));
        pe[2 * i + 1] = static_cast<T>(std::cos(code * omega));
    }
    if (d % 2 == 1) pe[d - 1] = T(0);
    return pe;
}

// 2-D sinusoidal encodings over a token grid; first half of the dims encode
// the row index, second half the column index.
template <typename T>
TensorT<T> grid_pos_encoding(int64_t th, int64_t tw, int64_t d) {
    TensorT<T> pe({th * tw, d});
    int64_t half = d / 2;
    auto fill = [](T* dst, int64_t n, double pos) {
        int64_t m = n / 2;
        for (int64_t i = 0; i < m; ++i) {
            double omega = 1.0 / std::pow(10000.0, static_cast<double>(2 * i) / static_cast<double>(n));
            dst[2 * i] = static_cast<T>(std::sin(pos * omega));
            dst[2 * i + 1] = static_cast<T>(std::cos(pos * omega));
        }
        if (n % 2 == 1) dst[n - 1] = T(0);
    };
    for (int64_t y = 0; y < th; ++y) {
        for (int64_t x = 0; x < tw; ++x) {
            T* row = pe.data.data() + (y * tw + x) * d;
            fill(row, half, static_cast<double>(y));
            fill(row + half, d - half, static_cast<double>(x));
        }
    }
    return pe;
}

}  // namespace wla
