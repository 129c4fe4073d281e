#pragma once

#include <utility>

#include "wla/nn.hpp"

namespace wla::vae {

// Overlapping-patch geometry. Defaults are the full-scale configuration;
// the desk preset (8,8)/(6,6)/(2,2) exercises the same overlap and padding
// paths at toy grid sizes.
struct PatchConfig {
    int64_t ph = 15, pw = 14;  // patch extent
    int64_t sh = 10, sw = 10;  // stride
    int64_t qh = 2, qw = 2;    // zero padding per side

    void validate() const {
        if (ph < 1 || pw < 1 || sh < 1 || sw < 1 || qh < 0 || qw < 0) {
            throw ConfigError("patch geometry must be positive");
        }
        if (ph < sh || pw < sw) throw ConfigError("patch must cover the stride (ph>=sh, pw>=sw)");
        if (qh >= ph || qw >= pw) throw ConfigError("padding must be smaller than the patch");
    }
};

// token grid extents: H' = floor((H + 2*qh - ph)/sh) + 1, likewise W'
std::pair<int64_t, int64_t> token_grid_shape(int64_t h, int64_t w, const PatchConfig& cfg);

kern::PatchGeom patch_geom(int64_t h, int64_t w, int64_t c, const PatchConfig& cfg);

// Encoder/decoder transformer depths; the decoder is at least as deep as
// the encoder at every scale.
struct StackConfig {
    int enc_depth = 16;
    int dec_depth = 32;
    int64_t d_model = 256;
    int heads = 8;

    void validate() const {
        if (enc_depth < 0 || dec_depth < enc_depth) {
            throw ConfigError("decoder depth must be >= encoder depth");
        }
        if (d_model % heads != 0) throw ConfigError("d_model not divisible by head count");
    }
};

// Patch-transformer transport between unified features [L x c2] and the
// token grid [H'*W' x d_model].
template <typename T>
struct VaeformerT {
    PatchConfig patch;
    StackConfig stack;
    int64_t c2 = 16;
    LinearT<T> patch_proj;    // (ph*pw*c2) -> d_model
    LinearT<T> unpatch_proj;  // d_model -> (ph*pw*c2)
    TransformerStackT<T> encoder;
    TransformerStackT<T> decoder;

    static VaeformerT init(const PatchConfig& p, const StackConfig& s, int64_t c2, Rng& rng) {
        p.validate();
        s.validate();
        VaeformerT v;
        v.patch = p;
        v.stack = s;
        v.c2 = c2;
        int64_t win = p.ph * p.pw * c2;
        v.patch_proj = LinearT<T>::init(win, s.d_model, rng);
        v.unpatch_proj = LinearT<T>::init(s.d_model, win, rng);
        v.encoder = TransformerStackT<T>::init(s.enc_depth, s.d_model, s.heads, rng);
        v.decoder = TransformerStackT<T>::init(s.dec_depth, s.d_model, s.heads, rng);
        return v;
    }

    void reg(ParamStoreT<T>& ps, const std::string& prefix) {
        patch_proj.reg(ps, prefix + ".patch_proj");
        unpatch_proj.reg(ps, prefix + ".unpatch_proj");
        encoder.reg(ps, prefix + ".encoder");
        decoder.reg(ps, prefix + ".decoder");
    }

    // [L x c2] pixel-major -> [H'*W' x d_model], one token per stride step
    typename GraphT<T>::Id patchify(GraphT<T>& g, typename GraphT<T>::Id y_lc, int64_t h,
                                    int64_t w) {
        auto geom = patch_geom(h, w, c2, patch);
        return patch_proj.apply(g, g.im2col(y_lc, geom));
    }

    // [H'*W' x d_model] -> [L x c2]; overlapping patch emissions averaged
    // by coverage, padding border cropped
    typename GraphT<T>::Id unpatchify(GraphT<T>& g, typename GraphT<T>::Id tokens, int64_t h,
                                      int64_t w) {
        auto geom = patch_geom(h, w, c2, patch);
        return g.col2im_avg(unpatch_proj.apply(g, tokens), geom);
    }

    typename GraphT<T>::Id encode(GraphT<T>& g, typename GraphT<T>::Id tokens, int64_t th,
                                  int64_t tw) {
        if (encoder.blocks.empty()) return tokens;
        auto x = g.add(tokens, g.constant(grid_pos_encoding<T>(th, tw, stack.d_model)));
        return encoder.apply(g, x);
    }

    typename GraphT<T>::Id decode(GraphT<T>& g, typename GraphT<T>::Id tokens, int64_t th,
                                  int64_t tw) {
        if (decoder.blocks.empty()) return tokens;
        auto x = g.add(tokens, g.constant(grid_pos_encoding<T>(th, tw, stack.d_model)));
        return decoder.apply(g, x);
    }
};

}  // namespace wla::vae
