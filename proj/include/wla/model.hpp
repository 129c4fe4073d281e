#pragma once

#include <string>

#include "wla/bqm.hpp"
#include "wla/griddata.hpp"
#include "wla/pvum.hpp"
#include "wla/vaeformer.hpp"

#include "json.hpp"

namespace wla {

using grid::GridField;

// Full autoencoder configuration: metadata hypernetwork, patch transport,
// asymmetric encoder/decoder stacks, and the quantizer width.
struct WlaConfig {
    pvum::PVUMConfig pvum;
    vae::PatchConfig patch;
    vae::StackConfig stack;
    int nb = 32;

    void validate() const {
        pvum.validate();
        patch.validate();
        stack.validate();
        bqm::CodebookSpec{nb}.validate();
    }

    nlohmann::json to_json() const;
    static WlaConfig from_json(const nlohmann::json& j);

    // 64x64-friendly toy geometry: patch (8,8), stride (6,6), pad (2,2),
    // depths 4/8, d_model 128, nb 32
    static WlaConfig desk();
    // full-scale geometry from the published configuration: patch (15,14),
    // stride (10,10), pad (2,2), depths 16/32, nb 128
    static WlaConfig paper();
    // smallest useful model, for sweeps and fast tests
    static WlaConfig tiny();
};

// Assembled Weather Latent Autoencoder. Templated on the scalar type so the
// gradient-check oracles can instantiate a 64-bit shadow of the same model.
template <typename T>
struct WlaModelT {
    WlaConfig cfg;
    grid::PVSMeta meta;
    grid::NormStats stats;

    pvum::PVUMT<T> unify;
    pvum::PVUMInverseT<T> unify_inv;
    vae::VaeformerT<T> vaef;
    bqm::BqmT<T> quant;

    static WlaModelT init(const WlaConfig& cfg, grid::PVSMeta meta, uint64_t seed) {
        cfg.validate();
        meta.validate();
        WlaModelT m;
        m.cfg = cfg;
        m.meta = std::move(meta);
        m.stats.mean.assign(m.meta.entries.size(), 0.0f);
        m.stats.std.assign(m.meta.entries.size(), 1.0f);
        Rng r_enc(Rng::derive(seed, 1)), r_dec(Rng::derive(seed, 2));
        Rng r_vae(Rng::derive(seed, 3)), r_bqm(Rng::derive(seed, 4));
        m.unify = pvum::PVUMT<T>::init(cfg.pvum, r_enc);
        m.unify_inv = pvum::PVUMInverseT<T>::init(cfg.pvum, r_dec);
        m.vaef = vae::VaeformerT<T>::init(cfg.patch, cfg.stack, cfg.pvum.c2, r_vae);
        m.quant = bqm::BqmT<T>::init(cfg.nb, cfg.stack.d_model, r_bqm);
        return m;
    }

    void reg(ParamStoreT<T>& ps) {
        unify.reg(ps, "pvum_enc");
        unify_inv.reg(ps, "pvum_dec");
        vaef.reg(ps, "vae");
        quant.reg(ps, "bqm");
    }

    // encoder half: normalized [L x C1] pixels -> sphere-projected codes
    typename GraphT<T>::Id encode_codes(GraphT<T>& g, typename GraphT<T>::Id x_lc, int64_t h,
                                        int64_t w) {
        auto [th, tw] = vae::token_grid_shape(h, w, cfg.patch);
        auto y = unify.unify(g, x_lc, meta);
        auto tokens = vaef.encode(g, vaef.patchify(g, y, h, w), th, tw);
        auto u = quant.to_code.apply(g, tokens);
        return g.sphere_project(u);
    }

    // decoder half: quantized codes [L' x nb] -> normalized [L x C1]
    typename GraphT<T>::Id decode_codes(GraphT<T>& g, typename GraphT<T>::Id codes, int64_t h,
                                        int64_t w) {
        auto [th, tw] = vae::token_grid_shape(h, w, cfg.patch);
        auto tokens = quant.from_code.apply(g, codes);
        auto y = vaef.decode(g, tokens, th, tw);
        return unify_inv.apply(g, vaef.unpatchify(g, y, h, w), meta);
    }

    struct RoundTrip {
        typename GraphT<T>::Id pre_quant;  // entropy-regularizer input
        typename GraphT<T>::Id recon;      // normalized [L x C1]
    };

    // full differentiable round trip with the straight-through quantizer
    RoundTrip roundtrip(GraphT<T>& g, typename GraphT<T>::Id x_lc, int64_t h, int64_t w) {
        auto s = encode_codes(g, x_lc, h, w);
        auto q = g.bsq_ste(s);
        return {s, decode_codes(g, q, h, w)};
    }
};

using WlaModel = WlaModelT<float>;

// ------------------------------------------------- field <-> row layout

// [C x H x W] channel-major values -> [L x C] pixel-major rows
Tensor field_to_rows(const GridField& f);
// inverse; meta/axes supplied by the caller
grid::GridField rows_to_field(const Tensor& rows, const grid::PVSMeta& meta,
                              const std::vector<float>& lats, const std::vector<float>& lons);

// --------------------------------------------------------- persistence

// store must be registered over this model; reload reproduces the forward
// pass bitwise and continues the same optimizer trajectory
void save_wla(const std::string& path, const WlaModel& model, const ParamStore& store);
void save_wla(const std::string& path, WlaModel& model);

// loads parameters into a freshly constructed model; to also restore
// optimizer moments, register a store over the returned model and call
// load_checkpoint on the same path
WlaModel load_wla(const std::string& path, int64_t* step_out = nullptr);

uint64_t wla_fingerprint(WlaModel& model);
std::string wla_config_json(const WlaModel& model);

}  // namespace wla

namespace wla::grid {
// subset serialization used by checkpoint/manifest JSON
nlohmann::json meta_to_json(const PVSMeta& meta);
PVSMeta meta_from_json(const nlohmann::json& j);
}  // namespace wla::grid
