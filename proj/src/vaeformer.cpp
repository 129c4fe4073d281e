#include "wla/vaeformer.hpp"

namespace wla::vae {

std::pair<int64_t, int64_t> token_grid_shape(int64_t h, int64_t w, const PatchConfig& cfg) {
    cfg.validate();
    if (h + 2 * cfg.qh < cfg.ph || w + 2 * cfg.qw < cfg.pw) {
        throw ConfigError("grid " + std::to_string(h) + "x" + std::to_string(w) +
                          " smaller than one patch");
    }
    int64_t th = (h + 2 * cfg.qh - cfg.ph) / cfg.sh + 1;
    int64_t tw = (w + 2 * cfg.qw - cfg.pw) / cfg.sw + 1;
    return {th, tw};
}

kern::PatchGeom patch_geom(int64_t h, int64_t w, int64_t c, const PatchConfig& cfg) {
    auto [th, tw] = token_grid_shape(h, w, cfg);
    kern::PatchGeom g;
    g.h = h;
    g.w = w;
    g.c = c;
    g.ph = cfg.ph;
    g.pw = cfg.pw;
    g.sh = cfg.sh;
    g.sw = cfg.sw;
    g.qh = cfg.qh;
    g.qw = cfg.qw;
    g.th = th;
    g.tw = tw;
    // every interior pixel must be covered by at least one window
    for (int64_t y : {static_cast<int64_t>(0), h - 1}) {
        for (int64_t x : {static_cast<int64_t>(0), w - 1}) {
            if (patch_coverage_at(g, y, x) == 0) {
                throw ConfigError("patch geometry leaves pixel (" + std::to_string(y) + "," +
                                  std::to_string(x) + ") uncovered");
            }
        }
    }
    return g;
}

}  // namespace wla::vae
