#include "wla/kernels.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace wla::kern {

namespace {
int g_max_threads = 0;  // 0 = not yet resolved
}

int max_threads() {
    if (g_max_threads == 0) {
#ifdef _OPENMP
        g_max_threads = omp_get_max_threads();
#else
        g_max_threads = 1;
#endif
    }
    return g_max_threads;
}

void set_max_threads(int n) { g_max_threads = n < 1 ? 1 : n; }

int32_t patch_coverage_at(const PatchGeom& g, int64_t y, int64_t x) {
    int64_t ty_lo = (y + g.qh - g.ph + g.sh) >= 0 ? (y + g.qh - g.ph + g.sh) / g.sh : 0;
    if (ty_lo < 0) ty_lo = 0;
    int64_t ty_hi = (y + g.qh) / g.sh;
    if (ty_hi >= g.th) ty_hi = g.th - 1;
    int64_t tx_lo = (x + g.qw - g.pw + g.sw) >= 0 ? (x + g.qw - g.pw + g.sw) / g.sw : 0;
    if (tx_lo < 0) tx_lo = 0;
    int64_t tx_hi = (x + g.qw) / g.sw;
    if (tx_hi >= g.tw) tx_hi = g.tw - 1;
    int32_t cov = 0;
    for (int64_t ty = ty_lo; ty <= ty_hi; ++ty) {
        int64_t dy = y - (ty * g.sh - g.qh);
        if (dy < 0 || dy >= g.ph) continue;
        for (int64_t tx = tx_lo; tx <= tx_hi; ++tx) {
            int64_t dx = x - (tx * g.sw - g.qw);
            if (dx < 0 || dx >= g.pw) continue;
            ++cov;
        }
    }
    return cov;
}

}  // namespace wla::kern
