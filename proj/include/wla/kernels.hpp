#pragma once

#include <cmath>
#include <cstdint>

#include "wla/tensor.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

// Data-parallel inner loops. Every kernel is parameterized by a thread
// count `nt`; nt == 1 is the serial reference and nt > 1 the OpenMP
// version of the same loop. Each output element is always accumulated in
// a fixed serial order, so results are bitwise identical for any nt.
// Scalar statistics (sums, norms, row moments) accumulate in double.
namespace wla::kern {

int max_threads();
void set_max_threads(int n);

// ------------------------------------------------------------- matmul

// C[m x n] = A[m x k] * B[k x n], or += if acc
template <typename T>
void matmul_nn_impl(const T* a, const T* b, T* c, int64_t m, int64_t k, int64_t n, bool acc,
                    int nt) {
#pragma omp parallel for num_threads(nt) if (nt > 1) schedule(static)
    for (int64_t i = 0; i < m; ++i) {
        T* crow = c + i * n;
        if (!acc) {
            for (int64_t j = 0; j < n; ++j) crow[j] = T(0);
        }
        const T* arow = a + i * k;
        for (int64_t p = 0; p < k; ++p) {
            T av = arow[p];
            const T* brow = b + p * n;
            for (int64_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

// C[m x n] = A[m x k] * B[n x k]^T, or += if acc
template <typename T>
void matmul_nt_impl(const T* a, const T* b, T* c, int64_t m, int64_t k, int64_t n, bool acc,
                    int nt) {
#pragma omp parallel for num_threads(nt) if (nt > 1) schedule(static)
    for (int64_t i = 0; i < m; ++i) {
        const T* arow = a + i * k;
        T* crow = c + i * n;
        for (int64_t j = 0; j < n; ++j) {
            const T* brow = b + j * k;
            T s = acc ? crow[j] : T(0);
            for (int64_t p = 0; p < k; ++p) s += arow[p] * brow[p];
            crow[j] = s;
        }
    }
}

// C[k x n] = A[m x k]^T * B[m x n], or += if acc.
// Parallel over output rows; the m-reduction stays in ascending order.
template <typename T>
void matmul_tn_impl(const T* a, const T* b, T* c, int64_t m, int64_t k, int64_t n, bool acc,
                    int nt) {
#pragma omp parallel for num_threads(nt) if (nt > 1) schedule(static)
    for (int64_t i = 0; i < k; ++i) {
        T* crow = c + i * n;
        if (!acc) {
            for (int64_t j = 0; j < n; ++j) crow[j] = T(0);
        }
        for (int64_t p = 0; p < m; ++p) {
            T av = a[p * k + i];
            const T* brow = b + p * n;
            for (int64_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

template <typename T>
void matmul_nn(const TensorT<T>& a, const TensorT<T>& b, TensorT<T>& c, bool acc = false) {
    matmul_nn_impl(a.data.data(), b.data.data(), c.data.data(), a.shape[0], a.shape[1],
                   b.shape[1], acc, max_threads());
}
template <typename T>
void matmul_nt(const TensorT<T>& a, const TensorT<T>& b, TensorT<T>& c, bool acc = false) {
    matmul_nt_impl(a.data.data(), b.data.data(), c.data.data(), a.shape[0], a.shape[1],
                   b.shape[0], acc, max_threads());
}
template <typename T>
void matmul_tn(const TensorT<T>& a, const TensorT<T>& b, TensorT<T>& c, bool acc = false) {
    matmul_tn_impl(a.data.data(), b.data.data(), c.data.data(), a.shape[0], a.shape[1],
                   b.shape[1], acc, max_threads());
}

// -------------------------------------------------------- elementwise

template <typename T>
void ew_apply(T* y, const T* x, int64_t n, int nt, T (*f)(T)) {
#pragma omp parallel for num_threads(nt) if (nt > 1) schedule(static)
    for (int64_t i = 0; i < n; ++i) y[i] = f(x[i]);
}

template <typename T>
void axpy(T* y, const T* x, T alpha, int64_t n, int nt) {
#pragma omp parallel for num_threads(nt) if (nt > 1) schedule(static)
    for (int64_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

// y[L x n] += b[n] broadcast over rows
template <typename T>
void add_rowvec(T* y, const T* b, int64_t rows, int64_t n, int nt) {
#pragma omp parallel for num_threads(nt) if (nt > 1) schedule(static)
    for (int64_t i = 0; i < rows; ++i) {
        T* yr = y + i * n;
        for (int64_t j = 0; j < n; ++j) yr[j] += b[j];
    }
}

// out[n] += column sums of g[rows x n]; per-column reduction in row order
template <typename T>
void colsum_acc(const T* g, T* out, int64_t rows, int64_t n, int nt) {
#pragma omp parallel for num_threads(nt) if (nt > 1) schedule(static)
    for (int64_t j = 0; j < n; ++j) {
        double s = 0.0;
        for (int64_t i = 0; i < rows; ++i) s += static_cast<double>(g[i * n + j]);
        out[j] += static_cast<T>(s);
    }
}

// ---------------------------------------------------------------- gelu

// exact erf form; derivative 0.5(1+erf(x/sqrt2)) + x * pdf(x)
template <typename T>
void gelu_fwd(T* y, const T* x, int64_t n, int nt) {
#pragma omp parallel for num_threads(nt) if (nt > 1) schedule(static)
    for (int64_t i = 0; i < n; ++i) {
        double v = static_cast<double>(x[i]);
        y[i] = static_cast<T>(0.5 * v * (1.0 + std::erf(v * 0.7071067811865475)));
    }
}

template <typename T>
void gelu_bwd(T* dx, const T* g, const T* x, int64_t n, int nt) {
    constexpr double inv_sqrt2 = 0.7071067811865475;
    constexpr double inv_sqrt2pi = 0.3989422804014327;
#pragma omp parallel for num_threads(nt) if (nt > 1) schedule(static)
    for (int64_t i = 0; i < n; ++i) {
        double v = static_cast<double>(x[i]);
        double cdf = 0.5 * (1.0 + std::erf(v * inv_sqrt2));
        double pdf = inv_sqrt2pi * std::exp(-0.5 * v * v);
        dx[i] += static_cast<T>(g[i] * static_cast<T>(cdf + v * pdf));
    }
}

// ------------------------------------------------------------- softmax

// row-wise softmax with max subtraction; denominator accumulated in double
template <typename T>
void softmax_rows(T* y, const T* x, int64_t rows, int64_t n, int nt) {
#pragma omp parallel for num_threads(nt) if (nt > 1) schedule(static)
    for (int64_t i = 0; i < rows; ++i) {
        const T* xr = x + i * n;
        T* yr = y + i * n;
        T mx = xr[0];
        for (int64_t j = 1; j < n; ++j) mx = xr[j] > mx ? xr[j] : mx;
        double denom = 0.0;
        for (int64_t j = 0; j < n; ++j) {
            double e = std::exp(static_cast<double>(xr[j] - mx));
            yr[j] = static_cast<T>(e);
            denom += e;
        }
        T inv = static_cast<T>(1.0 / denom);
        for (int64_t j = 0; j < n; ++j) yr[j] *= inv;
    }
}

// dx += p .* (g - rowdot(g, p)), the softmax Jacobian action
template <typename T>
void softmax_rows_bwd(T* dx, const T* g, const T* p, int64_t rows, int64_t n, int nt) {
#pragma omp parallel for num_threads(nt) if (nt > 1) schedule(static)
    for (int64_t i = 0; i < rows; ++i) {
        const T* gr = g + i * n;
        const T* pr = p + i * n;
        T* dr = dx + i * n;
        double dot = 0.0;
        for (int64_t j = 0; j < n; ++j) dot += static_cast<double>(gr[j]) * pr[j];
        T d = static_cast<T>(dot);
        for (int64_t j = 0; j < n; ++j) dr[j] += pr[j] * (gr[j] - d);
    }
}

// ----------------------------------------------------------- layernorm

// per-row y = (x - mean)/sqrt(var + eps) * gain + bias; moments in double
template <typename T>
void layernorm_fwd(T* y, T* inv_std, T* xhat, const T* x, const T* gain, const T* bias,
                   int64_t rows, int64_t n, double eps, int nt) {
#pragma omp parallel for num_threads(nt) if (nt > 1) schedule(static)
    for (int64_t i = 0; i < rows; ++i) {
        const T* xr = x + i * n;
        double mean = 0.0;
        for (int64_t j = 0; j < n; ++j) mean += static_cast<double>(xr[j]);
        mean /= static_cast<double>(n);
        double var = 0.0;
        for (int64_t j = 0; j < n; ++j) {
            double d = static_cast<double>(xr[j]) - mean;
            var += d * d;
        }
        var /= static_cast<double>(n);
        double is = 1.0 / std::sqrt(var + eps);
        inv_std[i] = static_cast<T>(is);
        T* yr = y + i * n;
        T* hr = xhat + i * n;
        for (int64_t j = 0; j < n; ++j) {
            T h = static_cast<T>((static_cast<double>(xr[j]) - mean) * is);
            hr[j] = h;
            yr[j] = h * gain[j] + bias[j];
        }
    }
}

template <typename T>
void layernorm_bwd(T* dx, T* dgain, T* dbias, const T* g, const T* xhat, const T* inv_std,
                   const T* gain, int64_t rows, int64_t n, int nt) {
#pragma omp parallel for num_threads(nt) if (nt > 1) schedule(static)
    for (int64_t i = 0; i < rows; ++i) {
        const T* gr = g + i * n;
        const T* hr = xhat + i * n;
        T* dr = dx + i * n;
        double sum_gh = 0.0, sum_g = 0.0;
        for (int64_t j = 0; j < n; ++j) {
            double gg = static_cast<double>(gr[j]) * gain[j];
            sum_g += gg;
            sum_gh += gg * hr[j];
        }
        double inv_n = 1.0 / static_cast<double>(n);
        double is = static_cast<double>(inv_std[i]);
        for (int64_t j = 0; j < n; ++j) {
            double gg = static_cast<double>(gr[j]) * gain[j];
            dr[j] += static_cast<T>(is * (gg - inv_n * sum_g - hr[j] * inv_n * sum_gh));
        }
    }
    // parameter grads: per-column reduction over rows, parallel over columns
#pragma omp parallel for num_threads(nt) if (nt > 1) schedule(static)
    for (int64_t j = 0; j < n; ++j) {
        double sg = 0.0, sb = 0.0;
        for (int64_t i = 0; i < rows; ++i) {
            sg += static_cast<double>(g[i * n + j]) * xhat[i * n + j];
            sb += static_cast<double>(g[i * n + j]);
        }
        dgain[j] += static_cast<T>(sg);
        dbias[j] += static_cast<T>(sb);
    }
}

// ------------------------------------------------------ sphere project

// per-row y = x / (||x|| + eps)
template <typename T>
void sphere_fwd(T* y, T* norms, const T* x, int64_t rows, int64_t n, double eps, int nt) {
#pragma omp parallel for num_threads(nt) if (nt > 1) schedule(static)
    for (int64_t i = 0; i < rows; ++i) {
        const T* xr = x + i * n;
        double ss = 0.0;
        for (int64_t j = 0; j < n; ++j) ss += static_cast<double>(xr[j]) * xr[j];
        double nrm = std::sqrt(ss);
        norms[i] = static_cast<T>(nrm);
        double inv = 1.0 / (nrm + eps);
        T* yr = y + i * n;
        for (int64_t j = 0; j < n; ++j) yr[j] = static_cast<T>(xr[j] * inv);
    }
}

// exact Jacobian: dx += (g - y * (y.g) * s/(||x||)) / s with s = ||x|| + eps
template <typename T>
void sphere_bwd(T* dx, const T* g, const T* y, const T* norms, int64_t rows, int64_t n,
                double eps, int nt) {
#pragma omp parallel for num_threads(nt) if (nt > 1) schedule(static)
    for (int64_t i = 0; i < rows; ++i) {
        const T* gr = g + i * n;
        const T* yr = y + i * n;
        T* dr = dx + i * n;
        double nrm = static_cast<double>(norms[i]);
        double s = nrm + eps;
        double dot = 0.0;
        for (int64_t j = 0; j < n; ++j) dot += static_cast<double>(gr[j]) * yr[j];
        // d/dx [x/(||x||+eps)] = I/s - x x^T / (||x|| s^2); x = y * s
        double coef = (nrm > 0.0) ? dot * s / nrm : 0.0;
        for (int64_t j = 0; j < n; ++j) {
            dr[j] += static_cast<T>((static_cast<double>(gr[j]) - coef * yr[j]) / s);
        }
    }
}

// -------------------------------------------- patch window gather ops

struct PatchGeom {
    int64_t h, w, c;        // input field height, width, channels
    int64_t ph, pw;         // patch extent
    int64_t sh, sw;         // stride
    int64_t qh, qw;         // zero padding per side
    int64_t th, tw;         // token grid extents
    int64_t win() const { return ph * pw * c; }
    int64_t tokens() const { return th * tw; }
};

// cols[tokens x (ph*pw*c)] from x[(h*w) x c] pixel-major, zero padded
template <typename T>
void im2col(T* cols, const T* x, const PatchGeom& g, int nt) {
    const int64_t win = g.win();
#pragma omp parallel for num_threads(nt) if (nt > 1) schedule(static)
    for (int64_t t = 0; t < g.tokens(); ++t) {
        int64_t ty = t / g.tw, tx = t % g.tw;
        int64_t y0 = ty * g.sh - g.qh;
        int64_t x0 = tx * g.sw - g.qw;
        T* row = cols + t * win;
        for (int64_t dy = 0; dy < g.ph; ++dy) {
            int64_t y = y0 + dy;
            for (int64_t dx = 0; dx < g.pw; ++dx) {
                int64_t xx = x0 + dx;
                T* dst = row + (dy * g.pw + dx) * g.c;
                if (y < 0 || y >= g.h || xx < 0 || xx >= g.w) {
                    for (int64_t ch = 0; ch < g.c; ++ch) dst[ch] = T(0);
                } else {
                    const T* src = x + (y * g.w + xx) * g.c;
                    for (int64_t ch = 0; ch < g.c; ++ch) dst[ch] = src[ch];
                }
            }
        }
    }
}

// dx[(h*w) x c] += scatter of dcols; formulated as a gather over the
// windows covering each pixel so the result is thread-count independent
template <typename T>
void im2col_bwd(T* dx, const T* dcols, const PatchGeom& g, int nt) {
    const int64_t win = g.win();
#pragma omp parallel for num_threads(nt) if (nt > 1) schedule(static)
    for (int64_t p = 0; p < g.h * g.w; ++p) {
        int64_t y = p / g.w, x = p % g.w;
        // token rows ty with y0 <= y < y0 + ph  =>  ceil((y+qh-ph+1)/sh) <= ty <= floor((y+qh)/sh)
        int64_t ty_lo = (y + g.qh - g.ph + g.sh) >= 0 ? (y + g.qh - g.ph + g.sh) / g.sh : 0;
        if (ty_lo < 0) ty_lo = 0;
        int64_t ty_hi = (y + g.qh) / g.sh;
        if (ty_hi >= g.th) ty_hi = g.th - 1;
        int64_t tx_lo = (x + g.qw - g.pw + g.sw) >= 0 ? (x + g.qw - g.pw + g.sw) / g.sw : 0;
        if (tx_lo < 0) tx_lo = 0;
        int64_t tx_hi = (x + g.qw) / g.sw;
        if (tx_hi >= g.tw) tx_hi = g.tw - 1;
        T* dst = dx + p * g.c;
        for (int64_t ty = ty_lo; ty <= ty_hi; ++ty) {
            int64_t dy = y - (ty * g.sh - g.qh);
            if (dy < 0 || dy >= g.ph) continue;
            for (int64_t tx = tx_lo; tx <= tx_hi; ++tx) {
                int64_t dx_ = x - (tx * g.sw - g.qw);
                if (dx_ < 0 || dx_ >= g.pw) continue;
                const T* src = dcols + (ty * g.tw + tx) * win + (dy * g.pw + dx_) * g.c;
                for (int64_t ch = 0; ch < g.c; ++ch) dst[ch] += src[ch];
            }
        }
    }
}

// coverage count per interior pixel (number of windows containing it)
int32_t patch_coverage_at(const PatchGeom& g, int64_t y, int64_t x);

// x[(h*w) x c] = coverage-averaged overlap of patch rows cols[tokens x win]
template <typename T>
void col2im_avg(T* x, const T* cols, const PatchGeom& g, int nt) {
    const int64_t win = g.win();
#pragma omp parallel for num_threads(nt) if (nt > 1) schedule(static)
    for (int64_t p = 0; p < g.h * g.w; ++p) {
        int64_t y = p / g.w, xx = p % g.w;
        T* dst = x + p * g.c;
        for (int64_t ch = 0; ch < g.c; ++ch) dst[ch] = T(0);
        int32_t cov = 0;
        int64_t ty_lo = (y + g.qh - g.ph + g.sh) >= 0 ? (y + g.qh - g.ph + g.sh) / g.sh : 0;
        if (ty_lo < 0) ty_lo = 0;
        int64_t ty_hi = (y + g.qh) / g.sh;
        if (ty_hi >= g.th) ty_hi = g.th - 1;
        int64_t tx_lo = (xx + g.qw - g.pw + g.sw) >= 0 ? (xx + g.qw - g.pw + g.sw) / g.sw : 0;
        if (tx_lo < 0) tx_lo = 0;
        int64_t tx_hi = (xx + g.qw) / g.sw;
        if (tx_hi >= g.tw) tx_hi = g.tw - 1;
        for (int64_t ty = ty_lo; ty <= ty_hi; ++ty) {
            int64_t dy = y - (ty * g.sh - g.qh);
            if (dy < 0 || dy >= g.ph) continue;
            for (int64_t tx = tx_lo; tx <= tx_hi; ++tx) {
                int64_t dx_ = xx - (tx * g.sw - g.qw);
                if (dx_ < 0 || dx_ >= g.pw) continue;
                const T* src = cols + (ty * g.tw + tx) * win + (dy * g.pw + dx_) * g.c;
                for (int64_t ch = 0; ch < g.c; ++ch) dst[ch] += src[ch];
                ++cov;
            }
        }
        T inv = cov > 0 ? T(1) / static_cast<T>(cov) : T(0);
        for (int64_t ch = 0; ch < g.c; ++ch) dst[ch] *= inv;
    }
}

// dcols[tokens x win] += g/coverage gathered back out to each patch slot
template <typename T>
void col2im_avg_bwd(T* dcols, const T* gx, const PatchGeom& g, int nt) {
    const int64_t win = g.win();
#pragma omp parallel for num_threads(nt) if (nt > 1) schedule(static)
    for (int64_t t = 0; t < g.tokens(); ++t) {
        int64_t ty = t / g.tw, tx = t % g.tw;
        int64_t y0 = ty * g.sh - g.qh;
        int64_t x0 = tx * g.sw - g.qw;
        T* row = dcols + t * win;
        for (int64_t dy = 0; dy < g.ph; ++dy) {
            int64_t y = y0 + dy;
            if (y < 0 || y >= g.h) continue;
            for (int64_t dx = 0; dx < g.pw; ++dx) {
                int64_t xx = x0 + dx;
                if (xx < 0 || xx >= g.w) continue;
                int32_t cov = patch_coverage_at(g, y, xx);
                T inv = static_cast<T>(1.0 / static_cast<double>(cov));
                const T* src = gx + (y * g.w + xx) * g.c;
                T* dst = row + (dy * g.pw + dx) * g.c;
                for (int64_t ch = 0; ch < g.c; ++ch) dst[ch] += src[ch] * inv;
            }
        }
    }
}

// ---------------------------------------------------------- reductions

template <typename T>
double sum64(const T* x, int64_t n) {
    double s = 0.0;
    for (int64_t i = 0; i < n; ++i) s += static_cast<double>(x[i]);
    return s;
}

template <typename T>
double sumsq64(const T* x, int64_t n) {
    double s = 0.0;
    for (int64_t i = 0; i < n; ++i) s += static_cast<double>(x[i]) * x[i];
    return s;
}

}  // namespace wla::kern
