#pragma once

#include <cmath>
#include <functional>
#include <memory>
#include <unordered_map>
#include <vector>

#include "wla/kernels.hpp"
#include "wla/tensor.hpp"

namespace wla {

// Reverse-mode tape. Nodes are created in topological order by the forward
// builders; backward() walks the tape in reverse. Values are immutable once
// created. Gradients accumulate with += so shared subgraphs (the generated
// PVUM maps, batched losses) differentiate correctly.
template <typename T>
class GraphT {
public:
    using Id = int32_t;

    struct Node {
        TensorT<T> value;
        TensorT<T> grad;
        std::function<void()> backward;
        bool requires_grad = false;
        bool grad_live = false;
    };

    GraphT() { nodes_.reserve(256); }
    GraphT(const GraphT&) = delete;
    GraphT& operator=(const GraphT&) = delete;

    const TensorT<T>& val(Id id) const { return nodes_[id].value; }
    bool needs_grad(Id id) const { return nodes_[id].requires_grad; }

    // gradient buffer, zero-initialized on first touch
    TensorT<T>& grad(Id id) {
        Node& n = nodes_[id];
        if (!n.grad_live) {
            n.grad = TensorT<T>(n.value.shape);
            n.grad_live = true;
        }
        return n.grad;
    }
    bool grad_live(Id id) const { return nodes_[id].grad_live; }

    Id leaf(TensorT<T> v, bool req = false) {
        return push(std::move(v), req, nullptr);
    }
    Id constant(TensorT<T> v) { return leaf(std::move(v), false); }

    // parameter leaf memoized by tensor address; the same parameter used
    // twice in one step shares a node and therefore accumulates gradient
    Id param(TensorT<T>* p) {
        auto it = param_ids_.find(p);
        if (it != param_ids_.end()) return it->second;
        Id id = leaf(*p, !inference_);
        param_ids_.emplace(p, id);
        return id;
    }

    // inference graphs carry no gradient bookkeeping
    void set_inference(bool on) { inference_ = on; }

    const TensorT<T>* grad_of(const TensorT<T>* p) const {
        auto it = param_ids_.find(const_cast<TensorT<T>*>(p));
        if (it == param_ids_.end()) return nullptr;
        const Node& n = nodes_[it->second];
        return n.grad_live ? &n.grad : nullptr;
    }

    // ------------------------------------------------------- arithmetic

    Id add(Id a, Id b) {
        check_same(a, b, "add");
        TensorT<T> out = val(a);
        const auto& bv = val(b);
        for (int64_t i = 0; i < out.numel(); ++i) out[i] += bv[i];
        return push(std::move(out), needs_grad(a) || needs_grad(b), [this, a, b](Id self) {
            const auto& g = grad(self);
            if (needs_grad(a)) kern::axpy(this->grad(a).data.data(), g.data.data(), T(1), g.numel(), nt());
            if (needs_grad(b)) kern::axpy(this->grad(b).data.data(), g.data.data(), T(1), g.numel(), nt());
        });
    }

    Id sub(Id a, Id b) {
        check_same(a, b, "sub");
        TensorT<T> out = val(a);
        const auto& bv = val(b);
        for (int64_t i = 0; i < out.numel(); ++i) out[i] -= bv[i];
        return push(std::move(out), needs_grad(a) || needs_grad(b), [this, a, b](Id self) {
            const auto& g = grad(self);
            if (needs_grad(a)) kern::axpy(this->grad(a).data.data(), g.data.data(), T(1), g.numel(), nt());
            if (needs_grad(b)) kern::axpy(this->grad(b).data.data(), g.data.data(), T(-1), g.numel(), nt());
        });
    }

    Id mul(Id a, Id b) {
        check_same(a, b, "mul");
        TensorT<T> out = val(a);
        const auto& bv = val(b);
        for (int64_t i = 0; i < out.numel(); ++i) out[i] *= bv[i];
        return push(std::move(out), needs_grad(a) || needs_grad(b), [this, a, b](Id self) {
            const auto& g = grad(self);
            if (needs_grad(a)) {
                auto& ga = this->grad(a);
                const auto& bv2 = val(b);
                for (int64_t i = 0; i < g.numel(); ++i) ga[i] += g[i] * bv2[i];
            }
            if (needs_grad(b)) {
                auto& gb = this->grad(b);
                const auto& av = val(a);
                for (int64_t i = 0; i < g.numel(); ++i) gb[i] += g[i] * av[i];
            }
        });
    }

    Id scale(Id a, double s) {
        TensorT<T> out = val(a);
        for (auto& v : out.data) v = static_cast<T>(v * s);
        return push(std::move(out), needs_grad(a), [this, a, s](Id self) {
            const auto& g = grad(self);
            kern::axpy(this->grad(a).data.data(), g.data.data(), static_cast<T>(s), g.numel(), nt());
        });
    }

    // --------------------------------------------------------- matmul

    Id matmul(Id a, Id b) {
        const auto& av = val(a);
        const auto& bv = val(b);
        if (av.ndim() != 2 || bv.ndim() != 2 || av.shape[1] != bv.shape[0]) {
            throw ShapeError("matmul " + av.shape_str() + " x " + bv.shape_str());
        }
        TensorT<T> out({av.shape[0], bv.shape[1]});
        kern::matmul_nn_impl(av.data.data(), bv.data.data(), out.data.data(), av.shape[0],
                             av.shape[1], bv.shape[1], false, nt());
        return push(std::move(out), needs_grad(a) || needs_grad(b), [this, a, b](Id self) {
            const auto& g = grad(self);
            const auto& av2 = val(a);
            const auto& bv2 = val(b);
            int64_t m = av2.shape[0], k = av2.shape[1], n = bv2.shape[1];
            if (needs_grad(a)) {
                kern::matmul_nt_impl(g.data.data(), bv2.data.data(), this->grad(a).data.data(),
                                     m, n, k, true, nt());
            }
            if (needs_grad(b)) {
                kern::matmul_tn_impl(av2.data.data(), g.data.data(), this->grad(b).data.data(),
                                     m, k, n, true, nt());
            }
        });
    }

    // y[L x n] = x + bias broadcast over rows
    Id add_bias(Id x, Id bias) {
        const auto& xv = val(x);
        const auto& bv = val(bias);
        if (xv.shape[1] != bv.numel()) throw ShapeError("add_bias width mismatch");
        TensorT<T> out = xv;
        kern::add_rowvec(out.data.data(), bv.data.data(), xv.shape[0], xv.shape[1], nt());
        return push(std::move(out), needs_grad(x) || needs_grad(bias), [this, x, bias](Id self) {
            const auto& g = grad(self);
            if (needs_grad(x)) kern::axpy(this->grad(x).data.data(), g.data.data(), T(1), g.numel(), nt());
            if (needs_grad(bias)) {
                kern::colsum_acc(g.data.data(), this->grad(bias).data.data(), g.shape[0],
                                 g.shape[1], nt());
            }
        });
    }

    // ------------------------------------------------- shape movement

    Id transpose2d(Id a) {
        const auto& av = val(a);
        int64_t r = av.shape[0], c = av.shape[1];
        TensorT<T> out({c, r});
        for (int64_t i = 0; i < r; ++i)
            for (int64_t j = 0; j < c; ++j) out.at2(j, i) = av.at2(i, j);
        return push(std::move(out), needs_grad(a), [this, a, r, c](Id self) {
            const auto& g = grad(self);
            auto& ga = this->grad(a);
            for (int64_t i = 0; i < r; ++i)
                for (int64_t j = 0; j < c; ++j) ga.at2(i, j) += g.at2(j, i);
        });
    }

    Id reshape(Id a, std::vector<int64_t> shape) {
        TensorT<T> out(std::move(shape), val(a).data);
        return push(std::move(out), needs_grad(a), [this, a](Id self) {
            const auto& g = grad(self);
            kern::axpy(this->grad(a).data.data(), g.data.data(), T(1), g.numel(), nt());
        });
    }

    Id concat_rows(Id a, Id b) {
        const auto& av = val(a);
        const auto& bv = val(b);
        if (av.shape[1] != bv.shape[1]) throw ShapeError("concat_rows width mismatch");
        TensorT<T> out({av.shape[0] + bv.shape[0], av.shape[1]});
        std::copy(av.data.begin(), av.data.end(), out.data.begin());
        std::copy(bv.data.begin(), bv.data.end(), out.data.begin() + av.numel());
        return push(std::move(out), needs_grad(a) || needs_grad(b), [this, a, b](Id self) {
            const auto& g = grad(self);
            int64_t na = val(a).numel();
            if (needs_grad(a)) {
                auto& ga = this->grad(a);
                for (int64_t i = 0; i < na; ++i) ga[i] += g[i];
            }
            if (needs_grad(b)) {
                auto& gb = this->grad(b);
                for (int64_t i = 0; i < gb.numel(); ++i) gb[i] += g[na + i];
            }
        });
    }

    Id slice_rows(Id a, int64_t start, int64_t count) {
        const auto& av = val(a);
        int64_t w = av.shape[1];
        TensorT<T> out({count, w});
        std::copy(av.data.begin() + start * w, av.data.begin() + (start + count) * w,
                  out.data.begin());
        return push(std::move(out), needs_grad(a), [this, a, start, w](Id self) {
            const auto& g = grad(self);
            auto& ga = this->grad(a);
            for (int64_t i = 0; i < g.numel(); ++i) ga[start * w + i] += g[i];
        });
    }

    // rows gathered from a table by integer index (metadata embeddings)
    Id gather_rows(Id table, std::vector<int64_t> idx) {
        const auto& tv = val(table);
        int64_t w = tv.shape[1];
        TensorT<T> out({static_cast<int64_t>(idx.size()), w});
        for (size_t i = 0; i < idx.size(); ++i) {
            std::copy(tv.data.begin() + idx[i] * w, tv.data.begin() + (idx[i] + 1) * w,
                      out.data.begin() + static_cast<int64_t>(i) * w);
        }
        auto ip = std::make_shared<std::vector<int64_t>>(std::move(idx));
        return push(std::move(out), needs_grad(table), [this, table, ip, w](Id self) {
            const auto& g = grad(self);
            auto& gt = this->grad(table);
            for (size_t i = 0; i < ip->size(); ++i) {
                for (int64_t j = 0; j < w; ++j) gt[(*ip)[i] * w + j] += g[static_cast<int64_t>(i) * w + j];
            }
        });
    }

    // ------------------------------------------------------ activations

    Id gelu(Id a) {
        const auto& av = val(a);
        TensorT<T> out(av.shape);
        kern::gelu_fwd(out.data.data(), av.data.data(), av.numel(), nt());
        return push(std::move(out), needs_grad(a), [this, a](Id self) {
            const auto& g = grad(self);
            const auto& av2 = val(a);
            kern::gelu_bwd(this->grad(a).data.data(), g.data.data(), av2.data.data(), g.numel(),
                           nt());
        });
    }

    Id layernorm(Id x, Id gain, Id bias, double eps = 1e-5) {
        const auto& xv = val(x);
        int64_t rows = xv.shape[0], n = xv.shape[1];
        TensorT<T> out(xv.shape);
        auto aux = std::make_shared<std::pair<TensorT<T>, TensorT<T>>>(
            TensorT<T>({rows}), TensorT<T>(xv.shape));  // inv_std, xhat
        kern::layernorm_fwd(out.data.data(), aux->first.data.data(), aux->second.data.data(),
                            xv.data.data(), val(gain).data.data(), val(bias).data.data(), rows, n,
                            eps, nt());
        bool req = needs_grad(x) || needs_grad(gain) || needs_grad(bias);
        return push(std::move(out), req, [this, x, gain, bias, aux, rows, n](Id self) {
            const auto& g = grad(self);
            kern::layernorm_bwd(this->grad(x).data.data(), this->grad(gain).data.data(),
                                this->grad(bias).data.data(), g.data.data(),
                                aux->second.data.data(), aux->first.data.data(),
                                val(gain).data.data(), rows, n, nt());
        });
    }

    // --------------------------------------------------- fused attention

    // multi-head self attention over q,k,v of shape [L x d]; windows==0
    // gives full attention, windows==w restricts attention to w x w tiles
    // of the (th x tw) token grid (tiles clipped at the grid edge).
    Id attention(Id q, Id k, Id v, int heads, int64_t th = 0, int64_t tw = 0, int64_t win = 0) {
        const auto& qv = val(q);
        int64_t L = qv.shape[0], d = qv.shape[1];
        if (d % heads != 0) throw ShapeError("attention: width not divisible by head count");
        if (win > 0 && th * tw != L) throw ShapeError("attention: token grid does not match L");
        int64_t dh = d / heads;
        double scl = 1.0 / std::sqrt(static_cast<double>(dh));

        // window partition: lists of token indices attending to each other
        auto groups = std::make_shared<std::vector<std::vector<int64_t>>>();
        if (win <= 0) {
            groups->emplace_back(L);
            auto& g0 = groups->back();
            for (int64_t i = 0; i < L; ++i) g0[i] = i;
        } else {
            for (int64_t wy = 0; wy < th; wy += win) {
                for (int64_t wx = 0; wx < tw; wx += win) {
                    std::vector<int64_t> idx;
                    for (int64_t y = wy; y < std::min(wy + win, th); ++y)
                        for (int64_t x = wx; x < std::min(wx + win, tw); ++x)
                            idx.push_back(y * tw + x);
                    groups->push_back(std::move(idx));
                }
            }
        }

        // saved softmax probabilities per (group, head)
        auto probs = std::make_shared<std::vector<TensorT<T>>>();
        probs->reserve(groups->size() * static_cast<size_t>(heads));

        TensorT<T> out({L, d});
        const auto& kv = val(k);
        const auto& vv = val(v);
        for (const auto& idx : *groups) {
            int64_t n = static_cast<int64_t>(idx.size());
            for (int h = 0; h < heads; ++h) {
                TensorT<T> qh({n, dh}), kh({n, dh}), vh({n, dh});
                gather_head(qv, idx, h, dh, qh, static_cast<T>(scl));
                gather_head(kv, idx, h, dh, kh, T(1));
                gather_head(vv, idx, h, dh, vh, T(1));
                TensorT<T> s({n, n});
                kern::matmul_nt_impl(qh.data.data(), kh.data.data(), s.data.data(), n, dh, n,
                                     false, nt());
                TensorT<T> p({n, n});
                kern::softmax_rows(p.data.data(), s.data.data(), n, n, nt());
                TensorT<T> oh({n, dh});
                kern::matmul_nn_impl(p.data.data(), vh.data.data(), oh.data.data(), n, n, dh,
                                     false, nt());
                scatter_head(out, idx, h, dh, oh);
                probs->push_back(std::move(p));
            }
        }

        bool req = needs_grad(q) || needs_grad(k) || needs_grad(v);
        return push(std::move(out), req,
                    [this, q, k, v, heads, dh, scl, groups, probs](Id self) {
            const auto& g = grad(self);
            const auto& qv2 = val(q);
            const auto& kv2 = val(k);
            const auto& vv2 = val(v);
            auto& gq = this->grad(q);
            auto& gk = this->grad(k);
            auto& gv = this->grad(v);
            size_t pi = 0;
            for (const auto& idx : *groups) {
                int64_t n = static_cast<int64_t>(idx.size());
                for (int h = 0; h < heads; ++h, ++pi) {
                    const TensorT<T>& p = (*probs)[pi];
                    TensorT<T> qh({n, dh}), kh({n, dh}), vh({n, dh}), go({n, dh});
                    gather_head(qv2, idx, h, dh, qh, static_cast<T>(scl));
                    gather_head(kv2, idx, h, dh, kh, T(1));
                    gather_head(vv2, idx, h, dh, vh, T(1));
                    gather_head(g, idx, h, dh, go, T(1));
                    // dV = P^T * gO
                    TensorT<T> dvh({n, dh});
                    kern::matmul_tn_impl(p.data.data(), go.data.data(), dvh.data.data(), n, n, dh,
                                         false, nt());
                    // dP = gO * V^T ; dS = softmax_bwd(dP)
                    TensorT<T> dp({n, n});
                    kern::matmul_nt_impl(go.data.data(), vh.data.data(), dp.data.data(), n, dh, n,
                                         false, nt());
                    TensorT<T> ds({n, n});
                    kern::softmax_rows_bwd(ds.data.data(), dp.data.data(), p.data.data(), n, n,
                                           nt());
                    // dQs = dS * K ; dK = dS^T * Qs
                    TensorT<T> dqh({n, dh}), dkh({n, dh});
                    kern::matmul_nn_impl(ds.data.data(), kh.data.data(), dqh.data.data(), n, n,
                                         dh, false, nt());
                    kern::matmul_tn_impl(ds.data.data(), qh.data.data(), dkh.data.data(), n, n,
                                         dh, false, nt());
                    scatter_head_acc(gq, idx, h, dh, dqh, static_cast<T>(scl));
                    scatter_head_acc(gk, idx, h, dh, dkh, T(1));
                    scatter_head_acc(gv, idx, h, dh, dvh, T(1));
                }
            }
        });
    }

    // ------------------------------------------------------- patch ops

    // x: [(h*w) x c] pixel-major -> cols [tokens x (ph*pw*c)]
    Id im2col(Id x, const kern::PatchGeom& geom) {
        const auto& xv = val(x);
        if (xv.shape[0] != geom.h * geom.w || xv.shape[1] != geom.c) {
            throw ShapeError("im2col input " + xv.shape_str());
        }
        TensorT<T> out({geom.tokens(), geom.win()});
        kern::im2col(out.data.data(), xv.data.data(), geom, nt());
        return push(std::move(out), needs_grad(x), [this, x, geom](Id self) {
            const auto& g = grad(self);
            kern::im2col_bwd(this->grad(x).data.data(), g.data.data(), geom, nt());
        });
    }

    // cols [tokens x (ph*pw*c)] -> x [(h*w) x c], overlaps averaged
    Id col2im_avg(Id cols, const kern::PatchGeom& geom) {
        const auto& cv = val(cols);
        if (cv.shape[0] != geom.tokens() || cv.shape[1] != geom.win()) {
            throw ShapeError("col2im input " + cv.shape_str());
        }
        TensorT<T> out({geom.h * geom.w, geom.c});
        kern::col2im_avg(out.data.data(), cv.data.data(), geom, nt());
        return push(std::move(out), needs_grad(cols), [this, cols, geom](Id self) {
            const auto& g = grad(self);
            kern::col2im_avg_bwd(this->grad(cols).data.data(), g.data.data(), geom, nt());
        });
    }

    // -------------------------------------------------- quantization ops

    // row-wise projection onto the unit sphere, y = x/(||x||+eps)
    Id sphere_project(Id x, double eps = 1e-12) {
        const auto& xv = val(x);
        int64_t rows = xv.shape[0], n = xv.shape[1];
        TensorT<T> out(xv.shape);
        auto norms = std::make_shared<TensorT<T>>(TensorT<T>({rows}));
        kern::sphere_fwd(out.data.data(), norms->data.data(), xv.data.data(), rows, n, eps, nt());
        return push(std::move(out), needs_grad(x), [this, x, norms, rows, n, eps](Id self) {
            const auto& g = grad(self);
            kern::sphere_bwd(this->grad(x).data.data(), g.data.data(), val(self).data.data(),
                             norms->data.data(), rows, n, eps, nt());
        });
    }

    // sign quantization to +-1/sqrt(nb) with straight-through gradient
    Id bsq_ste(Id x) {
        const auto& xv = val(x);
        int64_t nb = xv.shape[1];
        T q = static_cast<T>(1.0 / std::sqrt(static_cast<double>(nb)));
        TensorT<T> out(xv.shape);
        for (int64_t i = 0; i < xv.numel(); ++i) out[i] = xv[i] >= T(0) ? q : -q;
        return push(std::move(out), needs_grad(x), [this, x](Id self) {
            const auto& g = grad(self);
            kern::axpy(this->grad(x).data.data(), g.data.data(), T(1), g.numel(), nt());
        });
    }

    // ------------------------------------------------------------ losses

    // mean over all entries of row_weight * (pred-target)^2, weights are
    // per row of the [rows x c] layout (latitude weights per pixel row)
    Id weighted_mse(Id pred, Id target, const std::vector<T>& row_w) {
        check_same(pred, target, "weighted_mse");
        const auto& pv = val(pred);
        const auto& tv = val(target);
        int64_t rows = pv.shape[0], c = pv.shape[1];
        if (static_cast<int64_t>(row_w.size()) != rows) throw ShapeError("weighted_mse weights");
        double acc = 0.0;
        for (int64_t i = 0; i < rows; ++i) {
            double wr = static_cast<double>(row_w[i]);
            const T* pr = pv.data.data() + i * c;
            const T* tr = tv.data.data() + i * c;
            double s = 0.0;
            for (int64_t j = 0; j < c; ++j) {
                double d = static_cast<double>(pr[j]) - tr[j];
                s += d * d;
            }
            acc += wr * s;
        }
        double denom = static_cast<double>(rows * c);
        TensorT<T> out({1});
        out[0] = static_cast<T>(acc / denom);
        auto w = std::make_shared<std::vector<T>>(row_w);
        return push(std::move(out), needs_grad(pred) || needs_grad(target),
                    [this, pred, target, w, rows, c, denom](Id self) {
            T g0 = grad(self)[0];
            const auto& pv2 = val(pred);
            const auto& tv2 = val(target);
            bool np = needs_grad(pred), ntg = needs_grad(target);
            T* gp = np ? this->grad(pred).data.data() : nullptr;
            T* gt = ntg ? this->grad(target).data.data() : nullptr;
            for (int64_t i = 0; i < rows; ++i) {
                T coef = static_cast<T>(2.0 * static_cast<double>((*w)[i]) / denom) * g0;
                for (int64_t j = 0; j < c; ++j) {
                    T d = pv2[i * c + j] - tv2[i * c + j];
                    if (np) gp[i * c + j] += coef * d;
                    if (ntg) gt[i * c + j] -= coef * d;
                }
            }
        });
    }

    // mean binary cross entropy of logits against {0,1} targets
    Id bce_logits(Id logits, const TensorT<T>& targets01) {
        const auto& lv = val(logits);
        if (lv.shape != targets01.shape) throw ShapeError("bce shapes");
        double acc = 0.0;
        for (int64_t i = 0; i < lv.numel(); ++i) {
            double l = static_cast<double>(lv[i]);
            double y = static_cast<double>(targets01[i]);
            // max(l,0) - l*y + log(1+exp(-|l|))
            acc += std::max(l, 0.0) - l * y + std::log1p(std::exp(-std::fabs(l)));
        }
        double denom = static_cast<double>(lv.numel());
        TensorT<T> out({1});
        out[0] = static_cast<T>(acc / denom);
        auto tg = std::make_shared<TensorT<T>>(targets01);
        return push(std::move(out), needs_grad(logits), [this, logits, tg, denom](Id self) {
            T g0 = grad(self)[0];
            const auto& lv2 = val(logits);
            auto& gl = this->grad(logits);
            for (int64_t i = 0; i < lv2.numel(); ++i) {
                double sig = 1.0 / (1.0 + std::exp(-static_cast<double>(lv2[i])));
                gl[i] += g0 * static_cast<T>((sig - static_cast<double>((*tg)[i])) / denom);
            }
        });
    }

    // factorized per-bit entropy objective on pre-quantization rows u:
    //   sum_bits [ mean_rows H(sigma(alpha u)) - H(mean_rows sigma(alpha u)) ]
    // minimizing drives per-token confidence up and batch usage toward 50/50
    Id entropy_reg(Id u, double alpha) {
        const auto& uv = val(u);
        int64_t rows = uv.shape[0], nb = uv.shape[1];
        if (rows == 0) throw ShapeError("entropy_reg: empty batch");
        auto p = std::make_shared<TensorT<double>>(TensorT<double>({rows, nb}));
        std::vector<double> pbar(nb, 0.0);
        double token_term = 0.0;
        for (int64_t i = 0; i < rows; ++i) {
            for (int64_t j = 0; j < nb; ++j) {
                double pij = 1.0 / (1.0 + std::exp(-alpha * static_cast<double>(uv[i * nb + j])));
                (*p)[i * nb + j] = pij;
                pbar[j] += pij;
                token_term += bit_entropy(pij);
            }
        }
        token_term /= static_cast<double>(rows);
        double batch_term = 0.0;
        for (int64_t j = 0; j < nb; ++j) {
            pbar[j] /= static_cast<double>(rows);
            batch_term += bit_entropy(pbar[j]);
        }
        TensorT<T> out({1});
        out[0] = static_cast<T>(token_term - batch_term);
        auto pb = std::make_shared<std::vector<double>>(std::move(pbar));
        return push(std::move(out), needs_grad(u), [this, u, p, pb, alpha, rows, nb](Id self) {
            double g0 = static_cast<double>(grad(self)[0]);
            auto& gu = this->grad(u);
            for (int64_t i = 0; i < rows; ++i) {
                for (int64_t j = 0; j < nb; ++j) {
                    double pij = (*p)[i * nb + j];
                    double dp = pij * (1.0 - pij) * alpha;  // dp/du
                    double d_token = dH(pij) / static_cast<double>(rows);
                    double d_batch = dH((*pb)[j]) / static_cast<double>(rows);
                    gu[i * nb + j] += static_cast<T>(g0 * (d_token - d_batch) * dp);
                }
            }
        });
    }

    Id mean_all(Id x) {
        const auto& xv = val(x);
        TensorT<T> out({1});
        out[0] = static_cast<T>(kern::sum64(xv.data.data(), xv.numel()) /
                                static_cast<double>(xv.numel()));
        return push(std::move(out), needs_grad(x), [this, x](Id self) {
            T g0 = grad(self)[0];
            auto& gx = this->grad(x);
            T c = g0 / static_cast<T>(gx.numel());
            for (int64_t i = 0; i < gx.numel(); ++i) gx[i] += c;
        });
    }

    // ----------------------------------------------------------- driver

    void backward(Id root) {
        const auto& rv = val(root);
        if (rv.numel() != 1) throw ShapeError("backward root must be scalar");
        grad(root)[0] = T(1);
        for (Id id = static_cast<Id>(nodes_.size()) - 1; id >= 0; --id) {
            Node& n = nodes_[id];
            if (n.requires_grad && n.grad_live && n.backward) n.backward();
        }
    }

    void check_finite(Id id, const char* what) const {
        if (!val(id).all_finite()) throw NumericError(std::string(what) + ": non-finite values");
    }

    size_t size() const { return nodes_.size(); }

private:
    static double bit_entropy(double p) {
        double h = 0.0;
        if (p > 0.0) h -= p * std::log(p);
        if (p < 1.0) h -= (1.0 - p) * std::log(1.0 - p);
        return h;
    }
    static double dH(double p) {
        // derivative of -p ln p - (1-p) ln(1-p), clamped against saturation
        double q = std::min(std::max(p, 1e-12), 1.0 - 1e-12);
        return std::log((1.0 - q) / q);
    }

    static void gather_head(const TensorT<T>& x, const std::vector<int64_t>& idx, int h,
                            int64_t dh, TensorT<T>& out, T scale) {
        int64_t d = x.shape[1];
        for (size_t i = 0; i < idx.size(); ++i) {
            const T* src = x.data.data() + idx[i] * d + h * dh;
            T* dst = out.data.data() + static_cast<int64_t>(i) * dh;
            for (int64_t j = 0; j < dh; ++j) dst[j] = src[j] * scale;
        }
    }
    static void scatter_head(TensorT<T>& x, const std::vector<int64_t>& idx, int h, int64_t dh,
                             const TensorT<T>& in) {
        int64_t d = x.shape[1];
        for (size_t i = 0; i < idx.size(); ++i) {
            T* dst = x.data.data() + idx[i] * d + h * dh;
            const T* src = in.data.data() + static_cast<int64_t>(i) * dh;
            for (int64_t j = 0; j < dh; ++j) dst[j] = src[j];
        }
    }
    static void scatter_head_acc(TensorT<T>& x, const std::vector<int64_t>& idx, int h,
                                 int64_t dh, const TensorT<T>& in, T scale) {
        int64_t d = x.shape[1];
        for (size_t i = 0; i < idx.size(); ++i) {
            T* dst = x.data.data() + idx[i] * d + h * dh;
            const T* src = in.data.data() + static_cast<int64_t>(i) * dh;
            for (int64_t j = 0; j < dh; ++j) dst[j] += src[j] * scale;
        }
    }

    void check_same(Id a, Id b, const char* what) const {
        if (!val(a).same_shape(val(b))) {
            throw ShapeError(std::string(what) + ": " + val(a).shape_str() + " vs " +
                             val(b).shape_str());
        }
    }

    static int nt() { return kern::max_threads(); }

    template <typename F>
    Id push(TensorT<T> v, bool req, F&& bwd) {
        Node n;
        n.value = std::move(v);
        n.requires_grad = req;
        Id id = static_cast<Id>(nodes_.size());
        if constexpr (!std::is_same_v<std::decay_t<F>, std::nullptr_t>) {
            if (req) {
                n.backward = [this, id, f = std::forward<F>(bwd)]() { f(id); };
            }
        }
        nodes_.push_back(std::move(n));
        return id;
    }

    std::vector<Node> nodes_;
    std::unordered_map<TensorT<T>*, Id> param_ids_;
    bool inference_ = false;
};

using Graph = GraphT<float>;
using GraphD = GraphT<double>;

}  // namespace wla
