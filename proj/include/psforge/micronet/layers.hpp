#pragma once

#ifdef _OPENMP
#include <omp.h>
#endif

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "psforge/core/error.hpp"
#include "psforge/core/rng.hpp"
#include "psforge/micronet/tensor.hpp"

namespace psforge {

namespace detail {
inline int max_threads() {
#ifdef _OPENMP
    return omp_get_max_threads();
#else
    return 1;
#endif
}
inline int thread_id() {
#ifdef _OPENMP
    return omp_get_thread_num();
#else
    return 0;
#endif
}
}  // namespace detail

enum class RunMode { Train, Infer };

// Reference to one parameter tensor and its gradient accumulator.
template <typename T>
struct ParamRef {
    std::string name;
    std::vector<uint32_t> dims;
    std::vector<T>* value;
    std::vector<T>* grad;
};

// --- convolution -----------------------------------------------------------

// KxK cross-correlation, zero-padded same-size output or valid. 3x3-same and
// 1x1 run buffer-free direct kernels; other shapes go through im2col. Every
// output element accumulates its taps in one fixed (c, dr, dc) order, so
// results are independent of threading.
template <typename T>
class Conv2D {
public:
    Conv2D() = default;
    Conv2D(std::string name, int in_c, int out_c, int k, bool same)
        : name_(std::move(name)), in_c_(in_c), out_c_(out_c), k_(k), same_(same),
          w_(size_t(out_c) * in_c * k * k, T(0)), b_(out_c, T(0)),
          gw_(w_.size(), T(0)), gb_(out_c, T(0)) {}

    Batch<T> forward(Batch<T> x) {
        if (x.c != in_c_) throw DataError(name_ + ": channel mismatch");
        const int oh = same_ ? x.h : x.h - k_ + 1;
        const int ow = same_ ? x.w : x.w - k_ + 1;
        if (oh < 1 || ow < 1) throw DataError(name_ + ": input smaller than kernel");
        x_cache_ = std::move(x);
        const Batch<T>& xc = x_cache_;
        Batch<T> y(xc.n, out_c_, oh, ow);
        const int hw = oh * ow;
        const int kk = in_c_ * k_ * k_;
        const bool direct = k_ == 1 && same_;  // 1x1 conv: the input is its own im2col
        scratch_.resize(detail::max_threads());
#pragma omp parallel for schedule(static)
        for (int i = 0; i < xc.n; ++i) {
            T* ys = y.sample(i);
            for (int f = 0; f < out_c_; ++f)
                for (int p = 0; p < hw; ++p) ys[size_t(f) * hw + p] = b_[f];
            const T* cols_ptr = xc.sample(i);
            if (!direct) {
                std::vector<T>& cols = scratch_[detail::thread_id()];
                cols.resize(size_t(kk) * hw);
                im2col(xc.sample(i), xc.h, xc.w, cols.data(), oh, ow);
                cols_ptr = cols.data();
            }
            gemm_ab_serial(out_c_, hw, kk, w_.data(), cols_ptr, ys);
        }
        return y;
    }

    Batch<T> backward(const Batch<T>& dy) {
        const Batch<T>& x = x_cache_;
        const int oh = dy.h, ow = dy.w;
        const int kk = in_c_ * k_ * k_;
        const int hw = oh * ow;
        const bool direct = k_ == 1 && same_;
        // odd same-padded convs: the input gradient is itself a same conv of
        // dy with transposed, spatially flipped kernels
        const bool fused_dx = same_ && k_ % 2 == 1 && !direct;
        Batch<T> dx(x.n, x.c, x.h, x.w);

        // W^T once, so the input-gradient GEMM runs on contiguous rows
        std::vector<T> wt(w_.size());
        if (fused_dx) {
            for (int c = 0; c < in_c_; ++c)
                for (int f = 0; f < out_c_; ++f)
                    for (int t = 0; t < k_ * k_; ++t)
                        wt[(size_t(c) * out_c_ + f) * k_ * k_ + (k_ * k_ - 1 - t)] =
                            w_[(size_t(f) * in_c_ + c) * k_ * k_ + t];
        } else {
            for (int f = 0; f < out_c_; ++f)
                for (int k = 0; k < kk; ++k) wt[size_t(k) * out_c_ + f] = w_[size_t(f) * kk + k];
        }

        // fixed chunking keeps gradient sums independent of the thread count
        const int chunks = x.n < 16 ? x.n : 16;
        if (int(gw_part_.size()) != chunks) {
            gw_part_.assign(chunks, std::vector<T>(w_.size()));
            gb_part_.assign(chunks, std::vector<T>(b_.size()));
        }
        for (int ch = 0; ch < chunks; ++ch) {
            std::fill(gw_part_[ch].begin(), gw_part_[ch].end(), T(0));
            std::fill(gb_part_[ch].begin(), gb_part_[ch].end(), T(0));
        }
        scratch_.resize(detail::max_threads());
        scratch2_.resize(detail::max_threads());
        scratch3_.resize(detail::max_threads());
        scratch4_.resize(detail::max_threads());
#pragma omp parallel for schedule(static)
        for (int ch = 0; ch < chunks; ++ch) {
            const int i0 = int(size_t(x.n) * ch / chunks);
            const int i1 = int(size_t(x.n) * (ch + 1) / chunks);
            // dW runs as dW^T = cols * dy^T so every GEMM in the layer uses
            // the fast AB kernel
            std::vector<T>& dyt = scratch3_[detail::thread_id()];
            std::vector<T>& gwt = scratch4_[detail::thread_id()];
            dyt.resize(size_t(hw) * out_c_);
            for (int i = i0; i < i1; ++i) {
                const T* dys = dy.sample(i);
                for (int f = 0; f < out_c_; ++f) {
                    T s = 0;
                    for (int p = 0; p < hw; ++p) s += dys[size_t(f) * hw + p];
                    gb_part_[ch][f] += s;
                }
                for (int f = 0; f < out_c_; ++f)
                    for (int p = 0; p < hw; ++p)
                        dyt[size_t(p) * out_c_ + f] = dys[size_t(f) * hw + p];
                gwt.assign(size_t(kk) * out_c_, T(0));

                const T* cols_ptr = x.sample(i);
                if (!direct) {
                    std::vector<T>& cols = scratch_[detail::thread_id()];
                    cols.resize(size_t(kk) * hw);
                    im2col(x.sample(i), x.h, x.w, cols.data(), oh, ow);
                    cols_ptr = cols.data();
                }
                gemm_ab_serial(kk, out_c_, hw, cols_ptr, dyt.data(), gwt.data());
                for (int f = 0; f < out_c_; ++f)
                    for (int k = 0; k < kk; ++k)
                        gw_part_[ch][size_t(f) * kk + k] += gwt[size_t(k) * out_c_ + f];

                if (direct) {
                    gemm_ab_serial(kk, hw, out_c_, wt.data(), dys, dx.sample(i));
                } else if (fused_dx) {
                    std::vector<T>& dy_cols = scratch2_[detail::thread_id()];
                    dy_cols.resize(size_t(out_c_) * k_ * k_ * hw);
                    im2col_channels(dys, out_c_, oh, ow, dy_cols.data());
                    gemm_ab_serial(in_c_, hw, out_c_ * k_ * k_, wt.data(), dy_cols.data(),
                                   dx.sample(i));
                } else {
                    std::vector<T>& dcols = scratch2_[detail::thread_id()];
                    dcols.assign(size_t(kk) * hw, T(0));
                    gemm_ab_serial(kk, hw, out_c_, wt.data(), dys, dcols.data());
                    col2im(dcols.data(), dx.sample(i), x.h, x.w, oh, ow);
                }
            }
        }
        for (int ch = 0; ch < chunks; ++ch) {
            for (size_t j = 0; j < w_.size(); ++j) gw_[j] += gw_part_[ch][j];
            for (size_t j = 0; j < b_.size(); ++j) gb_[j] += gb_part_[ch][j];
        }
        return dx;
    }

    void collect_params(std::vector<ParamRef<T>>& out) {
        out.push_back({name_ + ".w", {uint32_t(out_c_), uint32_t(in_c_), uint32_t(k_), uint32_t(k_)},
                       &w_, &gw_});
        out.push_back({name_ + ".b", {uint32_t(out_c_)}, &b_, &gb_});
    }

    int out_channels() const { return out_c_; }

private:
    void im2col(const T* x, int ih, int iw, T* cols, int oh, int ow) const {
        im2col_generic(x, in_c_, ih, iw, k_, same_ ? k_ / 2 : 0, cols, oh, ow);
    }

    // same-padded im2col of a CHW plane stack
    void im2col_channels(const T* x, int channels, int ih, int iw, T* cols) const {
        im2col_generic(x, channels, ih, iw, k_, k_ / 2, cols, ih, iw);
    }

    void im2col_generic(const T* x, int channels, int ih, int iw, int k, int pad, T* cols,
                        int oh, int ow) const {
        size_t row = 0;
        for (int c = 0; c < channels; ++c) {
            const T* chan = x + size_t(c) * ih * iw;
            for (int dr = 0; dr < k; ++dr) {
                for (int dc = 0; dc < k; ++dc, ++row) {
                    T* dst = cols + row * size_t(oh) * ow;
                    // per row: prefix zeros, one contiguous copy, suffix zeros
                    const int cc0 = std::max(0, pad - dc);
                    const int cc1 = std::min(ow, iw + pad - dc);
                    for (int r = 0; r < oh; ++r, dst += ow) {
                        const int sr = r + dr - pad;
                        if (sr < 0 || sr >= ih || cc0 >= cc1) {
                            std::fill(dst, dst + ow, T(0));
                            continue;
                        }
                        std::fill(dst, dst + cc0, T(0));
                        const T* src = chan + size_t(sr) * iw + (cc0 + dc - pad);
                        std::copy(src, src + (cc1 - cc0), dst + cc0);
                        std::fill(dst + cc1, dst + ow, T(0));
                    }
                }
            }
        }
    }

    void col2im(const T* dcols, T* dx, int ih, int iw, int oh, int ow) const {
        const int pad = same_ ? k_ / 2 : 0;
        size_t row = 0;
        for (int c = 0; c < in_c_; ++c) {
            T* chan = dx + size_t(c) * ih * iw;
            for (int dr = 0; dr < k_; ++dr) {
                for (int dc = 0; dc < k_; ++dc, ++row) {
                    const T* src = dcols + row * size_t(oh) * ow;
                    for (int r = 0; r < oh; ++r) {
                        const int sr = r + dr - pad;
                        if (sr < 0 || sr >= ih) continue;
                        for (int cc = 0; cc < ow; ++cc) {
                            const int sc = cc + dc - pad;
                            if (sc < 0 || sc >= iw) continue;
                            chan[size_t(sr) * iw + sc] += src[size_t(r) * ow + cc];
                        }
                    }
                }
            }
        }
    }

    std::string name_;
    int in_c_ = 0, out_c_ = 0, k_ = 3;
    bool same_ = true;
    std::vector<T> w_, b_, gw_, gb_;
    Batch<T> x_cache_;
    std::vector<std::vector<T>> scratch_, scratch2_, scratch3_, scratch4_;  // per-thread buffers
    std::vector<std::vector<T>> gw_part_, gb_part_;    // per-chunk gradient partials
};

// --- elementwise and shape layers -------------------------------------------

template <typename T>
class ReLU {
public:
    Batch<T> forward(Batch<T> x) {
        mask_.assign(x.data.size(), 0);
        for (size_t i = 0; i < x.data.size(); ++i) {
            if (x.data[i] > T(0))
                mask_[i] = 1;
            else
                x.data[i] = T(0);
        }
        return x;
    }
    Batch<T> backward(Batch<T> dy) {
        for (size_t i = 0; i < dy.data.size(); ++i)
            if (!mask_[i]) dy.data[i] = T(0);
        return dy;
    }

private:
    std::vector<uint8_t> mask_;
};

// Inverted dropout: each unit is zeroed with probability p at train time and
// survivors are scaled by 1/(1-p); inference is a pure pass-through. One
// sequential mask stream per sample, so the mask depends only on the seed
// handed to forward().
template <typename T>
class Dropout {
public:
    explicit Dropout(double p = 0.2) : p_(p) {}

    Batch<T> forward(Batch<T> x, RunMode mode, uint64_t mask_seed) {
        if (mode == RunMode::Infer || p_ == 0.0) {
            identity_ = true;
            return x;
        }
        identity_ = false;
        const uint64_t threshold = uint64_t(p_ * double(~0ULL));
        const T scale = T(1.0 / (1.0 - p_));
        keep_scale_.assign(x.data.size(), T(0));
        const size_t per_sample = x.sample_size();
        for (int i = 0; i < x.n; ++i) {
            Rng rng(hash_combine(mask_seed, uint64_t(i)));
            const size_t base = size_t(i) * per_sample;
            for (size_t j = 0; j < per_sample; ++j) {
                if (rng.next_u64() < threshold) {
                    x.data[base + j] = T(0);
                } else {
                    keep_scale_[base + j] = scale;
                    x.data[base + j] *= scale;
                }
            }
        }
        return x;
    }

    Batch<T> backward(Batch<T> dy) {
        if (identity_) return dy;
        for (size_t i = 0; i < dy.data.size(); ++i) dy.data[i] *= keep_scale_[i];
        return dy;
    }

private:
    double p_;
    bool identity_ = true;
    std::vector<T> keep_scale_;
};

// Non-overlapping 2x2 mean pool.
template <typename T>
class AvgPool2 {
public:
    Batch<T> forward(const Batch<T>& x) {
        if (x.h % 2 || x.w % 2) throw DataError("avg_pool2: odd input size");
        in_h_ = x.h;
        in_w_ = x.w;
        Batch<T> y(x.n, x.c, x.h / 2, x.w / 2);
#pragma omp parallel for schedule(static) if (x.n >= 8)
        for (int i = 0; i < x.n; ++i) {
            const T* xs = x.sample(i);
            T* ys = y.sample(i);
            for (int c = 0; c < x.c; ++c) {
                const T* xc = xs + size_t(c) * x.h * x.w;
                T* yc = ys + size_t(c) * y.h * y.w;
                for (int r = 0; r < y.h; ++r)
                    for (int cc = 0; cc < y.w; ++cc)
                        yc[size_t(r) * y.w + cc] =
                            (xc[size_t(2 * r) * x.w + 2 * cc] + xc[size_t(2 * r) * x.w + 2 * cc + 1] +
                             xc[size_t(2 * r + 1) * x.w + 2 * cc] +
                             xc[size_t(2 * r + 1) * x.w + 2 * cc + 1]) *
                            T(0.25);
            }
        }
        return y;
    }
    Batch<T> backward(const Batch<T>& dy) {
        Batch<T> dx(dy.n, dy.c, in_h_, in_w_);
#pragma omp parallel for schedule(static) if (dy.n >= 8)
        for (int i = 0; i < dy.n; ++i) {
            const T* ds = dy.sample(i);
            T* xs = dx.sample(i);
            for (int c = 0; c < dy.c; ++c) {
                const T* dc = ds + size_t(c) * dy.h * dy.w;
                T* xc = xs + size_t(c) * in_h_ * in_w_;
                for (int r = 0; r < dy.h; ++r)
                    for (int cc = 0; cc < dy.w; ++cc) {
                        const T g = dc[size_t(r) * dy.w + cc] * T(0.25);
                        xc[size_t(2 * r) * in_w_ + 2 * cc] = g;
                        xc[size_t(2 * r) * in_w_ + 2 * cc + 1] = g;
                        xc[size_t(2 * r + 1) * in_w_ + 2 * cc] = g;
                        xc[size_t(2 * r + 1) * in_w_ + 2 * cc + 1] = g;
                    }
            }
        }
        return dx;
    }

private:
    int in_h_ = 0, in_w_ = 0;
};

// Channel concatenation and its backward split.
template <typename T>
Batch<T> concat_channels(const Batch<T>& a, const Batch<T>& b) {
    if (a.n != b.n || a.h != b.h || a.w != b.w) throw DataError("concat: shape mismatch");
    Batch<T> y(a.n, a.c + b.c, a.h, a.w);
    const size_t plane_a = a.sample_size(), plane_b = b.sample_size();
    for (int i = 0; i < a.n; ++i) {
        T* ys = y.sample(i);
        std::copy(a.sample(i), a.sample(i) + plane_a, ys);
        std::copy(b.sample(i), b.sample(i) + plane_b, ys + plane_a);
    }
    return y;
}

template <typename T>
std::pair<Batch<T>, Batch<T>> split_channels(const Batch<T>& y, int c_first) {
    Batch<T> a(y.n, c_first, y.h, y.w);
    Batch<T> b(y.n, y.c - c_first, y.h, y.w);
    const size_t plane_a = a.sample_size(), plane_b = b.sample_size();
    for (int i = 0; i < y.n; ++i) {
        const T* ys = y.sample(i);
        std::copy(ys, ys + plane_a, a.sample(i));
        std::copy(ys + plane_a, ys + plane_a + plane_b, b.sample(i));
    }
    return {std::move(a), std::move(b)};
}

// Affine map on flattened samples; the batch is handled as one GEMM so the
// weight matrix streams through memory once per batch.
template <typename T>
class Dense {
public:
    Dense() = default;
    Dense(std::string name, int in, int out)
        : name_(std::move(name)), in_(in), out_(out), w_(size_t(out) * in, T(0)), b_(out, T(0)),
          gw_(w_.size(), T(0)), gb_(out, T(0)) {}

    Batch<T> forward(Batch<T> x) {
        if (int(x.sample_size()) != in_) throw DataError(name_ + ": input size mismatch");
        x_cache_ = std::move(x);
        const Batch<T>& xc = x_cache_;
        Batch<T> y(xc.n, out_, 1, 1);
        for (int i = 0; i < xc.n; ++i)
            for (int u = 0; u < out_; ++u) y.sample(i)[u] = b_[u];
        wt_.resize(w_.size());
        for (int u = 0; u < out_; ++u)
            for (int k = 0; k < in_; ++k) wt_[size_t(k) * out_ + u] = w_[size_t(u) * in_ + k];
        gemm_ab(xc.n, out_, in_, xc.data.data(), wt_.data(), y.data.data());
        return y;
    }

    Batch<T> backward(const Batch<T>& dy) {
        const Batch<T>& x = x_cache_;
        Batch<T> dx(x.n, x.c, x.h, x.w);
        // dW += dY^T X ; db += column sums of dY ; dX = dY W
        gemm_atb(out_, in_, x.n, dy.data.data(), x.data.data(), gw_.data());
        for (int u = 0; u < out_; ++u) {
            T s = 0;
            for (int i = 0; i < x.n; ++i) s += dy.sample(i)[u];
            gb_[u] += s;
        }
        gemm_ab(x.n, in_, out_, dy.data.data(), w_.data(), dx.data.data());
        return dx;
    }

    void collect_params(std::vector<ParamRef<T>>& out) {
        out.push_back({name_ + ".w", {uint32_t(out_), uint32_t(in_)}, &w_, &gw_});
        out.push_back({name_ + ".b", {uint32_t(out_)}, &b_, &gb_});
    }

private:
    std::string name_;
    int in_ = 0, out_ = 0;
    std::vector<T> w_, b_, gw_, gb_, wt_;
    Batch<T> x_cache_;
};

// Unit-normalization of a vector. The bare operation rejects near-zero
// inputs; the network head wraps it with a deterministic fallback.
template <typename T>
inline void l2_normalize(const T* x, T* y, int dim) {
    T nrm2 = 0;
    for (int i = 0; i < dim; ++i) nrm2 += x[i] * x[i];
    const T nrm = std::sqrt(nrm2);
    if (nrm < T(1e-12)) throw NumericalError("l2norm: near-zero input vector");
    for (int i = 0; i < dim; ++i) y[i] = x[i] / nrm;
}

// dx = (I - y y^T) dy / ||x||
template <typename T>
inline void l2_normalize_backward(const T* y, T norm, const T* dy, T* dx, int dim) {
    T dot = 0;
    for (int i = 0; i < dim; ++i) dot += y[i] * dy[i];
    for (int i = 0; i < dim; ++i) dx[i] = (dy[i] - y[i] * dot) / norm;
}

}  // namespace psforge
