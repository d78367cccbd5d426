#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "lnmdet/gemm.hpp"
#include "lnmdet/tensor.hpp"
#include "lnmdet/threadpool.hpp"

namespace lnmdet {

constexpr double kBatchNormEps = 1e-5;
constexpr double kBatchNormMomentum = 0.9;

namespace detail {

template <typename T>
std::vector<T>& tls_scratch(int slot) {
    static thread_local std::vector<T> buffers[4];
    return buffers[slot];
}

inline std::int64_t conv_extent(std::int64_t in, std::int64_t k, std::int64_t stride) {
    return (in - k) / stride + 1;
}

// col layout: [C*kh*kw, oh*ow] for one sample.
template <typename T>
void im2col(const T* src, std::int64_t c_in, std::int64_t h, std::int64_t w, std::int64_t kh,
            std::int64_t kw, std::int64_t stride, std::int64_t oh, std::int64_t ow, T* col) {
    for (std::int64_t c = 0; c < c_in; ++c) {
        const T* plane = src + c * h * w;
        for (std::int64_t ki = 0; ki < kh; ++ki) {
            for (std::int64_t kj = 0; kj < kw; ++kj) {
                T* dst = col + ((c * kh + ki) * kw + kj) * oh * ow;
                for (std::int64_t i = 0; i < oh; ++i) {
                    const T* row = plane + (i * stride + ki) * w + kj;
                    for (std::int64_t j = 0; j < ow; ++j) {
                        dst[i * ow + j] = row[j * stride];
                    }
                }
            }
        }
    }
}

template <typename T>
void col2im_add(const T* col, std::int64_t c_in, std::int64_t h, std::int64_t w, std::int64_t kh,
                std::int64_t kw, std::int64_t stride, std::int64_t oh, std::int64_t ow, T* dst) {
    for (std::int64_t c = 0; c < c_in; ++c) {
        T* plane = dst + c * h * w;
        for (std::int64_t ki = 0; ki < kh; ++ki) {
            for (std::int64_t kj = 0; kj < kw; ++kj) {
                const T* src = col + ((c * kh + ki) * kw + kj) * oh * ow;
                for (std::int64_t i = 0; i < oh; ++i) {
                    T* row = plane + (i * stride + ki) * w + kj;
                    for (std::int64_t j = 0; j < ow; ++j) {
                        row[j * stride] += src[i * ow + j];
                    }
                }
            }
        }
    }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Convolution, valid padding.

template <typename T>
Tensor<T> conv2d_valid(const Tensor<T>& input, const Tensor<T>& weights, const Tensor<T>& bias,
                       std::int64_t stride) {
    require(input.rank() == 4, ErrorCategory::shape, "conv input must be 4-d, got " + input.shape_str());
    require(weights.rank() == 4, ErrorCategory::shape, "conv weights must be 4-d");
    require(stride >= 1, ErrorCategory::shape, "conv stride must be positive");
    const std::int64_t n = input.dim(0), c_in = input.dim(1), h = input.dim(2), w = input.dim(3);
    const std::int64_t f = weights.dim(0), kh = weights.dim(2), kw = weights.dim(3);
    require(weights.dim(1) == c_in, ErrorCategory::shape,
            "conv channel mismatch: input " + input.shape_str() + " vs weights " + weights.shape_str());
    require(bias.numel() == f, ErrorCategory::shape, "conv bias length must equal filter count");
    require(h >= kh && w >= kw, ErrorCategory::shape,
            "conv input " + input.shape_str() + " smaller than kernel " + weights.shape_str());

    const std::int64_t oh = detail::conv_extent(h, kh, stride);
    const std::int64_t ow = detail::conv_extent(w, kw, stride);
    const std::int64_t ckk = c_in * kh * kw;
    Tensor<T> out({n, f, oh, ow});

    ThreadPool::global().parallel_for(n, [&](std::int64_t s) {
        auto& col = detail::tls_scratch<T>(0);
        col.resize(static_cast<std::size_t>(ckk * oh * ow));
        detail::im2col(input.ptr() + s * c_in * h * w, c_in, h, w, kh, kw, stride, oh, ow, col.data());
        T* dst = out.ptr() + s * f * oh * ow;
        gemm(false, false, f, oh * ow, ckk, T(1), weights.ptr(), ckk, col.data(), oh * ow, T(0), dst,
             oh * ow);
        for (std::int64_t fi = 0; fi < f; ++fi) {
            const T b = bias.data[static_cast<std::size_t>(fi)];
            T* row = dst + fi * oh * ow;
            for (std::int64_t i = 0; i < oh * ow; ++i) row[i] += b;
        }
    });
    return out;
}

// Gradients of conv2d_valid. d_input may be skipped for leaf inputs.
template <typename T>
void conv2d_valid_backward(const Tensor<T>& input, const Tensor<T>& weights, const Tensor<T>& d_out,
                           std::int64_t stride, Tensor<T>& d_weights, Tensor<T>& d_bias,
                           Tensor<T>* d_input) {
    const std::int64_t n = input.dim(0), c_in = input.dim(1), h = input.dim(2), w = input.dim(3);
    const std::int64_t f = weights.dim(0), kh = weights.dim(2), kw = weights.dim(3);
    const std::int64_t oh = d_out.dim(2), ow = d_out.dim(3);
    const std::int64_t ckk = c_in * kh * kw;

    d_weights = Tensor<T>(weights.shape);
    d_bias = Tensor<T>({f});
    if (d_input) *d_input = Tensor<T>(input.shape);

    // Per-sample weight-gradient partials, reduced in sample order below.
    std::vector<T> dw_partial(static_cast<std::size_t>(n * f * ckk));

    ThreadPool::global().parallel_for(n, [&](std::int64_t s) {
        auto& col = detail::tls_scratch<T>(0);
        col.resize(static_cast<std::size_t>(ckk * oh * ow));
        detail::im2col(input.ptr() + s * c_in * h * w, c_in, h, w, kh, kw, stride, oh, ow, col.data());
        const T* dy = d_out.ptr() + s * f * oh * ow;
        gemm(false, true, f, ckk, oh * ow, T(1), dy, oh * ow, col.data(), oh * ow, T(0),
             dw_partial.data() + s * f * ckk, ckk);
        if (d_input) {
            auto& dcol = detail::tls_scratch<T>(1);
            dcol.resize(static_cast<std::size_t>(ckk * oh * ow));
            gemm(true, false, ckk, oh * ow, f, T(1), weights.ptr(), ckk, dy, oh * ow, T(0),
                 dcol.data(), oh * ow);
            detail::col2im_add(dcol.data(), c_in, h, w, kh, kw, stride, oh, ow,
                               d_input->ptr() + s * c_in * h * w);
        }
    });

    for (std::int64_t s = 0; s < n; ++s) {
        const T* part = dw_partial.data() + s * f * ckk;
        for (std::int64_t i = 0; i < f * ckk; ++i) d_weights.data[static_cast<std::size_t>(i)] += part[i];
    }
    for (std::int64_t s = 0; s < n; ++s) {
        for (std::int64_t fi = 0; fi < f; ++fi) {
            const T* row = d_out.ptr() + (s * f + fi) * oh * ow;
            T acc = T(0);
            for (std::int64_t i = 0; i < oh * ow; ++i) acc += row[i];
            d_bias.data[static_cast<std::size_t>(fi)] += acc;
        }
    }
}

// ---------------------------------------------------------------------------
// Batch normalization over (N, H, W) per channel.

template <typename T>
struct BatchNormCache {
    Tensor<T> mean;     // per channel, the statistics used in the forward pass
    Tensor<T> inv_std;  // 1 / sqrt(var + eps)
};

template <typename T>
Tensor<T> batch_norm_forward(const Tensor<T>& input, const Tensor<T>& gamma, const Tensor<T>& beta,
                             Tensor<T>& running_mean, Tensor<T>& running_var, bool training,
                             BatchNormCache<T>& cache) {
    const std::int64_t n = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
    require(gamma.numel() == c && beta.numel() == c, ErrorCategory::shape,
            "batch norm parameter length must equal channel count");
    const std::int64_t plane = h * w;
    const std::int64_t m = n * plane;
    Tensor<T> out(input.shape);
    cache.mean = Tensor<T>({c});
    cache.inv_std = Tensor<T>({c});

    ThreadPool::global().parallel_for(c, [&](std::int64_t ch) {
        T mean, var;
        if (training) {
            T sum = T(0);
            for (std::int64_t s = 0; s < n; ++s) {
                const T* src = input.ptr() + (s * c + ch) * plane;
                for (std::int64_t i = 0; i < plane; ++i) sum += src[i];
            }
            mean = sum / static_cast<T>(m);
            T sq = T(0);
            for (std::int64_t s = 0; s < n; ++s) {
                const T* src = input.ptr() + (s * c + ch) * plane;
                for (std::int64_t i = 0; i < plane; ++i) {
                    const T d = src[i] - mean;
                    sq += d * d;
                }
            }
            var = sq / static_cast<T>(m);
            running_mean.data[ch] = static_cast<T>(kBatchNormMomentum) * running_mean.data[ch] +
                                    static_cast<T>(1.0 - kBatchNormMomentum) * mean;
            running_var.data[ch] = static_cast<T>(kBatchNormMomentum) * running_var.data[ch] +
                                   static_cast<T>(1.0 - kBatchNormMomentum) * var;
        } else {
            mean = running_mean.data[ch];
            var = running_var.data[ch];
        }
        const T inv = T(1) / std::sqrt(var + static_cast<T>(kBatchNormEps));
        cache.mean.data[ch] = mean;
        cache.inv_std.data[ch] = inv;
        const T g = gamma.data[ch], b = beta.data[ch];
        for (std::int64_t s = 0; s < n; ++s) {
            const T* src = input.ptr() + (s * c + ch) * plane;
            T* dst = out.ptr() + (s * c + ch) * plane;
            for (std::int64_t i = 0; i < plane; ++i) dst[i] = g * (src[i] - mean) * inv + b;
        }
    });
    return out;
}

template <typename T>
void batch_norm_backward(const Tensor<T>& input, const Tensor<T>& gamma, const Tensor<T>& d_out,
                         const BatchNormCache<T>& cache, bool training, Tensor<T>& d_gamma,
                         Tensor<T>& d_beta, Tensor<T>& d_input) {
    const std::int64_t n = input.dim(0), c = input.dim(1), plane = input.dim(2) * input.dim(3);
    const std::int64_t m = n * plane;
    d_gamma = Tensor<T>({c});
    d_beta = Tensor<T>({c});
    d_input = Tensor<T>(input.shape);

    ThreadPool::global().parallel_for(c, [&](std::int64_t ch) {
        const T mean = cache.mean.data[ch];
        const T inv = cache.inv_std.data[ch];
        const T g = gamma.data[ch];
        T sum_dy = T(0), sum_dy_xhat = T(0);
        for (std::int64_t s = 0; s < n; ++s) {
            const T* x = input.ptr() + (s * c + ch) * plane;
            const T* dy = d_out.ptr() + (s * c + ch) * plane;
            for (std::int64_t i = 0; i < plane; ++i) {
                sum_dy += dy[i];
                sum_dy_xhat += dy[i] * (x[i] - mean) * inv;
            }
        }
        d_beta.data[ch] = sum_dy;
        d_gamma.data[ch] = sum_dy_xhat;
        if (training) {
            const T scale = g * inv / static_cast<T>(m);
            for (std::int64_t s = 0; s < n; ++s) {
                const T* x = input.ptr() + (s * c + ch) * plane;
                const T* dy = d_out.ptr() + (s * c + ch) * plane;
                T* dx = d_input.ptr() + (s * c + ch) * plane;
                for (std::int64_t i = 0; i < plane; ++i) {
                    const T xhat = (x[i] - mean) * inv;
                    dx[i] = scale * (static_cast<T>(m) * dy[i] - sum_dy - xhat * sum_dy_xhat);
                }
            }
        } else {
            // inference mode is a per-channel affine map
            const T scale = g * inv;
            for (std::int64_t s = 0; s < n; ++s) {
                const T* dy = d_out.ptr() + (s * c + ch) * plane;
                T* dx = d_input.ptr() + (s * c + ch) * plane;
                for (std::int64_t i = 0; i < plane; ++i) dx[i] = scale * dy[i];
            }
        }
    });
}

// ---------------------------------------------------------------------------
// ReLU.

template <typename T>
Tensor<T> relu_forward(const Tensor<T>& input) {
    Tensor<T> out;
    out.shape = input.shape;
    out.data.resize(input.data.size());
    const std::size_t total = input.data.size();
    for (std::size_t i = 0; i < total; ++i) out.data[i] = input.data[i] > T(0) ? input.data[i] : T(0);
    return out;
}

template <typename T>
Tensor<T> relu_backward(const Tensor<T>& output, const Tensor<T>& d_out) {
    Tensor<T> dx;
    dx.shape = d_out.shape;
    dx.data.resize(d_out.data.size());
    for (std::size_t i = 0; i < d_out.data.size(); ++i) {
        dx.data[i] = output.data[i] > T(0) ? d_out.data[i] : T(0);
    }
    return dx;
}

// ---------------------------------------------------------------------------
// Pooling (valid, no padding).

template <typename T>
Tensor<T> max_pool_forward(const Tensor<T>& input, std::int64_t k, std::int64_t stride,
                           std::vector<std::int32_t>& argmax) {
    const std::int64_t n = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
    require(h >= k && w >= k, ErrorCategory::shape, "max pool window larger than input");
    const std::int64_t oh = detail::conv_extent(h, k, stride);
    const std::int64_t ow = detail::conv_extent(w, k, stride);
    Tensor<T> out({n, c, oh, ow});
    argmax.resize(static_cast<std::size_t>(n * c * oh * ow));

    ThreadPool::global().parallel_for(n * c, [&](std::int64_t nc) {
        const T* plane = input.ptr() + nc * h * w;
        T* dst = out.ptr() + nc * oh * ow;
        std::int32_t* am = argmax.data() + nc * oh * ow;
        for (std::int64_t i = 0; i < oh; ++i) {
            for (std::int64_t j = 0; j < ow; ++j) {
                T best = plane[i * stride * w + j * stride];
                std::int32_t best_idx = static_cast<std::int32_t>(i * stride * w + j * stride);
                for (std::int64_t ki = 0; ki < k; ++ki) {
                    for (std::int64_t kj = 0; kj < k; ++kj) {
                        const std::int64_t idx = (i * stride + ki) * w + (j * stride + kj);
                        if (plane[idx] > best) {
                            best = plane[idx];
                            best_idx = static_cast<std::int32_t>(idx);
                        }
                    }
                }
                dst[i * ow + j] = best;
                am[i * ow + j] = best_idx;
            }
        }
    });
    return out;
}

template <typename T>
Tensor<T> max_pool_backward(const Tensor<T>& input, const Tensor<T>& d_out,
                            const std::vector<std::int32_t>& argmax) {
    const std::int64_t nc = input.dim(0) * input.dim(1);
    const std::int64_t plane = input.dim(2) * input.dim(3);
    const std::int64_t oplane = d_out.dim(2) * d_out.dim(3);
    Tensor<T> dx(input.shape);
    ThreadPool::global().parallel_for(nc, [&](std::int64_t p) {
        T* dst = dx.ptr() + p * plane;
        const T* dy = d_out.ptr() + p * oplane;
        const std::int32_t* am = argmax.data() + p * oplane;
        for (std::int64_t i = 0; i < oplane; ++i) dst[am[i]] += dy[i];
    });
    return dx;
}

template <typename T>
Tensor<T> avg_pool_forward(const Tensor<T>& input, std::int64_t k, std::int64_t stride) {
    const std::int64_t n = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
    require(h >= k && w >= k, ErrorCategory::shape, "avg pool window larger than input");
    const std::int64_t oh = detail::conv_extent(h, k, stride);
    const std::int64_t ow = detail::conv_extent(w, k, stride);
    Tensor<T> out({n, c, oh, ow});
    const T norm = T(1) / static_cast<T>(k * k);
    ThreadPool::global().parallel_for(n * c, [&](std::int64_t nc) {
        const T* plane = input.ptr() + nc * h * w;
        T* dst = out.ptr() + nc * oh * ow;
        for (std::int64_t i = 0; i < oh; ++i) {
            for (std::int64_t j = 0; j < ow; ++j) {
                T acc = T(0);
                for (std::int64_t ki = 0; ki < k; ++ki) {
                    for (std::int64_t kj = 0; kj < k; ++kj) {
                        acc += plane[(i * stride + ki) * w + (j * stride + kj)];
                    }
                }
                dst[i * ow + j] = acc * norm;
            }
        }
    });
    return out;
}

template <typename T>
Tensor<T> avg_pool_backward(const Tensor<T>& input, const Tensor<T>& d_out, std::int64_t k,
                            std::int64_t stride) {
    const std::int64_t nc = input.dim(0) * input.dim(1);
    const std::int64_t h = input.dim(2), w = input.dim(3);
    const std::int64_t oh = d_out.dim(2), ow = d_out.dim(3);
    Tensor<T> dx(input.shape);
    const T norm = T(1) / static_cast<T>(k * k);
    ThreadPool::global().parallel_for(nc, [&](std::int64_t p) {
        T* dst = dx.ptr() + p * h * w;
        const T* dy = d_out.ptr() + p * oh * ow;
        for (std::int64_t i = 0; i < oh; ++i) {
            for (std::int64_t j = 0; j < ow; ++j) {
                const T v = dy[i * ow + j] * norm;
                for (std::int64_t ki = 0; ki < k; ++ki) {
                    for (std::int64_t kj = 0; kj < k; ++kj) {
                        dst[(i * stride + ki) * w + (j * stride + kj)] += v;
                    }
                }
            }
        }
    });
    return dx;
}

// ---------------------------------------------------------------------------
// Center-crop each input symmetrically by its margin, then concatenate along
// the channel axis. The dense-block skip connections go through this.

template <typename T>
Tensor<T> crop_concat_forward(const std::vector<const Tensor<T>*>& inputs,
                              const std::vector<std::int64_t>& margins) {
    require(!inputs.empty() && inputs.size() == margins.size(), ErrorCategory::shape,
            "crop_concat inputs/margins mismatch");
    const std::int64_t n = inputs[0]->dim(0);
    const std::int64_t oh = inputs[0]->dim(2) - 2 * margins[0];
    const std::int64_t ow = inputs[0]->dim(3) - 2 * margins[0];
    std::int64_t c_total = 0;
    for (std::size_t i = 0; i < inputs.size(); ++i) {
        require(margins[i] >= 0, ErrorCategory::shape, "crop margin must be non-negative");
        require(inputs[i]->dim(0) == n, ErrorCategory::shape, "crop_concat batch mismatch");
        require(inputs[i]->dim(2) - 2 * margins[i] == oh && inputs[i]->dim(3) - 2 * margins[i] == ow,
                ErrorCategory::shape, "crop_concat extent mismatch after cropping");
        c_total += inputs[i]->dim(1);
    }
    Tensor<T> out({n, c_total, oh, ow});
    ThreadPool::global().parallel_for(n, [&](std::int64_t s) {
        std::int64_t c_off = 0;
        for (std::size_t i = 0; i < inputs.size(); ++i) {
            const Tensor<T>& src = *inputs[i];
            const std::int64_t c = src.dim(1), h = src.dim(2), w = src.dim(3), m = margins[i];
            for (std::int64_t ch = 0; ch < c; ++ch) {
                const T* sp = src.ptr() + ((s * c + ch) * h + m) * w + m;
                T* dp = out.ptr() + ((s * c_total + c_off + ch) * oh) * ow;
                for (std::int64_t r = 0; r < oh; ++r) {
                    std::copy(sp + r * w, sp + r * w + ow, dp + r * ow);
                }
            }
            c_off += c;
        }
    });
    return out;
}

// Gradients scatter back into the un-cropped extents; cropped borders get 0.
template <typename T>
std::vector<Tensor<T>> crop_concat_backward(const std::vector<const Tensor<T>*>& inputs,
                                            const std::vector<std::int64_t>& margins,
                                            const Tensor<T>& d_out) {
    const std::int64_t n = d_out.dim(0), oh = d_out.dim(2), ow = d_out.dim(3);
    std::vector<Tensor<T>> grads;
    grads.reserve(inputs.size());
    for (const auto* t : inputs) grads.emplace_back(t->shape);
    std::int64_t c_total = d_out.dim(1);
    ThreadPool::global().parallel_for(n, [&](std::int64_t s) {
        std::int64_t c_off = 0;
        for (std::size_t i = 0; i < inputs.size(); ++i) {
            Tensor<T>& g = grads[i];
            const std::int64_t c = g.dim(1), h = g.dim(2), w = g.dim(3), m = margins[i];
            for (std::int64_t ch = 0; ch < c; ++ch) {
                T* dp = g.ptr() + ((s * c + ch) * h + m) * w + m;
                const T* sp = d_out.ptr() + ((s * c_total + c_off + ch) * oh) * ow;
                for (std::int64_t r = 0; r < oh; ++r) {
                    std::copy(sp + r * ow, sp + r * ow + ow, dp + r * w);
                }
            }
            c_off += c;
        }
    });
    return grads;
}

// ---------------------------------------------------------------------------
// Channel-wise softmax.

template <typename T>
Tensor<T> softmax_forward(const Tensor<T>& input) {
    const std::int64_t n = input.dim(0), c = input.dim(1), plane = input.dim(2) * input.dim(3);
    Tensor<T> out(input.shape);
    ThreadPool::global().parallel_for(n, [&](std::int64_t s) {
        for (std::int64_t i = 0; i < plane; ++i) {
            const T* x = input.ptr() + s * c * plane + i;
            T* y = out.ptr() + s * c * plane + i;
            T mx = x[0];
            for (std::int64_t ch = 1; ch < c; ++ch) mx = std::max(mx, x[ch * plane]);
            T sum = T(0);
            for (std::int64_t ch = 0; ch < c; ++ch) {
                const T e = std::exp(x[ch * plane] - mx);
                y[ch * plane] = e;
                sum += e;
            }
            const T inv = T(1) / sum;
            for (std::int64_t ch = 0; ch < c; ++ch) y[ch * plane] *= inv;
        }
    });
    return out;
}

template <typename T>
Tensor<T> softmax_backward(const Tensor<T>& output, const Tensor<T>& d_out) {
    const std::int64_t n = output.dim(0), c = output.dim(1), plane = output.dim(2) * output.dim(3);
    Tensor<T> dx(output.shape);
    ThreadPool::global().parallel_for(n, [&](std::int64_t s) {
        for (std::int64_t i = 0; i < plane; ++i) {
            const T* y = output.ptr() + s * c * plane + i;
            const T* dy = d_out.ptr() + s * c * plane + i;
            T dot = T(0);
            for (std::int64_t ch = 0; ch < c; ++ch) dot += dy[ch * plane] * y[ch * plane];
            T* dst = dx.ptr() + s * c * plane + i;
            for (std::int64_t ch = 0; ch < c; ++ch) {
                dst[ch * plane] = y[ch * plane] * (dy[ch * plane] - dot);
            }
        }
    });
    return dx;
}

}  // namespace lnmdet
