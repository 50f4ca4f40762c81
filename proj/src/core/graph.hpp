#pragma once

#define EIGEN_DONT_PARALLELIZE
#include <Eigen/Dense>

#include <functional>
#include <unordered_set>
#include <vector>

#include "tensor.hpp"

namespace chorus {

enum class Pad { Same, Valid };

namespace detail {

template <class S>
using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class S>
using MapM = Eigen::Map<Mat<S>>;
template <class S>
using CMapM = Eigen::Map<const Mat<S>>;

template <class S>
MapM<S> as_mat(Tensor<S>& t, long rows, long cols) {
    return MapM<S>(t.data.data(), rows, cols);
}
template <class S>
CMapM<S> as_mat(const Tensor<S>& t, long rows, long cols) {
    return CMapM<S>(t.data.data(), rows, cols);
}
template <class S>
MapM<S> grad_mat(Tensor<S>& t, long rows, long cols) {
    return MapM<S>(t.grad.data(), rows, cols);
}

inline long conv_out_len(long T, long K, long stride, Pad pad) {
    if (pad == Pad::Valid) {
        if (T < K) return 0;
        return (T - K) / stride + 1;
    }
    return (T + stride - 1) / stride; // ceil(T / stride)
}

inline long same_pad_left(long T, long K, long stride) {
    long out = (T + stride - 1) / stride;
    long total = std::max<long>(0, (out - 1) * stride + K - T);
    return total / 2;
}

// Gather conv1d input patches: rows are output steps, cols are K*Cin.
template <class S>
void im2col_1d(const Tensor<S>& x, long K, long stride, long pad_left,
               long t_out, Mat<S>& cols) {
    const long T = x.dims[0], C = x.dims[1];
    cols.setZero(t_out, K * C);
    for (long to = 0; to < t_out; ++to) {
        const long base = to * stride - pad_left;
        for (long k = 0; k < K; ++k) {
            const long t = base + k;
            if (t < 0 || t >= T) continue;
            for (long c = 0; c < C; ++c)
                cols(to, k * C + c) = x.data[static_cast<size_t>(t * C + c)];
        }
    }
}

// Scatter-add the column gradient back onto the input layout.
template <class S>
void col2im_1d(const Mat<S>& dcols, long K, long stride, long pad_left,
               Tensor<S>& dx_target) {
    const long T = dx_target.dims[0], C = dx_target.dims[1];
    const long t_out = dcols.rows();
    for (long to = 0; to < t_out; ++to) {
        const long base = to * stride - pad_left;
        for (long k = 0; k < K; ++k) {
            const long t = base + k;
            if (t < 0 || t >= T) continue;
            for (long c = 0; c < C; ++c)
                dx_target.grad[static_cast<size_t>(t * C + c)] += dcols(to, k * C + c);
        }
    }
}

// conv2d patches for a (F,T,C) plane with 3x3 same padding.
template <class S>
void im2col_2d(const Tensor<S>& x, Mat<S>& cols) {
    const long F = x.dims[0], T = x.dims[1], C = x.dims[2];
    cols.setZero(F * T, 9 * C);
    for (long kf = 0; kf < 3; ++kf) {
        for (long kt = 0; kt < 3; ++kt) {
            const long col0 = (kf * 3 + kt) * C;
            for (long f = 0; f < F; ++f) {
                const long sf = f + kf - 1;
                if (sf < 0 || sf >= F) continue;
                for (long t = 0; t < T; ++t) {
                    const long st = t + kt - 1;
                    if (st < 0 || st >= T) continue;
                    const S* src = x.data.data() + (sf * T + st) * C;
                    S* dst = cols.data() + (f * T + t) * (9 * C) + col0;
                    std::copy(src, src + C, dst);
                }
            }
        }
    }
}

template <class S>
void col2im_2d(const Mat<S>& dcols, Tensor<S>& dx_target) {
    const long F = dx_target.dims[0], T = dx_target.dims[1], C = dx_target.dims[2];
    for (long kf = 0; kf < 3; ++kf) {
        for (long kt = 0; kt < 3; ++kt) {
            const long col0 = (kf * 3 + kt) * C;
            for (long f = 0; f < F; ++f) {
                const long sf = f + kf - 1;
                if (sf < 0 || sf >= F) continue;
                for (long t = 0; t < T; ++t) {
                    const long st = t + kt - 1;
                    if (st < 0 || st >= T) continue;
                    S* dst = dx_target.grad.data() + (sf * T + st) * C;
                    const S* src = dcols.data() + (f * T + t) * (9 * C) + col0;
                    for (long c = 0; c < C; ++c) dst[c] += src[c];
                }
            }
        }
    }
}

} // namespace detail

// Reverse-mode tape. One forward recording, one backward pass; independent
// graphs may live on different threads but a single graph is not shared.
template <class S>
class Graph {
public:
    explicit Graph(bool record = true) : record_(record) {}

    Graph(const Graph&) = delete;
    Graph& operator=(const Graph&) = delete;

    // --- binary/elementwise ---

    TensorPtr<S> matmul(const TensorPtr<S>& a, const TensorPtr<S>& b) {
        require(a->rank() == 2 && b->rank() == 2 && a->dim(1) == b->dim(0),
                "matmul", *a, *b);
        const long m = a->dim(0), k = a->dim(1), n = b->dim(1);
        auto out = fresh({m, n}, a, b);
        detail::as_mat(*out, m, n).noalias() =
            detail::as_mat(*a, m, k) * detail::as_mat(*b, k, n);
        if (recording(out)) {
            tape_.push_back([a, b, out, m, k, n] {
                if (out->grad.empty()) return;
                auto dy = detail::grad_mat(*out, m, n);
                if (a->requires_grad) {
                    a->ensure_grad();
                    detail::grad_mat(*a, m, k).noalias() +=
                        dy * detail::as_mat(*b, k, n).transpose();
                }
                if (b->requires_grad) {
                    b->ensure_grad();
                    detail::grad_mat(*b, k, n).noalias() +=
                        detail::as_mat(*a, m, k).transpose() * dy;
                }
            });
        }
        return out;
    }

    TensorPtr<S> transpose(const TensorPtr<S>& a) {
        require(a->rank() == 2, "transpose", *a);
        const long m = a->dim(0), n = a->dim(1);
        auto out = fresh({n, m}, a);
        detail::as_mat(*out, n, m) = detail::as_mat(*a, m, n).transpose();
        if (recording(out)) {
            tape_.push_back([a, out, m, n] {
                if (out->grad.empty() || !a->requires_grad) return;
                a->ensure_grad();
                detail::grad_mat(*a, m, n) +=
                    detail::grad_mat(*out, n, m).transpose();
            });
        }
        return out;
    }

    TensorPtr<S> scale(const TensorPtr<S>& a, double c) {
        auto out = fresh(a->dims, a);
        const S cs = static_cast<S>(c);
        for (size_t i = 0; i < a->data.size(); ++i) out->data[i] = a->data[i] * cs;
        if (recording(out)) {
            tape_.push_back([a, out, cs] {
                if (out->grad.empty() || !a->requires_grad) return;
                a->ensure_grad();
                for (size_t i = 0; i < a->grad.size(); ++i)
                    a->grad[i] += out->grad[i] * cs;
            });
        }
        return out;
    }

    TensorPtr<S> add(const TensorPtr<S>& a, const TensorPtr<S>& b) {
        require(a->dims == b->dims, "add", *a, *b);
        auto out = fresh(a->dims, a, b);
        for (size_t i = 0; i < a->data.size(); ++i)
            out->data[i] = a->data[i] + b->data[i];
        if (recording(out)) {
            tape_.push_back([a, b, out] {
                if (out->grad.empty()) return;
                for (auto& t : {a, b}) {
                    if (!t->requires_grad) continue;
                    t->ensure_grad();
                    for (size_t i = 0; i < t->grad.size(); ++i)
                        t->grad[i] += out->grad[i];
                }
            });
        }
        return out;
    }

    // The only broadcast in the op set: bias over the trailing channel axis.
    TensorPtr<S> add_bias(const TensorPtr<S>& x, const TensorPtr<S>& b) {
        require(x->rank() >= 1 && b->rank() == 1 &&
                    x->dims.back() == b->dim(0),
                "add_bias", *x, *b);
        const long C = b->dim(0);
        const long rows = x->size() / C;
        auto out = fresh(x->dims, x, b);
        detail::as_mat(*out, rows, C) =
            detail::as_mat(*x, rows, C).rowwise() +
            detail::as_mat(*b, 1, C).row(0);
        if (recording(out)) {
            tape_.push_back([x, b, out, rows, C] {
                if (out->grad.empty()) return;
                auto dy = detail::grad_mat(*out, rows, C);
                if (x->requires_grad) {
                    x->ensure_grad();
                    detail::grad_mat(*x, rows, C) += dy;
                }
                if (b->requires_grad) {
                    b->ensure_grad();
                    detail::grad_mat(*b, 1, C).row(0) += dy.colwise().sum();
                }
            });
        }
        return out;
    }

    TensorPtr<S> mul(const TensorPtr<S>& a, const TensorPtr<S>& b) {
        require(a->dims == b->dims, "mul", *a, *b);
        auto out = fresh(a->dims, a, b);
        for (size_t i = 0; i < a->data.size(); ++i)
            out->data[i] = a->data[i] * b->data[i];
        if (recording(out)) {
            tape_.push_back([a, b, out] {
                if (out->grad.empty()) return;
                if (a->requires_grad) {
                    a->ensure_grad();
                    for (size_t i = 0; i < a->grad.size(); ++i)
                        a->grad[i] += out->grad[i] * b->data[i];
                }
                if (b->requires_grad) {
                    b->ensure_grad();
                    for (size_t i = 0; i < b->grad.size(); ++i)
                        b->grad[i] += out->grad[i] * a->data[i];
                }
            });
        }
        return out;
    }

    TensorPtr<S> relu(const TensorPtr<S>& a) {
        auto out = fresh(a->dims, a);
        for (size_t i = 0; i < a->data.size(); ++i)
            out->data[i] = a->data[i] > S(0) ? a->data[i] : S(0);
        if (recording(out)) {
            tape_.push_back([a, out] {
                if (out->grad.empty() || !a->requires_grad) return;
                a->ensure_grad();
                for (size_t i = 0; i < a->grad.size(); ++i)
                    if (a->data[i] > S(0)) a->grad[i] += out->grad[i];
            });
        }
        return out;
    }

    TensorPtr<S> sigmoid(const TensorPtr<S>& a) {
        auto out = fresh(a->dims, a);
        for (size_t i = 0; i < a->data.size(); ++i)
            out->data[i] = S(1) / (S(1) + std::exp(-a->data[i]));
        if (recording(out)) {
            tape_.push_back([a, out] {
                if (out->grad.empty() || !a->requires_grad) return;
                a->ensure_grad();
                for (size_t i = 0; i < a->grad.size(); ++i) {
                    const S y = out->data[i];
                    a->grad[i] += out->grad[i] * y * (S(1) - y);
                }
            });
        }
        return out;
    }

    // Softmax over one axis of a 2-d tensor. axis=1 normalizes each row.
    TensorPtr<S> softmax(const TensorPtr<S>& a, int axis) {
        require(a->rank() == 2 && (axis == 0 || axis == 1), "softmax", *a);
        const long m = a->dim(0), n = a->dim(1);
        auto out = fresh(a->dims, a);
        if (axis == 1) {
            for (long i = 0; i < m; ++i)
                softmax_line(a->data.data() + i * n, out->data.data() + i * n, n, 1);
        } else {
            for (long j = 0; j < n; ++j)
                softmax_line(a->data.data() + j, out->data.data() + j, m, n);
        }
        if (recording(out)) {
            tape_.push_back([a, out, m, n, axis] {
                if (out->grad.empty() || !a->requires_grad) return;
                a->ensure_grad();
                auto line_back = [](const S* y, const S* dy, S* dx, long len, long stride) {
                    S dot = S(0);
                    for (long i = 0; i < len; ++i) dot += y[i * stride] * dy[i * stride];
                    for (long i = 0; i < len; ++i)
                        dx[i * stride] += y[i * stride] * (dy[i * stride] - dot);
                };
                if (axis == 1) {
                    for (long i = 0; i < m; ++i)
                        line_back(out->data.data() + i * n, out->grad.data() + i * n,
                                  a->grad.data() + i * n, n, 1);
                } else {
                    for (long j = 0; j < n; ++j)
                        line_back(out->data.data() + j, out->grad.data() + j,
                                  a->grad.data() + j, m, n);
                }
            });
        }
        return out;
    }

    TensorPtr<S> concat_channels(const std::vector<TensorPtr<S>>& parts) {
        if (parts.empty()) throw UsageError("concat: no inputs");
        const long T = parts[0]->dim(0);
        long total = 0;
        for (const auto& p : parts) {
            if (p->rank() != 2 || p->dim(0) != T)
                throw DimensionError("concat: row mismatch " + p->shape_str());
            total += p->dim(1);
        }
        auto out = make_output({T, total});
        bool rg = false;
        for (const auto& p : parts) rg = rg || p->requires_grad;
        out->requires_grad = record_ && rg;
        long off = 0;
        for (const auto& p : parts) {
            const long C = p->dim(1);
            detail::as_mat(*out, T, total).middleCols(off, C) =
                detail::as_mat(*p, T, C);
            off += C;
        }
        if (record_ && out->requires_grad) {
            auto ps = parts;
            tape_.push_back([ps, out, T, total] {
                if (out->grad.empty()) return;
                auto dy = detail::grad_mat(*out, T, total);
                long off = 0;
                for (const auto& p : ps) {
                    const long C = p->dim(1);
                    if (p->requires_grad) {
                        p->ensure_grad();
                        detail::grad_mat(*p, T, C) += dy.middleCols(off, C);
                    }
                    off += C;
                }
            });
        }
        return out;
    }

    // --- convolutions ---

    // x: (T, Cin), w: (K, Cin, Cout), b: (Cout) or null.
    TensorPtr<S> conv1d(const TensorPtr<S>& x, const TensorPtr<S>& w,
                        const TensorPtr<S>& b, long stride, Pad pad) {
        require(x->rank() == 2 && w->rank() == 3 && x->dim(1) == w->dim(1),
                "conv1d", *x, *w);
        if (b && (b->rank() != 1 || b->dim(0) != w->dim(2)))
            throw DimensionError("conv1d: bias shape " + b->shape_str());
        const long T = x->dim(0), Cin = x->dim(1);
        const long K = w->dim(0), Cout = w->dim(2);
        const long t_out = detail::conv_out_len(T, K, stride, pad);
        if (t_out <= 0)
            throw DimensionError("conv1d: input length " + std::to_string(T) +
                                 " shorter than kernel " + std::to_string(K));
        const long pl = pad == Pad::Same ? detail::same_pad_left(T, K, stride) : 0;

        auto cols = std::make_shared<detail::Mat<S>>();
        detail::im2col_1d(*x, K, stride, pl, t_out, *cols);
        auto out = fresh({t_out, Cout}, x, w, b);
        auto y = detail::as_mat(*out, t_out, Cout);
        y.noalias() = *cols * detail::as_mat(*w, K * Cin, Cout);
        if (b) y.rowwise() += detail::as_mat(*b, 1, Cout).row(0);

        if (recording(out)) {
            // keep the gathered patches alive for the weight gradient
            tape_.push_back([x, w, b, out, cols, stride, pl, K, Cin, Cout, t_out] {
                if (out->grad.empty()) return;
                auto dy = detail::grad_mat(*out, t_out, Cout);
                if (w->requires_grad) {
                    w->ensure_grad();
                    detail::grad_mat(*w, K * Cin, Cout).noalias() +=
                        cols->transpose() * dy;
                }
                if (b && b->requires_grad) {
                    b->ensure_grad();
                    detail::grad_mat(*b, 1, Cout).row(0) += dy.colwise().sum();
                }
                if (x->requires_grad) {
                    x->ensure_grad();
                    detail::Mat<S> dcols(t_out, K * Cin);
                    dcols.noalias() =
                        dy * detail::as_mat(*w, K * Cin, Cout).transpose();
                    detail::col2im_1d(dcols, K, stride, pl, *x);
                }
            });
        }
        return out;
    }

    // Transposed conv with stride == kernel length: exact K-fold upsampling.
    // x: (T, Cin), w: (K, Cin, Cout) -> (T*K, Cout).
    TensorPtr<S> tconv1d(const TensorPtr<S>& x, const TensorPtr<S>& w,
                         const TensorPtr<S>& b) {
        require(x->rank() == 2 && w->rank() == 3 && x->dim(1) == w->dim(1),
                "tconv1d", *x, *w);
        const long T = x->dim(0), Cin = x->dim(1);
        const long K = w->dim(0), Cout = w->dim(2);
        auto out = fresh({T * K, Cout}, x, w, b);
        auto xm = detail::as_mat(*x, T, Cin);
        for (long k = 0; k < K; ++k) {
            detail::CMapM<S> wk(w->data.data() + k * Cin * Cout, Cin, Cout);
            Eigen::Map<detail::Mat<S>, 0, Eigen::OuterStride<>> yk(
                out->data.data() + k * Cout, T, Cout,
                Eigen::OuterStride<>(K * Cout));
            yk.noalias() = xm * wk;
            if (b) yk.rowwise() += detail::as_mat(*b, 1, Cout).row(0);
        }
        if (recording(out)) {
            tape_.push_back([x, w, b, out, T, K, Cin, Cout] {
                if (out->grad.empty()) return;
                for (long k = 0; k < K; ++k) {
                    Eigen::Map<detail::Mat<S>, 0, Eigen::OuterStride<>> dyk(
                        out->grad.data() + k * Cout, T, Cout,
                        Eigen::OuterStride<>(K * Cout));
                    if (x->requires_grad) {
                        x->ensure_grad();
                        detail::CMapM<S> wk(w->data.data() + k * Cin * Cout, Cin, Cout);
                        detail::grad_mat(*x, T, Cin).noalias() += dyk * wk.transpose();
                    }
                    if (w->requires_grad) {
                        w->ensure_grad();
                        detail::MapM<S> dwk(w->grad.data() + k * Cin * Cout, Cin, Cout);
                        dwk.noalias() += detail::as_mat(*x, T, Cin).transpose() * dyk;
                    }
                    if (b && b->requires_grad) {
                        b->ensure_grad();
                        detail::grad_mat(*b, 1, Cout).row(0) += dyk.colwise().sum();
                    }
                }
            });
        }
        return out;
    }

    // x: (F, T, Cin), w: (3, 3, Cin, Cout), same padding, stride 1.
    TensorPtr<S> conv2d(const TensorPtr<S>& x, const TensorPtr<S>& w,
                        const TensorPtr<S>& b) {
        require(x->rank() == 3 && w->rank() == 4 && w->dim(0) == 3 &&
                    w->dim(1) == 3 && x->dim(2) == w->dim(2),
                "conv2d", *x, *w);
        const long F = x->dim(0), T = x->dim(1), Cin = x->dim(2);
        const long Cout = w->dim(3);
        auto cols = std::make_shared<detail::Mat<S>>();
        detail::im2col_2d(*x, *cols);
        auto out = fresh({F, T, Cout}, x, w, b);
        auto y = detail::as_mat(*out, F * T, Cout);
        y.noalias() = *cols * detail::as_mat(*w, 9 * Cin, Cout);
        if (b) y.rowwise() += detail::as_mat(*b, 1, Cout).row(0);
        if (recording(out)) {
            // keep the gathered patches alive for the weight gradient
            tape_.push_back([x, w, b, out, cols, F, T, Cin, Cout] {
                if (out->grad.empty()) return;
                auto dy = detail::grad_mat(*out, F * T, Cout);
                if (w->requires_grad) {
                    w->ensure_grad();
                    detail::grad_mat(*w, 9 * Cin, Cout).noalias() +=
                        cols->transpose() * dy;
                }
                if (b && b->requires_grad) {
                    b->ensure_grad();
                    detail::grad_mat(*b, 1, Cout).row(0) += dy.colwise().sum();
                }
                if (x->requires_grad) {
                    x->ensure_grad();
                    detail::Mat<S> dcols(F * T, 9 * Cin);
                    dcols.noalias() =
                        dy * detail::as_mat(*w, 9 * Cin, Cout).transpose();
                    detail::col2im_2d(dcols, *x);
                }
            });
        }
        return out;
    }

    // Average pooling over the frequency axis of (F, T, C).
    TensorPtr<S> avg_pool_freq(const TensorPtr<S>& x, long pool) {
        require(x->rank() == 3 && x->dim(0) % pool == 0, "avg_pool", *x);
        const long F = x->dim(0), T = x->dim(1), C = x->dim(2);
        const long Fo = F / pool;
        auto out = fresh({Fo, T, C}, x);
        const long plane = T * C;
        const S inv = S(1) / static_cast<S>(pool);
        for (long fo = 0; fo < Fo; ++fo) {
            Eigen::Map<Eigen::Array<S, Eigen::Dynamic, 1>> dst(
                out->data.data() + fo * plane, plane);
            dst.setZero();
            for (long i = 0; i < pool; ++i) {
                Eigen::Map<const Eigen::Array<S, Eigen::Dynamic, 1>> src(
                    x->data.data() + (fo * pool + i) * plane, plane);
                dst += src;
            }
            dst *= inv;
        }
        if (recording(out)) {
            tape_.push_back([x, out, Fo, plane, pool, inv] {
                if (out->grad.empty() || !x->requires_grad) return;
                x->ensure_grad();
                for (long fo = 0; fo < Fo; ++fo) {
                    Eigen::Map<const Eigen::Array<S, Eigen::Dynamic, 1>> dy(
                        out->grad.data() + fo * plane, plane);
                    for (long i = 0; i < pool; ++i) {
                        Eigen::Map<Eigen::Array<S, Eigen::Dynamic, 1>> dx(
                            x->grad.data() + (fo * pool + i) * plane, plane);
                        dx += dy * inv;
                    }
                }
            });
        }
        return out;
    }

    // (F, T, C) -> (T, F*C): folds the remaining frequency bins into channels.
    TensorPtr<S> freq_to_channels(const TensorPtr<S>& x) {
        require(x->rank() == 3, "freq_to_channels", *x);
        const long F = x->dim(0), T = x->dim(1), C = x->dim(2);
        auto out = fresh({T, F * C}, x);
        for (long f = 0; f < F; ++f)
            for (long t = 0; t < T; ++t)
                std::copy(x->data.data() + (f * T + t) * C,
                          x->data.data() + (f * T + t + 1) * C,
                          out->data.data() + t * F * C + f * C);
        if (recording(out)) {
            tape_.push_back([x, out, F, T, C] {
                if (out->grad.empty() || !x->requires_grad) return;
                x->ensure_grad();
                for (long f = 0; f < F; ++f)
                    for (long t = 0; t < T; ++t) {
                        const S* src = out->grad.data() + t * F * C + f * C;
                        S* dst = x->grad.data() + (f * T + t) * C;
                        for (long c = 0; c < C; ++c) dst[c] += src[c];
                    }
            });
        }
        return out;
    }

    TensorPtr<S> slice_time(const TensorPtr<S>& x, long t0, long t1) {
        require(x->rank() == 2 && 0 <= t0 && t0 < t1 && t1 <= x->dim(0),
                "slice_time", *x);
        const long C = x->dim(1);
        auto out = fresh({t1 - t0, C}, x);
        std::copy(x->data.data() + t0 * C, x->data.data() + t1 * C,
                  out->data.data());
        if (recording(out)) {
            tape_.push_back([x, out, t0, C] {
                if (out->grad.empty() || !x->requires_grad) return;
                x->ensure_grad();
                for (size_t i = 0; i < out->grad.size(); ++i)
                    x->grad[static_cast<size_t>(t0 * C) + i] += out->grad[i];
            });
        }
        return out;
    }

    // Extend (T, C) to (T+extra, C) by replicating the last frame.
    TensorPtr<S> pad_replicate_time(const TensorPtr<S>& x, long extra) {
        require(x->rank() == 2 && extra >= 0, "pad_replicate_time", *x);
        const long T = x->dim(0), C = x->dim(1);
        if (extra == 0) return x;
        auto out = fresh({T + extra, C}, x);
        std::copy(x->data.begin(), x->data.end(), out->data.begin());
        for (long t = T; t < T + extra; ++t)
            std::copy(x->data.data() + (T - 1) * C, x->data.data() + T * C,
                      out->data.data() + t * C);
        if (recording(out)) {
            tape_.push_back([x, out, T, C, extra] {
                if (out->grad.empty() || !x->requires_grad) return;
                x->ensure_grad();
                for (size_t i = 0; i < static_cast<size_t>(T * C); ++i)
                    x->grad[i] += out->grad[i];
                for (long t = T; t < T + extra; ++t)
                    for (long c = 0; c < C; ++c)
                        x->grad[static_cast<size_t>((T - 1) * C + c)] +=
                            out->grad[static_cast<size_t>(t * C + c)];
            });
        }
        return out;
    }

    // --- reductions ---

    TensorPtr<S> sum(const TensorPtr<S>& a) {
        auto out = fresh({1}, a);
        S acc = S(0);
        for (S v : a->data) acc += v;
        out->data[0] = acc;
        if (recording(out)) {
            tape_.push_back([a, out] {
                if (out->grad.empty() || !a->requires_grad) return;
                a->ensure_grad();
                const S g = out->grad[0];
                for (size_t i = 0; i < a->grad.size(); ++i) a->grad[i] += g;
            });
        }
        return out;
    }

    TensorPtr<S> mse_loss(const TensorPtr<S>& pred, const TensorPtr<S>& target) {
        require(pred->dims == target->dims, "mse_loss", *pred, *target);
        const long n = pred->size();
        auto out = fresh({1}, pred, target);
        S acc = S(0);
        for (long i = 0; i < n; ++i) {
            const S d = pred->data[i] - target->data[i];
            acc += d * d;
        }
        out->data[0] = acc / static_cast<S>(n);
        if (recording(out)) {
            tape_.push_back([pred, target, out, n] {
                if (out->grad.empty()) return;
                const S g = out->grad[0] * S(2) / static_cast<S>(n);
                if (pred->requires_grad) {
                    pred->ensure_grad();
                    for (long i = 0; i < n; ++i)
                        pred->grad[i] += g * (pred->data[i] - target->data[i]);
                }
                if (target->requires_grad) {
                    target->ensure_grad();
                    for (long i = 0; i < n; ++i)
                        target->grad[i] -= g * (pred->data[i] - target->data[i]);
                }
            });
        }
        return out;
    }

    // --- backward ---

    void backward(const TensorPtr<S>& loss) {
        if (used_) throw UsageError("backward: graph already consumed");
        if (!loss->scalar()) throw UsageError("backward: loss must be scalar");
        if (!produced_.count(loss.get()))
            throw UsageError("backward: tensor was not recorded on this graph");
        if (!std::isfinite(static_cast<double>(loss->data[0])))
            throw NumericError("backward: loss is not finite");
        used_ = true;
        loss->ensure_grad();
        loss->grad[0] = S(1);
        for (auto it = tape_.rbegin(); it != tape_.rend(); ++it) (*it)();
    }

    bool recording_enabled() const { return record_; }
    size_t num_ops() const { return tape_.size(); }

private:
    bool recording(const TensorPtr<S>& out) const {
        return record_ && out->requires_grad;
    }

    TensorPtr<S> make_output(std::vector<long> dims) {
        // every op fully overwrites its output, so skip the zero fill
        auto t = std::make_shared<Tensor<S>>(std::move(dims),
                                             typename Tensor<S>::Uninit{});
        produced_.insert(t.get());
        return t;
    }

    TensorPtr<S> fresh(std::vector<long> dims, const TensorPtr<S>& a,
                       const TensorPtr<S>& b = nullptr,
                       const TensorPtr<S>& c = nullptr) {
        auto t = make_output(std::move(dims));
        bool rg = a->requires_grad || (b && b->requires_grad) || (c && c->requires_grad);
        t->requires_grad = record_ && rg;
        return t;
    }

    static void softmax_line(const S* in, S* out, long len, long stride) {
        S mx = in[0];
        for (long i = 1; i < len; ++i) mx = std::max(mx, in[i * stride]);
        // The vectorized path is reproducible only because tensor buffers are
        // 64-byte aligned: Eigen's packet peeling (and its packet-vs-scalar
        // exp split) then depends on the fixed shapes alone, not on where the
        // heap placed a buffer.
        S sum = S(0);
        if (stride == 1) {
            Eigen::Map<const Eigen::Array<S, Eigen::Dynamic, 1>> src(in, len);
            Eigen::Map<Eigen::Array<S, Eigen::Dynamic, 1>> dst(out, len);
            dst = (src - mx).exp();
            sum = dst.sum();
            dst /= sum;
        } else {
            for (long i = 0; i < len; ++i) {
                out[i * stride] = std::exp(in[i * stride] - mx);
                sum += out[i * stride];
            }
            for (long i = 0; i < len; ++i) out[i * stride] /= sum;
        }
    }

    static void require(bool ok, const char* op, const Tensor<S>& a) {
        if (!ok) throw DimensionError(std::string(op) + ": bad shape " + a.shape_str());
    }
    static void require(bool ok, const char* op, const Tensor<S>& a,
                        const Tensor<S>& b) {
        if (!ok)
            throw DimensionError(std::string(op) + ": incompatible shapes " +
                                 a.shape_str() + " and " + b.shape_str());
    }

    std::vector<std::function<void()>> tape_;
    std::unordered_set<const Tensor<S>*> produced_;
    bool record_;
    bool used_ = false;
};

} // namespace chorus
