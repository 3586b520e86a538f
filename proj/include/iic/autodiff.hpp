// Minimal reverse-mode differentiation engine and the tensor ops needed by
// the clustering and segmentation networks. Graph nodes own their value and
// (lazily allocated) gradient; backward() runs a reverse topological sweep
// from a scalar root, accumulating additively into every reachable node that
// requires gradients. The caller zeroes parameter gradients between steps.
//
// Templated on the scalar type: float for training, double for test oracles.
#pragma once

#include <Eigen/Core>

#include <cmath>
#include <functional>
#include <memory>
#include <stdexcept>
#include <unordered_set>
#include <utility>
#include <vector>

#include "iic/tensor.hpp"

namespace iic::ad {

template <typename T>
struct Node;

template <typename T>
using Var = std::shared_ptr<Node<T>>;

template <typename T>
struct Node {
    Tensor<T> value;
    Tensor<T> grad;  // same shape as value once materialized
    bool requires_grad = false;
    std::vector<Var<T>> parents;
    std::function<void(Node<T>&)> backward_op;  // reads this->grad, accumulates into parents

    explicit Node(Tensor<T> v) : value(std::move(v)) {}

    void ensure_grad() {
        if (grad.empty()) grad = Tensor<T>::zeros(value.shape());
    }
};

template <typename T>
Var<T> constant(Tensor<T> v) {
    return std::make_shared<Node<T>>(std::move(v));
}

template <typename T>
Var<T> parameter(Tensor<T> v) {
    auto n = std::make_shared<Node<T>>(std::move(v));
    n->requires_grad = true;
    return n;
}

template <typename T>
void zero_grad(const std::vector<Var<T>>& params) {
    for (const auto& p : params) {
        p->ensure_grad();
        p->grad.fill(T(0));
    }
}

namespace detail {

template <typename T>
Var<T> make_op(Tensor<T> value, std::vector<Var<T>> parents, std::function<void(Node<T>&)> bw) {
    auto n = std::make_shared<Node<T>>(std::move(value));
    for (const auto& p : parents)
        if (p->requires_grad) n->requires_grad = true;
    if (n->requires_grad) {
        n->parents = std::move(parents);
        n->backward_op = std::move(bw);
    }
    return n;
}

template <typename T>
void accumulate(Node<T>* parent, const Tensor<T>& g) {
    if (!parent->requires_grad) return;
    parent->ensure_grad();
    T* dst = parent->grad.data();
    const T* src = g.data();
    for (int64_t i = 0; i < g.numel(); ++i) dst[i] += src[i];
}

using EigenRowMajor = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename T>
using MatRM = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapRM = Eigen::Map<MatRM<T>>;
template <typename T>
using CMapRM = Eigen::Map<const MatRM<T>>;

}  // namespace detail

// Reverse topological sweep from a scalar root.
template <typename T>
void backward(const Var<T>& root) {
    if (root->value.numel() != 1) throw std::invalid_argument("backward: root must be scalar-valued");
    if (!root->requires_grad) return;

    std::vector<Node<T>*> order;
    std::unordered_set<Node<T>*> seen;
    // Iterative post-order DFS over parents.
    std::vector<std::pair<Node<T>*, size_t>> stack;
    stack.emplace_back(root.get(), 0);
    seen.insert(root.get());
    while (!stack.empty()) {
        auto& [node, idx] = stack.back();
        bool descended = false;
        while (idx < node->parents.size()) {
            Node<T>* p = node->parents[idx++].get();
            if (p->requires_grad && seen.insert(p).second) {
                stack.emplace_back(p, 0);
                descended = true;
                break;
            }
        }
        if (!descended && (stack.back().second >= stack.back().first->parents.size())) {
            order.push_back(stack.back().first);
            stack.pop_back();
        }
    }

    root->ensure_grad();
    root->grad[0] = T(1);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node<T>* n = *it;
        if (n->backward_op && !n->grad.empty()) n->backward_op(*n);
    }
}

// ---------------------------------------------------------------------------
// Elementwise and shape ops
// ---------------------------------------------------------------------------

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
    if (!a->value.same_shape(b->value)) throw std::invalid_argument("add: shape mismatch");
    Tensor<T> out = a->value;
    const T* bd = b->value.data();
    T* od = out.data();
    for (int64_t i = 0; i < out.numel(); ++i) od[i] += bd[i];
    return detail::make_op<T>(std::move(out), {a, b}, [](Node<T>& self) {
        detail::accumulate(self.parents[0].get(), self.grad);
        detail::accumulate(self.parents[1].get(), self.grad);
    });
}

template <typename T>
Var<T> scale(const Var<T>& a, T s) {
    Tensor<T> out = a->value;
    T* od = out.data();
    for (int64_t i = 0; i < out.numel(); ++i) od[i] *= s;
    return detail::make_op<T>(std::move(out), {a}, [s](Node<T>& self) {
        Tensor<T> g = self.grad;
        T* gd = g.data();
        for (int64_t i = 0; i < g.numel(); ++i) gd[i] *= s;
        detail::accumulate(self.parents[0].get(), g);
    });
}

template <typename T>
Var<T> relu(const Var<T>& a) {
    Tensor<T> out = a->value;
    T* od = out.data();
    for (int64_t i = 0; i < out.numel(); ++i) od[i] = od[i] > T(0) ? od[i] : T(0);
    return detail::make_op<T>(std::move(out), {a}, [](Node<T>& self) {
        Node<T>* p = self.parents[0].get();
        if (!p->requires_grad) return;
        p->ensure_grad();
        const T* x = p->value.data();
        const T* g = self.grad.data();
        T* dst = p->grad.data();
        for (int64_t i = 0; i < self.grad.numel(); ++i)
            if (x[i] > T(0)) dst[i] += g[i];
    });
}

// Sum of scalar nodes (multi-head loss aggregation).
template <typename T>
Var<T> add_scalars(const std::vector<Var<T>>& xs) {
    if (xs.empty()) throw std::invalid_argument("add_scalars: empty");
    T total = T(0);
    for (const auto& x : xs) {
        if (x->value.numel() != 1) throw std::invalid_argument("add_scalars: non-scalar term");
        total += x->value[0];
    }
    std::vector<Var<T>> parents = xs;
    return detail::make_op<T>(Tensor<T>::scalar(total), std::move(parents), [](Node<T>& self) {
        for (auto& p : self.parents) detail::accumulate(p.get(), self.grad);
    });
}

// ---------------------------------------------------------------------------
// Linear algebra ops
// ---------------------------------------------------------------------------

template <typename T>
Var<T> matmul(const Var<T>& a, const Var<T>& b) {
    if (a->value.rank() != 2 || b->value.rank() != 2 || a->value.dim(1) != b->value.dim(0))
        throw std::invalid_argument("matmul: dimension mismatch " + shape_str(a->value.shape()) + " x " +
                                    shape_str(b->value.shape()));
    const int64_t m = a->value.dim(0), k = a->value.dim(1), n = b->value.dim(1);
    Tensor<T> out({m, n});
    detail::CMapRM<T> A(a->value.data(), m, k), B(b->value.data(), k, n);
    detail::MapRM<T> O(out.data(), m, n);
    O.noalias() = A * B;
    return detail::make_op<T>(std::move(out), {a, b}, [m, k, n](Node<T>& self) {
        Node<T>* pa = self.parents[0].get();
        Node<T>* pb = self.parents[1].get();
        detail::CMapRM<T> G(self.grad.data(), m, n);
        detail::CMapRM<T> A(pa->value.data(), m, k), B(pb->value.data(), k, n);
        if (pa->requires_grad) {
            pa->ensure_grad();
            detail::MapRM<T> GA(pa->grad.data(), m, k);
            GA.noalias() += G * B.transpose();
        }
        if (pb->requires_grad) {
            pb->ensure_grad();
            detail::MapRM<T> GB(pb->grad.data(), k, n);
            GB.noalias() += A.transpose() * G;
        }
    });
}

// x [n x d] plus a broadcast row vector b [d].
template <typename T>
Var<T> add_rowvec(const Var<T>& x, const Var<T>& b) {
    if (x->value.rank() != 2 || b->value.rank() != 1 || x->value.dim(1) != b->value.dim(0))
        throw std::invalid_argument("add_rowvec: dimension mismatch");
    const int64_t n = x->value.dim(0), d = x->value.dim(1);
    Tensor<T> out = x->value;
    for (int64_t i = 0; i < n; ++i)
        for (int64_t j = 0; j < d; ++j) out.at(i, j) += b->value[j];
    return detail::make_op<T>(std::move(out), {x, b}, [n, d](Node<T>& self) {
        Node<T>* px = self.parents[0].get();
        Node<T>* pb = self.parents[1].get();
        detail::accumulate(px, self.grad);
        if (pb->requires_grad) {
            pb->ensure_grad();
            for (int64_t i = 0; i < n; ++i)
                for (int64_t j = 0; j < d; ++j) pb->grad[j] += self.grad.at(i, j);
        }
    });
}

template <typename T>
Var<T> dense(const Var<T>& x, const Var<T>& w, const Var<T>& b) {
    return add_rowvec(matmul(x, w), b);
}

// ---------------------------------------------------------------------------
// Softmax
// ---------------------------------------------------------------------------

// Row-wise softmax on an n x k matrix, stabilized by row-max subtraction.
template <typename T>
Var<T> softmax_rows(const Var<T>& x) {
    if (x->value.rank() != 2) throw std::invalid_argument("softmax_rows: rank-2 input required");
    const int64_t n = x->value.dim(0), k = x->value.dim(1);
    Tensor<T> out({n, k});
    for (int64_t i = 0; i < n; ++i) {
        T mx = x->value.at(i, 0);
        for (int64_t j = 1; j < k; ++j) mx = std::max(mx, x->value.at(i, j));
        T sum = T(0);
        for (int64_t j = 0; j < k; ++j) {
            T e = std::exp(x->value.at(i, j) - mx);
            out.at(i, j) = e;
            sum += e;
        }
        for (int64_t j = 0; j < k; ++j) out.at(i, j) /= sum;
    }
    return detail::make_op<T>(std::move(out), {x}, [n, k](Node<T>& self) {
        Node<T>* p = self.parents[0].get();
        if (!p->requires_grad) return;
        p->ensure_grad();
        // dx = y * (dy - rowdot(dy, y))
        for (int64_t i = 0; i < n; ++i) {
            const T* y = self.value.data() + i * k;
            const T* g = self.grad.data() + i * k;
            T* dst = p->grad.data() + i * k;
            T dot = T(0);
            for (int64_t j = 0; j < k; ++j) dot += g[j] * y[j];
            for (int64_t j = 0; j < k; ++j) dst[j] += y[j] * (g[j] - dot);
        }
    });
}

// Channel-wise softmax on an n x C x H x W label tensor.
template <typename T>
Var<T> softmax_channels(const Var<T>& x) {
    if (x->value.rank() != 4) throw std::invalid_argument("softmax_channels: rank-4 input required");
    const int64_t n = x->value.dim(0), C = x->value.dim(1), H = x->value.dim(2), W = x->value.dim(3);
    const int64_t hw = H * W;
    Tensor<T> out = x->value;
    for (int64_t i = 0; i < n; ++i) {
        T* base = out.data() + i * C * hw;
        for (int64_t p = 0; p < hw; ++p) {
            T mx = base[p];
            for (int64_t c = 1; c < C; ++c) mx = std::max(mx, base[c * hw + p]);
            T sum = T(0);
            for (int64_t c = 0; c < C; ++c) {
                T e = std::exp(base[c * hw + p] - mx);
                base[c * hw + p] = e;
                sum += e;
            }
            for (int64_t c = 0; c < C; ++c) base[c * hw + p] /= sum;
        }
    }
    return detail::make_op<T>(std::move(out), {x}, [n, C, hw](Node<T>& self) {
        Node<T>* par = self.parents[0].get();
        if (!par->requires_grad) return;
        par->ensure_grad();
        for (int64_t i = 0; i < n; ++i) {
            const T* y = self.value.data() + i * C * hw;
            const T* g = self.grad.data() + i * C * hw;
            T* dst = par->grad.data() + i * C * hw;
            for (int64_t p = 0; p < hw; ++p) {
                T dot = T(0);
                for (int64_t c = 0; c < C; ++c) dot += g[c * hw + p] * y[c * hw + p];
                for (int64_t c = 0; c < C; ++c) dst[c * hw + p] += y[c * hw + p] * (g[c * hw + p] - dot);
            }
        }
    });
}

// ---------------------------------------------------------------------------
// Convolution (im2col + GEMM); standard cross-correlation semantics
// ---------------------------------------------------------------------------

namespace detail {

inline int64_t conv_out_dim(int64_t in, int64_t kernel, int64_t stride, int64_t pad, const char* axis) {
    int64_t span = in + 2 * pad - kernel;
    if (span < 0 || span % stride != 0)
        throw std::invalid_argument(std::string("conv2d: non-integral output size along ") + axis);
    return span / stride + 1;
}

// Col has one row per (sample, output pixel), one column per (cin, kr, kc).
template <typename T>
void im2col(const Tensor<T>& x, int64_t kh, int64_t kw, int64_t stride, int64_t pad, int64_t oh, int64_t ow,
            std::vector<T>& col) {
    const int64_t n = x.dim(0), cin = x.dim(1), H = x.dim(2), W = x.dim(3);
    const int64_t ckk = cin * kh * kw;
    col.assign(static_cast<size_t>(n * oh * ow * ckk), T(0));
    for (int64_t i = 0; i < n; ++i) {
        for (int64_t r = 0; r < oh; ++r) {
            for (int64_t c = 0; c < ow; ++c) {
                T* dst = col.data() + ((i * oh + r) * ow + c) * ckk;
                const int64_t hr = r * stride - pad, wc = c * stride - pad;
                for (int64_t ci = 0; ci < cin; ++ci) {
                    for (int64_t kr = 0; kr < kh; ++kr) {
                        const int64_t sr = hr + kr;
                        if (sr < 0 || sr >= H) {
                            dst += kw;
                            continue;
                        }
                        const T* src = x.data() + ((i * cin + ci) * H + sr) * W;
                        for (int64_t kc = 0; kc < kw; ++kc) {
                            const int64_t sc = wc + kc;
                            *dst++ = (sc >= 0 && sc < W) ? src[sc] : T(0);
                        }
                    }
                }
            }
        }
    }
}

template <typename T>
void col2im_add(const std::vector<T>& col, int64_t kh, int64_t kw, int64_t stride, int64_t pad, int64_t oh,
                int64_t ow, Tensor<T>& dx) {
    const int64_t n = dx.dim(0), cin = dx.dim(1), H = dx.dim(2), W = dx.dim(3);
    const int64_t ckk = cin * kh * kw;
    for (int64_t i = 0; i < n; ++i) {
        for (int64_t r = 0; r < oh; ++r) {
            for (int64_t c = 0; c < ow; ++c) {
                const T* src = col.data() + ((i * oh + r) * ow + c) * ckk;
                const int64_t hr = r * stride - pad, wc = c * stride - pad;
                for (int64_t ci = 0; ci < cin; ++ci) {
                    for (int64_t kr = 0; kr < kh; ++kr) {
                        const int64_t sr = hr + kr;
                        if (sr < 0 || sr >= H) {
                            src += kw;
                            continue;
                        }
                        T* dst = dx.data() + ((i * cin + ci) * H + sr) * W;
                        for (int64_t kc = 0; kc < kw; ++kc) {
                            const int64_t sc = wc + kc;
                            T v = *src++;
                            if (sc >= 0 && sc < W) dst[sc] += v;
                        }
                    }
                }
            }
        }
    }
}

}  // namespace detail

// x [n,cin,H,W] * k [cout,cin,kh,kw] (+ optional bias [cout]) -> [n,cout,H',W'].
template <typename T>
Var<T> conv2d(const Var<T>& x, const Var<T>& kernel, const Var<T>& bias, int64_t stride, int64_t pad) {
    if (x->value.rank() != 4 || kernel->value.rank() != 4)
        throw std::invalid_argument("conv2d: rank-4 input and kernel required");
    if (x->value.dim(1) != kernel->value.dim(1)) throw std::invalid_argument("conv2d: channel mismatch");
    if (stride < 1 || pad < 0) throw std::invalid_argument("conv2d: bad stride/padding");
    const int64_t n = x->value.dim(0), H = x->value.dim(2), W = x->value.dim(3);
    const int64_t cout = kernel->value.dim(0), cin = kernel->value.dim(1);
    const int64_t kh = kernel->value.dim(2), kw = kernel->value.dim(3);
    const int64_t oh = detail::conv_out_dim(H, kh, stride, pad, "height");
    const int64_t ow = detail::conv_out_dim(W, kw, stride, pad, "width");
    const int64_t ckk = cin * kh * kw, rows = n * oh * ow;

    auto col = std::make_shared<std::vector<T>>();
    detail::im2col(x->value, kh, kw, stride, pad, oh, ow, *col);

    // [rows, ckk] x [ckk, cout] with the kernel viewed as [cout, ckk].
    std::vector<T> y2(static_cast<size_t>(rows * cout));
    {
        detail::CMapRM<T> C(col->data(), rows, ckk), K(kernel->value.data(), cout, ckk);
        detail::MapRM<T> Y(y2.data(), rows, cout);
        Y.noalias() = C * K.transpose();
    }
    Tensor<T> out({n, cout, oh, ow});
    const bool has_bias = bias != nullptr;
    if (has_bias && (bias->value.rank() != 1 || bias->value.dim(0) != cout))
        throw std::invalid_argument("conv2d: bias must be [cout]");
    for (int64_t i = 0; i < n; ++i)
        for (int64_t co = 0; co < cout; ++co) {
            const T b = has_bias ? bias->value[co] : T(0);
            T* dst = out.data() + ((i * cout + co) * oh) * ow;
            for (int64_t p = 0; p < oh * ow; ++p) dst[p] = y2[(i * oh * ow + p) * cout + co] + b;
        }

    std::vector<Var<T>> parents = has_bias ? std::vector<Var<T>>{x, kernel, bias} : std::vector<Var<T>>{x, kernel};
    auto bw = [col, n, cout, cin, kh, kw, oh, ow, stride, pad, ckk, rows, has_bias](Node<T>& self) {
        Node<T>* px = self.parents[0].get();
        Node<T>* pk = self.parents[1].get();
        // Regroup grad into the GEMM layout [rows, cout].
        std::vector<T> g2(static_cast<size_t>(rows * cout));
        for (int64_t i = 0; i < n; ++i)
            for (int64_t co = 0; co < cout; ++co) {
                const T* src = self.grad.data() + ((i * cout + co) * oh) * ow;
                for (int64_t p = 0; p < oh * ow; ++p) g2[(i * oh * ow + p) * cout + co] = src[p];
            }
        detail::CMapRM<T> G(g2.data(), rows, cout), C(col->data(), rows, ckk);
        if (pk->requires_grad) {
            pk->ensure_grad();
            detail::MapRM<T> GK(pk->grad.data(), cout, ckk);
            GK.noalias() += G.transpose() * C;
        }
        if (px->requires_grad) {
            px->ensure_grad();
            std::vector<T> dcol(static_cast<size_t>(rows * ckk));
            detail::MapRM<T> DC(dcol.data(), rows, ckk);
            detail::CMapRM<T> K(pk->value.data(), cout, ckk);
            DC.noalias() = G * K;
            detail::col2im_add(dcol, kh, kw, stride, pad, oh, ow, px->grad);
        }
        if (has_bias) {
            Node<T>* pb = self.parents[2].get();
            if (pb->requires_grad) {
                pb->ensure_grad();
                for (int64_t i = 0; i < n; ++i)
                    for (int64_t co = 0; co < cout; ++co) {
                        const T* src = self.grad.data() + ((i * cout + co) * oh) * ow;
                        T s = T(0);
                        for (int64_t p = 0; p < oh * ow; ++p) s += src[p];
                        pb->grad[co] += s;
                    }
            }
        }
    };
    return detail::make_op<T>(std::move(out), std::move(parents), std::move(bw));
}

// ---------------------------------------------------------------------------
// Batch normalization (NCHW, per-channel)
// ---------------------------------------------------------------------------

// Training mode normalizes by batch statistics (biased variance) and updates
// the running stats in place with the given momentum; eval mode uses the
// running stats. The variance floor is the eps inside the square root.
template <typename T>
Var<T> batchnorm_nchw(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta, Tensor<T>& running_mean,
                      Tensor<T>& running_var, bool training, double momentum, double eps) {
    if (x->value.rank() != 4) throw std::invalid_argument("batchnorm: rank-4 input required");
    const int64_t n = x->value.dim(0), C = x->value.dim(1), H = x->value.dim(2), W = x->value.dim(3);
    if (gamma->value.numel() != C || beta->value.numel() != C || running_mean.numel() != C ||
        running_var.numel() != C)
        throw std::invalid_argument("batchnorm: per-channel parameter size mismatch");
    const int64_t hw = H * W;
    const double m = static_cast<double>(n * hw);

    auto mean = std::make_shared<std::vector<double>>(C, 0.0);
    auto inv_std = std::make_shared<std::vector<double>>(C, 0.0);
    for (int64_t c = 0; c < C; ++c) {
        double mu, var;
        if (training) {
            double s = 0.0;
            for (int64_t i = 0; i < n; ++i) {
                const T* src = x->value.data() + ((i * C + c) * hw);
                for (int64_t p = 0; p < hw; ++p) s += src[p];
            }
            mu = s / m;
            double v = 0.0;
            for (int64_t i = 0; i < n; ++i) {
                const T* src = x->value.data() + ((i * C + c) * hw);
                for (int64_t p = 0; p < hw; ++p) {
                    double d = src[p] - mu;
                    v += d * d;
                }
            }
            var = v / m;
            running_mean[c] = static_cast<T>((1.0 - momentum) * running_mean[c] + momentum * mu);
            running_var[c] = static_cast<T>((1.0 - momentum) * running_var[c] + momentum * var);
        } else {
            mu = running_mean[c];
            var = running_var[c];
        }
        (*mean)[c] = mu;
        (*inv_std)[c] = 1.0 / std::sqrt(var + eps);
    }

    Tensor<T> out({n, C, H, W});
    for (int64_t i = 0; i < n; ++i)
        for (int64_t c = 0; c < C; ++c) {
            const T* src = x->value.data() + ((i * C + c) * hw);
            T* dst = out.data() + ((i * C + c) * hw);
            const T g = gamma->value[c], b = beta->value[c];
            const T mu = static_cast<T>((*mean)[c]), is = static_cast<T>((*inv_std)[c]);
            for (int64_t p = 0; p < hw; ++p) dst[p] = g * (src[p] - mu) * is + b;
        }

    auto bw = [mean, inv_std, n, C, hw, m, training](Node<T>& self) {
        Node<T>* px = self.parents[0].get();
        Node<T>* pg = self.parents[1].get();
        Node<T>* pb = self.parents[2].get();
        for (int64_t c = 0; c < C; ++c) {
            const double mu = (*mean)[c], is = (*inv_std)[c];
            const double g = pg->value[c];
            // Accumulate sums over the channel.
            double sum_dy = 0.0, sum_dy_xhat = 0.0;
            for (int64_t i = 0; i < n; ++i) {
                const T* xv = px->value.data() + ((i * C + c) * hw);
                const T* gy = self.grad.data() + ((i * C + c) * hw);
                for (int64_t p = 0; p < hw; ++p) {
                    const double xhat = (xv[p] - mu) * is;
                    sum_dy += gy[p];
                    sum_dy_xhat += gy[p] * xhat;
                }
            }
            if (pg->requires_grad) {
                pg->ensure_grad();
                pg->grad[c] += static_cast<T>(sum_dy_xhat);
            }
            if (pb->requires_grad) {
                pb->ensure_grad();
                pb->grad[c] += static_cast<T>(sum_dy);
            }
            if (px->requires_grad) {
                px->ensure_grad();
                for (int64_t i = 0; i < n; ++i) {
                    const T* xv = px->value.data() + ((i * C + c) * hw);
                    const T* gy = self.grad.data() + ((i * C + c) * hw);
                    T* dst = px->grad.data() + ((i * C + c) * hw);
                    for (int64_t p = 0; p < hw; ++p) {
                        const double xhat = (xv[p] - mu) * is;
                        double dx;
                        if (training) {
                            dx = g * is * (gy[p] - sum_dy / m - xhat * sum_dy_xhat / m);
                        } else {
                            dx = g * is * gy[p];  // running stats are constants
                        }
                        dst[p] += static_cast<T>(dx);
                    }
                }
            }
        }
    };
    return detail::make_op<T>(std::move(out), {x, gamma, beta}, std::move(bw));
}

// ---------------------------------------------------------------------------
// Pooling / reshaping
// ---------------------------------------------------------------------------

template <typename T>
Var<T> global_avg_pool(const Var<T>& x) {
    if (x->value.rank() != 4) throw std::invalid_argument("global_avg_pool: rank-4 input required");
    const int64_t n = x->value.dim(0), C = x->value.dim(1), hw = x->value.dim(2) * x->value.dim(3);
    Tensor<T> out({n, C});
    for (int64_t i = 0; i < n; ++i)
        for (int64_t c = 0; c < C; ++c) {
            const T* src = x->value.data() + (i * C + c) * hw;
            T s = T(0);
            for (int64_t p = 0; p < hw; ++p) s += src[p];
            out.at(i, c) = s / static_cast<T>(hw);
        }
    return detail::make_op<T>(std::move(out), {x}, [n, C, hw](Node<T>& self) {
        Node<T>* p = self.parents[0].get();
        if (!p->requires_grad) return;
        p->ensure_grad();
        const T inv = T(1) / static_cast<T>(hw);
        for (int64_t i = 0; i < n; ++i)
            for (int64_t c = 0; c < C; ++c) {
                const T g = self.grad.at(i, c) * inv;
                T* dst = p->grad.data() + (i * C + c) * hw;
                for (int64_t q = 0; q < hw; ++q) dst[q] += g;
            }
    });
}

// View an [n,C,H,W] label field as a [n*H*W, C] assignment matrix.
template <typename T>
Var<T> flatten_pixels_to_rows(const Var<T>& x) {
    if (x->value.rank() != 4) throw std::invalid_argument("flatten_pixels_to_rows: rank-4 input required");
    const int64_t n = x->value.dim(0), C = x->value.dim(1), hw = x->value.dim(2) * x->value.dim(3);
    Tensor<T> out({n * hw, C});
    for (int64_t i = 0; i < n; ++i)
        for (int64_t c = 0; c < C; ++c) {
            const T* src = x->value.data() + (i * C + c) * hw;
            for (int64_t p = 0; p < hw; ++p) out.at(i * hw + p, c) = src[p];
        }
    return detail::make_op<T>(std::move(out), {x}, [n, C, hw](Node<T>& self) {
        Node<T>* par = self.parents[0].get();
        if (!par->requires_grad) return;
        par->ensure_grad();
        for (int64_t i = 0; i < n; ++i)
            for (int64_t c = 0; c < C; ++c) {
                T* dst = par->grad.data() + (i * C + c) * hw;
                for (int64_t p = 0; p < hw; ++p) dst[p] += self.grad.at(i * hw + p, c);
            }
    });
}

}  // namespace iic::ad
