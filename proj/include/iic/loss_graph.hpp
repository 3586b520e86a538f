// Differentiable route of the IIC objective. The forward chain matches the
// reference loss code: accumulate the raw joint, symmetrize, normalize by the
// total mass, clamp below at eps (clamped entries get zero gradient, like a
// masked fill of a constant), then evaluate -I_lambda. Internal accumulation
// is always double precision.
#pragma once

#include <Eigen/Core>

#include <cmath>
#include <memory>
#include <stdexcept>

#include "iic/autodiff.hpp"
#include "iic/info.hpp"

namespace iic {

// Forward state of symmetrize -> normalize -> clamp -> -I_lambda on one raw joint.
struct JointChain {
    Eigen::MatrixXd normalized;  // pre-clamp M
    Eigen::MatrixXd clamped;     // P
    Eigen::VectorXd row_marg, col_marg;
    double total = 0.0;  // normalizing mass of the raw joint
    double mi = 0.0, h_row = 0.0, h_col = 0.0;

    double loss(double lambda) const { return -(mi + (lambda - 1.0) * (h_row + h_col)); }
};

inline JointChain joint_chain_forward(const Eigen::MatrixXd& raw, double clamp_eps) {
    const int64_t C = raw.rows();
    JointChain st;
    Eigen::MatrixXd sym = (raw + raw.transpose()) * 0.5;
    st.total = sym.sum();
    if (!(st.total > 0.0)) throw std::runtime_error("iic loss: joint has no mass");
    st.normalized = sym / st.total;
    st.clamped = clamp_eps > 0.0 ? st.normalized.cwiseMax(clamp_eps).eval() : st.normalized;
    st.row_marg = st.clamped.rowwise().sum();
    st.col_marg = st.clamped.colwise().sum();
    st.mi = 0.0;
    for (int64_t a = 0; a < C; ++a)
        for (int64_t b = 0; b < C; ++b) {
            double p = st.clamped(a, b);
            if (p > 0.0) st.mi += p * std::log(p / (st.row_marg(a) * st.col_marg(b)));
        }
    st.h_row = 0.0;
    st.h_col = 0.0;
    for (int64_t c = 0; c < C; ++c) {
        if (st.row_marg(c) > 0.0) st.h_row -= st.row_marg(c) * std::log(st.row_marg(c));
        if (st.col_marg(c) > 0.0) st.h_col -= st.col_marg(c) * std::log(st.col_marg(c));
    }
    return st;
}

// d(-I_lambda)/dRaw for the chain above. Entries clamped in the forward pass
// contribute no gradient.
inline Eigen::MatrixXd joint_chain_backward(const JointChain& st, double lambda, double clamp_eps) {
    const int64_t C = st.clamped.rows();
    Eigen::MatrixXd D(C, C);
    for (int64_t u = 0; u < C; ++u) {
        for (int64_t v = 0; v < C; ++v) {
            if (clamp_eps > 0.0 && st.normalized(u, v) < clamp_eps) {
                D(u, v) = 0.0;
                continue;
            }
            const double p = st.clamped(u, v);
            const double lr = std::log(st.row_marg(u)), lc = std::log(st.col_marg(v));
            const double d_mi = std::log(p) - lr - lc - 1.0;
            const double d_ent = -(lr + 1.0) - (lc + 1.0);  // dH(z)/dP + dH(z')/dP
            D(u, v) = -(d_mi + (lambda - 1.0) * d_ent);
        }
    }
    const double inner = (D.array() * st.normalized.array()).sum();
    Eigen::MatrixXd E = ((D + D.transpose()) * 0.5).array() - inner;
    return E / st.total;
}

namespace ad {

// Scalar IIC loss node over a pair of n x C soft assignment matrices.
// Returns -I_lambda(z, zt); lambda = 1 is plain negative mutual information.
template <typename T>
Var<T> iic_pair_loss(const Var<T>& z, const Var<T>& zt, double lambda, double clamp_eps) {
    if (z->value.rank() != 2 || !z->value.same_shape(zt->value))
        throw std::invalid_argument("iic_pair_loss: z and zt must be matching n x C matrices");
    if (z->value.dim(1) < 2) throw std::invalid_argument("iic_pair_loss: needs C >= 2");
    if (lambda < 1.0) throw std::invalid_argument("iic_pair_loss: lambda must be >= 1");
    const int64_t n = z->value.dim(0), C = z->value.dim(1);

    Eigen::MatrixXd raw = Eigen::MatrixXd::Zero(C, C);
    for (int64_t i = 0; i < n; ++i) {
        const T* zi = z->value.data() + i * C;
        const T* ti = zt->value.data() + i * C;
        for (int64_t a = 0; a < C; ++a) {
            const double za = static_cast<double>(zi[a]);
            for (int64_t b = 0; b < C; ++b) raw(a, b) += za * static_cast<double>(ti[b]);
        }
    }
    auto chain = std::make_shared<JointChain>(joint_chain_forward(raw, clamp_eps));
    const double loss = chain->loss(lambda);

    auto bw = [chain, lambda, clamp_eps, n, C](Node<T>& self) {
        const double g0 = static_cast<double>(self.grad[0]);
        Eigen::MatrixXd E = joint_chain_backward(*chain, lambda, clamp_eps) * g0;
        Node<T>* pz = self.parents[0].get();
        Node<T>* pt = self.parents[1].get();
        for (int64_t i = 0; i < n; ++i) {
            const T* zi = pz->value.data() + i * C;
            const T* ti = pt->value.data() + i * C;
            if (pz->requires_grad) {
                pz->ensure_grad();
                T* dz = pz->grad.data() + i * C;
                for (int64_t a = 0; a < C; ++a) {
                    double s = 0.0;
                    for (int64_t b = 0; b < C; ++b) s += E(a, b) * static_cast<double>(ti[b]);
                    dz[a] += static_cast<T>(s);
                }
            }
            if (pt->requires_grad) {
                pt->ensure_grad();
                T* dt = pt->grad.data() + i * C;
                for (int64_t b = 0; b < C; ++b) {
                    double s = 0.0;
                    for (int64_t a = 0; a < C; ++a) s += E(a, b) * static_cast<double>(zi[a]);
                    dt[b] += static_cast<T>(s);
                }
            }
        }
    };
    return detail::make_op<T>(Tensor<T>::scalar(static_cast<T>(loss)), {z, zt}, std::move(bw));
}

}  // namespace ad
}  // namespace iic
