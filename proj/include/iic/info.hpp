// Exact computation of the IIC objective: joint matrix over paired soft
// cluster assignments, mutual information and its entropy decomposition,
// the entropy-coefficient variant, and an analytic gradient oracle.
//
// Pipeline per batch of paired assignments (z, zt), both n x C row-simplex:
//   P = (1/n) sum_i z_i zt_i^T          outer-product average
//   P <- (P + P^T) / 2                  symmetrize
//   P <- P / sum(P)                     normalize by total mass
//   P <- max(P, clamp_eps)              entrywise lower clamp, no renormalize
//   I  = sum_cc' P_cc' ln(P_cc' / (P_c P_c'))
//   I_lambda = I + (lambda - 1) (H(z) + H(z'))
// All entropies and information are in nats. Accumulation is in double
// precision regardless of the network dtype.
#pragma once

#include <Eigen/Core>

namespace iic {

inline constexpr double kClampEpsF64 = 1e-10;
inline constexpr double kClampEpsF32 = 1e-7;

using MatrixXd = Eigen::MatrixXd;

// n x C matrix of soft cluster assignments; every row is a probability
// simplex point (entries in [0,1], row sum 1 within 1e-6).
struct AssignmentBatch {
    MatrixXd values;

    int64_t batch_size() const { return values.rows(); }
    int64_t clusters() const { return values.cols(); }
};

// Throws std::invalid_argument if the row-simplex invariant is violated.
void validate_assignments(const AssignmentBatch& z, const char* who);

// C x C joint distribution over paired cluster assignments, already
// symmetrized, normalized, and entrywise clamped below at clamp_eps.
struct JointMatrix {
    MatrixXd values;
    double clamp_eps = 0.0;

    int64_t clusters() const { return values.rows(); }
};

struct MiBreakdown {
    double mi = 0.0;           // I(z, z') in nats
    double h_z = 0.0;          // marginal entropy H(z) (row marginals)
    double h_z_given_zt = 0.0; // conditional entropy H(z|z') = H(z) - I
};

JointMatrix joint_matrix(const AssignmentBatch& z, const AssignmentBatch& zt, double clamp_eps);

// Symmetrize/normalize/clamp an already-accumulated raw joint (used by the
// segmentation path, which accumulates joints per displacement slice).
JointMatrix finalize_joint(const MatrixXd& raw, double clamp_eps);

MiBreakdown mutual_information(const JointMatrix& P);

// Negative I_lambda of the pair; the training loss to be minimized.
// lambda = 1 is plain mutual information.
double iic_loss(const AssignmentBatch& z, const AssignmentBatch& zt, double lambda, double clamp_eps);

// Analytic dI/dP_ab = ln(P_ab / (P_a P_b)) - 1, treating the entries of P as
// free variables (marginal dependence included). Test oracle for the
// reverse-mode engine; requires all entries >= clamp_eps > 0.
MatrixXd mi_gradient_oracle(const JointMatrix& P);

}  // namespace iic
