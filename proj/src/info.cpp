#include "iic/info.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace iic {

namespace {
constexpr double kRowSumTol = 1e-6;
}

void validate_assignments(const AssignmentBatch& z, const char* who) {
    if (z.values.rows() < 1) throw std::invalid_argument(std::string(who) + ": empty batch");
    if (z.values.cols() < 2) throw std::invalid_argument(std::string(who) + ": needs C >= 2 clusters");
    for (int64_t i = 0; i < z.values.rows(); ++i) {
        double row_sum = 0.0;
        for (int64_t c = 0; c < z.values.cols(); ++c) {
            double v = z.values(i, c);
            if (!(v >= 0.0 && v <= 1.0 + 1e-12))
                throw std::invalid_argument(std::string(who) + ": entry outside [0,1] at row " + std::to_string(i));
            row_sum += v;
        }
        if (std::abs(row_sum - 1.0) > kRowSumTol)
            throw std::invalid_argument(std::string(who) + ": row " + std::to_string(i) + " sums to " +
                                        std::to_string(row_sum));
    }
}

JointMatrix joint_matrix(const AssignmentBatch& z, const AssignmentBatch& zt, double clamp_eps) {
    if (z.values.rows() != zt.values.rows() || z.values.cols() != zt.values.cols())
        throw std::invalid_argument("joint_matrix: z and zt shapes differ");
    validate_assignments(z, "joint_matrix(z)");
    validate_assignments(zt, "joint_matrix(zt)");

    const double n = static_cast<double>(z.values.rows());
    MatrixXd raw = (z.values.transpose() * zt.values) / n;
    return finalize_joint(raw, clamp_eps);
}

JointMatrix finalize_joint(const MatrixXd& raw, double clamp_eps) {
    if (raw.rows() != raw.cols() || raw.rows() < 2)
        throw std::invalid_argument("finalize_joint: joint must be square with C >= 2");
    MatrixXd sym = (raw + raw.transpose()) * 0.5;
    double total = sym.sum();
    if (!(total > 0.0)) throw std::invalid_argument("finalize_joint: joint has no mass");
    sym /= total;
    if (clamp_eps > 0.0) sym = sym.cwiseMax(clamp_eps);
    return JointMatrix{std::move(sym), clamp_eps};
}

MiBreakdown mutual_information(const JointMatrix& P) {
    const auto& m = P.values;
    const int64_t C = m.rows();
    Eigen::VectorXd row_marg = m.rowwise().sum();
    Eigen::VectorXd col_marg = m.colwise().sum();
    for (int64_t c = 0; c < C; ++c)
        if (!(row_marg(c) > 0.0) || !(col_marg(c) > 0.0))
            throw std::invalid_argument("mutual_information: marginal <= 0 at cluster " + std::to_string(c));

    double mi = 0.0;
    for (int64_t a = 0; a < C; ++a) {
        for (int64_t b = 0; b < C; ++b) {
            double p = m(a, b);
            if (p > 0.0) mi += p * std::log(p / (row_marg(a) * col_marg(b)));
        }
    }
    double h_z = 0.0;
    for (int64_t c = 0; c < C; ++c) h_z -= row_marg(c) * std::log(row_marg(c));
    return MiBreakdown{mi, h_z, h_z - mi};
}

double iic_loss(const AssignmentBatch& z, const AssignmentBatch& zt, double lambda, double clamp_eps) {
    if (lambda < 1.0) throw std::invalid_argument("iic_loss: lambda must be >= 1");
    JointMatrix P = joint_matrix(z, zt, clamp_eps);
    MiBreakdown b = mutual_information(P);
    double h_zt = 0.0;
    Eigen::VectorXd col_marg = P.values.colwise().sum();
    for (int64_t c = 0; c < P.clusters(); ++c) h_zt -= col_marg(c) * std::log(col_marg(c));
    return -(b.mi + (lambda - 1.0) * (b.h_z + h_zt));
}

MatrixXd mi_gradient_oracle(const JointMatrix& P) {
    const auto& m = P.values;
    const int64_t C = m.rows();
    if (!(P.clamp_eps > 0.0) || (m.array() < P.clamp_eps).any())
        throw std::invalid_argument("mi_gradient_oracle: requires entries >= clamp_eps > 0");
    Eigen::VectorXd row_marg = m.rowwise().sum();
    Eigen::VectorXd col_marg = m.colwise().sum();
    MatrixXd g(C, C);
    for (int64_t a = 0; a < C; ++a)
        for (int64_t b = 0; b < C; ++b)
            g(a, b) = std::log(m(a, b) / (row_marg(a) * col_marg(b))) - 1.0;
    return g;
}

}  // namespace iic
