#pragma once

#include "veo/types.hpp"

#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include <cmath>
#include <memory>
#include <string>

namespace veo
{
    enum class LinearSolverKind
    {
        pcg,  ///< Jacobi-preconditioned conjugate gradient
        ldlt, ///< sparse LDL^T factorization
    };

    inline std::string to_string(LinearSolverKind k) { return k == LinearSolverKind::pcg ? "pcg" : "ldlt"; }

    inline LinearSolverKind linear_solver_from_string(const std::string &s)
    {
        if (s == "pcg")
            return LinearSolverKind::pcg;
        if (s == "ldlt")
            return LinearSolverKind::ldlt;
        throw ValidationError("unknown linear solver '" + s + "' (expected pcg or ldlt)");
    }

    struct LinearSolveStats
    {
        int iterations = 0;
        double relative_residual = 0.0;
        bool converged = true;
    };

    /// Jacobi-preconditioned CG on an SPD system, starting from zero.
    inline Eigen::VectorXd pcg(const Eigen::SparseMatrix<double> &a, const Eigen::VectorXd &b, const Eigen::VectorXd &inv_diag,
                               double rel_tol, int max_iters, LinearSolveStats *stats = nullptr)
    {
        Eigen::VectorXd x = Eigen::VectorXd::Zero(b.size());
        const double b_norm = b.norm();
        LinearSolveStats st;
        if (b_norm == 0.0)
        {
            if (stats)
                *stats = st;
            return x;
        }

        Eigen::VectorXd r = b;
        Eigen::VectorXd z = inv_diag.cwiseProduct(r);
        Eigen::VectorXd p = z;
        Eigen::VectorXd ap(b.size());
        double rho = r.dot(z);
        double res = 1.0;
        int it = 0;
        while (it < max_iters)
        {
            ap.noalias() = a * p;
            const double pap = p.dot(ap);
            if (!(pap > 0.0))
                break;
            const double alpha = rho / pap;
            x += alpha * p;
            r -= alpha * ap;
            ++it;
            res = r.norm() / b_norm;
            if (res <= rel_tol)
                break;
            z = inv_diag.cwiseProduct(r);
            const double rho_next = r.dot(z);
            p = z + (rho_next / rho) * p;
            rho = rho_next;
        }
        st.iterations = it;
        st.relative_residual = res;
        st.converged = res <= rel_tol;
        if (stats)
            *stats = st;
        return x;
    }

    /**
     * A prepared SPD system H x = b. PCG keeps the matrix and its diagonal;
     * LDLT keeps the factorization so repeated right-hand sides are cheap.
     */
    class LinearSystem
    {
    public:
        LinearSystem(Eigen::SparseMatrix<double> matrix, LinearSolverKind kind, double rel_tol, int max_iters)
            : matrix_(std::move(matrix)), kind_(kind), rel_tol_(rel_tol), max_iters_(max_iters)
        {
            matrix_.makeCompressed();
            if (kind_ == LinearSolverKind::pcg)
            {
                inv_diag_ = matrix_.diagonal();
                for (Eigen::Index i = 0; i < inv_diag_.size(); ++i)
                    inv_diag_(i) = inv_diag_(i) > 0.0 ? 1.0 / inv_diag_(i) : 1.0;
            }
            else
            {
                ldlt_ = std::make_unique<Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>>>(matrix_);
                if (ldlt_->info() != Eigen::Success)
                    throw SolverError("sparse LDLT factorization failed");
            }
        }

        const Eigen::SparseMatrix<double> &matrix() const { return matrix_; }

        Eigen::VectorXd solve(const Eigen::VectorXd &b, LinearSolveStats *stats = nullptr) const
        {
            if (kind_ == LinearSolverKind::pcg)
                return pcg(matrix_, b, inv_diag_, rel_tol_, max_iters_, stats);
            Eigen::VectorXd x = ldlt_->solve(b);
            if (stats)
            {
                const double bn = b.norm();
                stats->iterations = 1;
                stats->relative_residual = bn > 0.0 ? (matrix_ * x - b).norm() / bn : 0.0;
                stats->converged = std::isfinite(stats->relative_residual);
            }
            return x;
        }

    private:
        Eigen::SparseMatrix<double> matrix_;
        LinearSolverKind kind_;
        double rel_tol_;
        int max_iters_;
        Eigen::VectorXd inv_diag_;
        std::unique_ptr<Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>>> ldlt_;
    };
} // namespace veo
