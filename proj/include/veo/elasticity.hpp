#pragma once

#include "veo/geometry.hpp"
#include "veo/types.hpp"

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <array>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

namespace veo
{
    /// Per-point Lame parameters stored as natural logs (Pa).
    struct MaterialField
    {
        Eigen::VectorXd log_mu;
        Eigen::VectorXd log_lambda;

        static MaterialField uniform(int n, double mu, double lambda)
        {
            return {Eigen::VectorXd::Constant(n, std::log(mu)), Eigen::VectorXd::Constant(n, std::log(lambda))};
        }

        int size() const { return static_cast<int>(log_mu.size()); }
        double mu(int i) const { return std::exp(log_mu(i)); }
        double lambda(int i) const { return std::exp(log_lambda(i)); }

        double mean_mu() const { return log_mu.array().exp().mean(); }

        void validate(int n) const
        {
            require(log_mu.size() == n && log_lambda.size() == n,
                    "material field has " + std::to_string(log_mu.size()) + "/" + std::to_string(log_lambda.size()) +
                        " entries, expected " + std::to_string(n));
            require(log_mu.allFinite() && log_lambda.allFinite(), "material field has non-finite entries");
        }

        bool operator==(const MaterialField &o) const
        {
            return log_mu.size() == o.log_mu.size() && log_lambda.size() == o.log_lambda.size() &&
                   log_mu == o.log_mu && log_lambda == o.log_lambda;
        }
    };

    /// Gradient with respect to the log-space material parameters.
    struct MaterialGradient
    {
        Eigen::VectorXd log_mu;
        Eigen::VectorXd log_lambda;

        static MaterialGradient zero(int n) { return {Eigen::VectorXd::Zero(n), Eigen::VectorXd::Zero(n)}; }

        MaterialGradient &operator+=(const MaterialGradient &o)
        {
            log_mu += o.log_mu;
            log_lambda += o.log_lambda;
            return *this;
        }

        double dot(const MaterialGradient &o) const { return log_mu.dot(o.log_mu) + log_lambda.dot(o.log_lambda); }
        double norm() const { return std::sqrt(dot(*this)); }
    };

    struct DeformationGradient
    {
        Mat3 F;
        double Ic;
        double J;

        explicit DeformationGradient(const Mat3 &f) : F(f), Ic(f.squaredNorm()), J(f.determinant()) {}
    };

    /// Least-squares deformation gradient of stencil `point` under positions y.
    inline DeformationGradient deformation_gradient(const Neighborhood &nb, const Points &y)
    {
        Mat3 f = Mat3::Zero();
        const Vec3 yi = y.col(nb.center);
        for (int j = 0; j < stencil_neighbors; ++j)
            f.noalias() -= (yi - y.col(nb.neighbors[j])) * nb.shape[j + 1].transpose();
        return DeformationGradient(f);
    }

    inline DeformationGradient deformation_gradient(const ReferenceModel &ref, int point, const Points &y)
    {
        require(y.cols() == ref.size(), "deformed positions have " + std::to_string(y.cols()) + " points, expected " + std::to_string(ref.size()));
        require(point >= 0 && point < ref.size(), "point id out of range");
        return deformation_gradient(ref.neighborhoods[point], y);
    }

    /// Neo-Hookean strain energy density; +infinity for inverted or collapsed F.
    inline double neo_hookean_density(const DeformationGradient &dg, double mu, double lambda)
    {
        if (!(dg.J > 0.0))
            return std::numeric_limits<double>::infinity();
        return 0.5 * mu * (dg.Ic - 3.0) - mu * std::log(dg.J) + 0.5 * lambda * (dg.J - 1.0) * (dg.J - 1.0);
    }

    /// dPsi/dF, split by Lame parameter: P = mu * shear + lambda * volumetric.
    struct StressParts
    {
        Mat3 shear;
        Mat3 volumetric;
    };

    inline StressParts stress_parts(const DeformationGradient &dg)
    {
        const Mat3 finv_t = dg.F.inverse().transpose();
        return {dg.F - finv_t, (dg.J - 1.0) * dg.J * finv_t};
    }

    inline Mat3 first_piola(const DeformationGradient &dg, double mu, double lambda)
    {
        const auto parts = stress_parts(dg);
        return mu * parts.shear + lambda * parts.volumetric;
    }

    /// Directional derivative of each stress part along dF.
    inline StressParts stress_differential_parts(const DeformationGradient &dg, const Mat3 &finv_t, const Mat3 &dF)
    {
        const Mat3 twisted = finv_t * dF.transpose() * finv_t;
        const double trace_term = (finv_t.array() * dF.array()).sum();
        return {dF + twisted, (2.0 * dg.J - 1.0) * dg.J * trace_term * finv_t - (dg.J - 1.0) * dg.J * twisted};
    }

    inline constexpr int block_size = 3 * stencil_points;
    using StencilMatrix = Eigen::Matrix<double, block_size, block_size>;
    using StencilVector = Eigen::Matrix<double, block_size, 1>;

    struct StencilBlock
    {
        std::array<int, stencil_points> points;
        StencilMatrix matrix;
    };

    /**
     * Symmetric operator over 3n coordinates stored as per-stencil 21x21 blocks
     * plus per-point 3x3 diagonal blocks (attraction, contact). The global
     * sparse view sums overlapping contributions.
     */
    class BlockHessian
    {
    public:
        BlockHessian() = default;
        explicit BlockHessian(int points) : point_blocks(points, Mat3::Zero()), n_(points) {}

        std::vector<StencilBlock> blocks;
        std::vector<Mat3> point_blocks;
        double epsilon = 0.0;

        int dofs() const { return 3 * n_; }

        Eigen::SparseMatrix<double> assemble() const
        {
            std::vector<Eigen::Triplet<double>> triplets;
            triplets.reserve(blocks.size() * block_size * block_size + point_blocks.size() * 9);
            for (const auto &b : blocks)
                for (int k = 0; k < stencil_points; ++k)
                    for (int l = 0; l < stencil_points; ++l)
                        for (int a = 0; a < 3; ++a)
                            for (int c = 0; c < 3; ++c)
                                triplets.emplace_back(3 * b.points[k] + a, 3 * b.points[l] + c, b.matrix(3 * k + a, 3 * l + c));
            for (int i = 0; i < n_; ++i)
                if (!point_blocks[i].isZero(0.0))
                    for (int a = 0; a < 3; ++a)
                        for (int c = 0; c < 3; ++c)
                            triplets.emplace_back(3 * i + a, 3 * i + c, point_blocks[i](a, c));
            Eigen::SparseMatrix<double> h(dofs(), dofs());
            h.setFromTriplets(triplets.begin(), triplets.end());
            return h;
        }

        Eigen::VectorXd apply(const Eigen::VectorXd &v) const
        {
            Eigen::VectorXd out = Eigen::VectorXd::Zero(dofs());
            for (const auto &b : blocks)
            {
                StencilVector local;
                for (int k = 0; k < stencil_points; ++k)
                    local.segment<3>(3 * k) = v.segment<3>(3 * b.points[k]);
                const StencilVector r = b.matrix * local;
                for (int k = 0; k < stencil_points; ++k)
                    out.segment<3>(3 * b.points[k]) += r.segment<3>(3 * k);
            }
            for (int i = 0; i < n_; ++i)
                out.segment<3>(3 * i) += point_blocks[i] * v.segment<3>(3 * i);
            return out;
        }

    private:
        int n_ = 0;
    };

    struct EnergyReport
    {
        double value = 0.0;
        Eigen::VectorXd gradient;
        BlockHessian hessian;
    };

    /// Elastic energy sum_i V_i Psi_i; +infinity if any stencil is inverted.
    inline double elastic_energy(const ReferenceModel &ref, const MaterialField &mat, const Points &y)
    {
        require(y.cols() == ref.size(), "deformed positions do not match reference point count");
        double e = 0.0;
        for (const auto &nb : ref.neighborhoods)
        {
            const DeformationGradient dg = deformation_gradient(nb, y);
            const double psi = neo_hookean_density(dg, mat.mu(nb.center), mat.lambda(nb.center));
            if (!std::isfinite(psi))
                return std::numeric_limits<double>::infinity();
            e += nb.volume * psi;
        }
        return e;
    }

    namespace detail
    {
        inline void check_inversion(const DeformationGradient &dg, int id)
        {
            if (!(dg.J > 0.0))
                throw SolverError("inverted neighborhood " + std::to_string(id) + " (J=" + std::to_string(dg.J) + ")");
        }

        inline void scatter(Eigen::VectorXd &out, const Neighborhood &nb, const Mat3 &stress, double scale)
        {
            for (int k = 0; k < stencil_points; ++k)
                out.segment<3>(3 * nb.point(k)) += scale * (stress * nb.shape[k]);
        }

        inline Mat3 gather_gradient(const Neighborhood &nb, const Eigen::VectorXd &v)
        {
            Mat3 f = Mat3::Zero();
            for (int k = 0; k < stencil_points; ++k)
                f.noalias() += v.segment<3>(3 * nb.point(k)) * nb.shape[k].transpose();
            return f;
        }

        inline StencilMatrix stencil_hessian(const Neighborhood &nb, const DeformationGradient &dg, double mu, double lambda)
        {
            const Mat3 finv_t = dg.F.inverse().transpose();
            StencilMatrix h;
            for (int k = 0; k < stencil_points; ++k)
                for (int a = 0; a < 3; ++a)
                {
                    const Mat3 dF = Vec3::Unit(a) * nb.shape[k].transpose();
                    const auto parts = stress_differential_parts(dg, finv_t, dF);
                    const Mat3 dP = nb.volume * (mu * parts.shear + lambda * parts.volumetric);
                    for (int l = 0; l < stencil_points; ++l)
                        h.block<3, 1>(3 * l, 3 * k + a) = dP * nb.shape[l];
                }
            return 0.5 * (h + h.transpose());
        }

        /// Clamp eigenvalues below epsilon; returns false when nothing changed.
        inline bool project_block(StencilMatrix &m, double epsilon)
        {
            Eigen::SelfAdjointEigenSolver<StencilMatrix> es(m);
            if (es.eigenvalues()(0) >= epsilon)
                return false;
            const auto clamped = es.eigenvalues().cwiseMax(epsilon);
            m = es.eigenvectors() * clamped.asDiagonal() * es.eigenvectors().transpose();
            m = 0.5 * (m + m.transpose()).eval();
            return true;
        }

        /**
         * Same result as project_block for a stencil Hessian. The block only acts
         * on the 9-dimensional span of (shape basis) x (coordinate axis); the
         * other 12 eigenvalues are zero, so a 9x9 eigensolve suffices.
         */
        inline void project_stencil_block(StencilMatrix &m, double epsilon, const Neighborhood &nb)
        {
            Eigen::Matrix<double, stencil_points, 3> s;
            for (int k = 0; k < stencil_points; ++k)
                s.row(k) = nb.shape[k].transpose();
            const Eigen::Matrix<double, stencil_points, 3> qs =
                Eigen::HouseholderQR<Eigen::Matrix<double, stencil_points, 3>>(s).householderQ() *
                Eigen::Matrix<double, stencil_points, 3>::Identity();
            Eigen::Matrix<double, block_size, 9> q = Eigen::Matrix<double, block_size, 9>::Zero();
            for (int k = 0; k < stencil_points; ++k)
                for (int j = 0; j < 3; ++j)
                    for (int a = 0; a < 3; ++a)
                        q(3 * k + a, 3 * j + a) = qs(k, j);
            Eigen::Matrix<double, 9, 9> reduced = q.transpose() * m * q;
            reduced = 0.5 * (reduced + reduced.transpose()).eval();
            Eigen::Matrix<double, 9, 9> shifted = reduced;
            shifted.diagonal().array() -= epsilon;
            // Cholesky of the shifted block succeeds when no eigenvalue needs clamping.
            if (Eigen::LLT<Eigen::Matrix<double, 9, 9>>(shifted).info() != Eigen::Success)
            {
                Eigen::SelfAdjointEigenSolver<Eigen::Matrix<double, 9, 9>> es(reduced);
                shifted = es.eigenvectors() * (es.eigenvalues().array().max(epsilon) - epsilon).matrix().asDiagonal() *
                          es.eigenvectors().transpose();
            }
            m = q * shifted * q.transpose();
            m = 0.5 * (m + m.transpose()).eval();
            m.diagonal().array() += epsilon;
        }
    } // namespace detail

    /// Relative size of the eigenvalue floor with respect to the mean block diagonal.
    inline constexpr double projection_floor = 1e-8;

    /**
     * Analytic gradient and per-stencil Hessian of the elastic energy.
     *
     * With `project` set, every 21x21 stencil block is eigen-decomposed and
     * eigenvalues below epsilon = 1e-8 * mean(trace)/21 are raised to epsilon.
     */
    inline EnergyReport elastic_gradient_hessian(const ReferenceModel &ref, const MaterialField &mat, const Points &y, bool project)
    {
        require(y.cols() == ref.size(), "deformed positions do not match reference point count");
        EnergyReport rep;
        rep.gradient = Eigen::VectorXd::Zero(ref.dofs());
        rep.hessian = BlockHessian(ref.size());
        rep.hessian.blocks.reserve(ref.neighborhoods.size());

        double trace_sum = 0.0;
        for (const auto &nb : ref.neighborhoods)
        {
            const DeformationGradient dg = deformation_gradient(nb, y);
            detail::check_inversion(dg, nb.center);
            const double mu = mat.mu(nb.center), lambda = mat.lambda(nb.center);
            rep.value += nb.volume * neo_hookean_density(dg, mu, lambda);
            detail::scatter(rep.gradient, nb, first_piola(dg, mu, lambda), nb.volume);

            StencilBlock block;
            for (int k = 0; k < stencil_points; ++k)
                block.points[k] = nb.point(k);
            block.matrix = detail::stencil_hessian(nb, dg, mu, lambda);
            trace_sum += block.matrix.trace();
            rep.hessian.blocks.push_back(std::move(block));
        }

        rep.hessian.epsilon = projection_floor * trace_sum / (static_cast<double>(rep.hessian.blocks.size()) * block_size);
        if (project)
            for (std::size_t i = 0; i < rep.hessian.blocks.size(); ++i)
                detail::project_stencil_block(rep.hessian.blocks[i].matrix, rep.hessian.epsilon, ref.neighborhoods[i]);
        return rep;
    }

    inline Eigen::VectorXd elastic_gradient(const ReferenceModel &ref, const MaterialField &mat, const Points &y)
    {
        require(y.cols() == ref.size(), "deformed positions do not match reference point count");
        Eigen::VectorXd g = Eigen::VectorXd::Zero(ref.dofs());
        for (const auto &nb : ref.neighborhoods)
        {
            const DeformationGradient dg = deformation_gradient(nb, y);
            detail::check_inversion(dg, nb.center);
            detail::scatter(g, nb, first_piola(dg, mat.mu(nb.center), mat.lambda(nb.center)), nb.volume);
        }
        return g;
    }

    /**
     * Mixed partial d(grad E)/d(theta) for theta = (log mu, log lambda) per point.
     *
     * Stencil i only depends on the parameters of point i, so the operator is
     * stored as two 3n-sparse columns per stencil.
     */
    class MixedPartialOperator
    {
    public:
        MixedPartialOperator() = default;
        MixedPartialOperator(const ReferenceModel &ref, const MaterialField &mat, const Points &y) : ref_(&ref)
        {
            mu_dir_.resize(ref.size());
            lambda_dir_.resize(ref.size());
            for (const auto &nb : ref.neighborhoods)
            {
                const DeformationGradient dg = deformation_gradient(nb, y);
                detail::check_inversion(dg, nb.center);
                const auto parts = stress_parts(dg);
                const double sm = nb.volume * mat.mu(nb.center), sl = nb.volume * mat.lambda(nb.center);
                for (int k = 0; k < stencil_points; ++k)
                {
                    mu_dir_[nb.center].segment<3>(3 * k) = sm * (parts.shear * nb.shape[k]);
                    lambda_dir_[nb.center].segment<3>(3 * k) = sl * (parts.volumetric * nb.shape[k]);
                }
            }
        }

        /// (d grad E / d theta) * direction, a 3n vector.
        Eigen::VectorXd apply(const MaterialGradient &direction) const
        {
            Eigen::VectorXd out = Eigen::VectorXd::Zero(ref_->dofs());
            for (const auto &nb : ref_->neighborhoods)
            {
                const int i = nb.center;
                const StencilVector local = direction.log_mu(i) * mu_dir_[i] + direction.log_lambda(i) * lambda_dir_[i];
                for (int k = 0; k < stencil_points; ++k)
                    out.segment<3>(3 * nb.point(k)) += local.segment<3>(3 * k);
            }
            return out;
        }

        /// v^T (d grad E / d theta), one entry per parameter.
        MaterialGradient apply_transpose(const Eigen::VectorXd &v) const
        {
            auto out = MaterialGradient::zero(ref_->size());
            for (const auto &nb : ref_->neighborhoods)
            {
                StencilVector local;
                for (int k = 0; k < stencil_points; ++k)
                    local.segment<3>(3 * k) = v.segment<3>(3 * nb.point(k));
                out.log_mu(nb.center) = mu_dir_[nb.center].dot(local);
                out.log_lambda(nb.center) = lambda_dir_[nb.center].dot(local);
            }
            return out;
        }

    private:
        const ReferenceModel *ref_ = nullptr;
        std::vector<StencilVector> mu_dir_;
        std::vector<StencilVector> lambda_dir_;
    };

    struct MaterialPartials
    {
        MaterialGradient energy;
        MixedPartialOperator mixed;
    };

    /// dE/d(log mu_i), dE/d(log lambda_i) and the mixed operator d(grad E)/d(theta).
    inline MaterialPartials material_partials(const ReferenceModel &ref, const MaterialField &mat, const Points &y)
    {
        require(y.cols() == ref.size(), "deformed positions do not match reference point count");
        MaterialPartials out{MaterialGradient::zero(ref.size()), MixedPartialOperator(ref, mat, y)};
        for (const auto &nb : ref.neighborhoods)
        {
            const DeformationGradient dg = deformation_gradient(nb, y);
            const int i = nb.center;
            out.energy.log_mu(i) = mat.mu(i) * nb.volume * (0.5 * (dg.Ic - 3.0) - std::log(dg.J));
            out.energy.log_lambda(i) = mat.lambda(i) * nb.volume * 0.5 * (dg.J - 1.0) * (dg.J - 1.0);
        }
        return out;
    }

    /**
     * a^T (dH/d theta_i) d for every point, using the unprojected stencil Hessian.
     * Each stencil block is linear in (mu_i, lambda_i), so this is exact for
     * the unprojected operator.
     */
    inline MaterialGradient hessian_material_contraction(const ReferenceModel &ref, const MaterialField &mat, const Points &y,
                                                         const Eigen::VectorXd &a, const Eigen::VectorXd &d)
    {
        auto out = MaterialGradient::zero(ref.size());
        for (const auto &nb : ref.neighborhoods)
        {
            const DeformationGradient dg = deformation_gradient(nb, y);
            detail::check_inversion(dg, nb.center);
            const Mat3 finv_t = dg.F.inverse().transpose();
            const Mat3 da = detail::gather_gradient(nb, a);
            const Mat3 dd = detail::gather_gradient(nb, d);
            const auto parts = stress_differential_parts(dg, finv_t, dd);
            const int i = nb.center;
            out.log_mu(i) = mat.mu(i) * nb.volume * (da.array() * parts.shear.array()).sum();
            out.log_lambda(i) = mat.lambda(i) * nb.volume * (da.array() * parts.volumetric.array()).sum();
        }
        return out;
    }
} // namespace veo
