#pragma once

#include "veo/elasticity.hpp"
#include "veo/forces.hpp"
#include "veo/geometry.hpp"
#include "veo/solver.hpp"
#include "veo/types.hpp"

#include <Eigen/SparseCholesky>

#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

namespace veo
{
    enum class GradMode
    {
        truncated,
        ift_oracle
    };

    inline std::string to_string(GradMode m) { return m == GradMode::truncated ? "truncated" : "ift_oracle"; }

    inline GradMode grad_mode_from_string(const std::string &s)
    {
        if (s == "truncated")
            return GradMode::truncated;
        if (s == "ift_oracle")
            return GradMode::ift_oracle;
        throw ValidationError("unknown grad mode '" + s + "' (expected truncated or ift_oracle)");
    }

    struct FitConfig
    {
        /// Training frame indices, solved in increasing order with warm starts.
        std::vector<int> frames;
        double adam_lr = 0.05;
        double adam_beta1 = 0.9;
        double adam_beta2 = 0.999;
        double adam_eps = 1e-8;
        int max_epochs = 200;
        /// Stop once the best loss improved by less than plateau_rel over this many epochs.
        int plateau_epochs = 20;
        double plateau_rel = 1e-3;
        /// Unset values are estimated from the frame-0 sag.
        std::optional<double> init_log_mu;
        std::optional<double> init_log_lambda;
        GradMode grad_mode = GradMode::truncated;
        SolverConfig solver;

        void validate(int frame_count) const
        {
            require(!frames.empty(), "fit: no training frames selected");
            for (std::size_t k = 0; k < frames.size(); ++k)
            {
                require(frames[k] >= 0 && frames[k] < frame_count, "fit: training frame " + std::to_string(frames[k]) + " out of range");
                require(k == 0 || frames[k] > frames[k - 1], "fit: training frames must be strictly increasing");
            }
            require(adam_lr > 0.0, "fit: adam_lr must be positive");
            require(adam_beta1 >= 0.0 && adam_beta1 < 1.0, "fit: adam_beta1 must lie in [0, 1)");
            require(adam_beta2 >= 0.0 && adam_beta2 < 1.0, "fit: adam_beta2 must lie in [0, 1)");
            require(adam_eps > 0.0, "fit: adam_eps must be positive");
            require(max_epochs >= 1, "fit: max_epochs must be at least 1");
            require(plateau_epochs >= 1 && plateau_rel >= 0.0, "fit: invalid plateau settings");
            require(!init_log_mu || std::isfinite(*init_log_mu), "fit: init_log_mu must be finite");
            require(!init_log_lambda || std::isfinite(*init_log_lambda), "fit: init_log_lambda must be finite");
            solver.validate();
        }
    };

    struct FitReport
    {
        MaterialField material;
        std::vector<double> loss_history;
        /// L_t of each training frame at the returned material.
        std::vector<double> per_frame_residuals;
        double final_loss = 0.0;
        int epochs = 0;
        int best_epoch = 0;
        bool homogeneous = false;
        MaterialField initial;
    };

    /// Sum over surface points of |y_i - x*_i|^2.
    inline double frame_loss(const ReferenceModel &ref, const PointCloud &observed, const Points &y)
    {
        require(observed.size() == ref.size() && y.cols() == ref.size(), "frame_loss: point count mismatch");
        double l = 0.0;
        for (int i = 0; i < ref.size(); ++i)
            if (ref.surface_mask[i])
                l += (y.col(i) - observed[i]).squaredNorm();
        return l;
    }

    inline double frame_loss(const ReferenceModel &ref, const PointCloud &observed, const EquilibriumState &state)
    {
        return frame_loss(ref, observed, state.y);
    }

    /// dL/dy with pinned coordinates zeroed.
    inline Eigen::VectorXd loss_position_gradient(const ReferenceModel &ref, const PointCloud &observed, const EquilibriumState &state)
    {
        require(observed.size() == ref.size() && state.y.cols() == ref.size(), "loss gradient: point count mismatch");
        Eigen::VectorXd g = Eigen::VectorXd::Zero(ref.dofs());
        for (int i = 0; i < ref.size(); ++i)
            if (ref.surface_mask[i])
                g.segment<3>(3 * i) = 2.0 * (state.y.col(i) - observed[i]);
        return g.cwiseProduct(free_mask(state.frame, ref.size()));
    }

    /**
     * Loss gradient through the recorded Newton iterates, dropping the
     * derivatives of H and grad E with respect to the previous iterate.
     *
     * Reverse accumulation of dy^k/dtheta over the window gives, per record k,
     * -a_k^T (dH_k/dtheta) d_k - (d grad E_k/dtheta)^T a_k with a_k = H_k^{-1} dL/dy
     * and d_k the Newton direction. A solve that took no steps contributes its
     * final state as a single record with d = 0.
     */
    inline MaterialGradient loss_gradient_truncated(const ReferenceModel &ref, const MaterialField &mat, const PointCloud &observed,
                                                    const EquilibriumState &state, const SolverConfig &config = {})
    {
        const Eigen::VectorXd g = loss_position_gradient(ref, observed, state);
        auto out = MaterialGradient::zero(ref.size());
        if (g.isZero(0.0))
            return out;
        const Eigen::VectorXd free = free_mask(state.frame, ref.size());

        std::vector<NewtonRecord> records(state.newton_trace.begin(), state.newton_trace.end());
        if (records.empty())
        {
            require(state.iters == 0, "truncated gradient: Newton trace is missing");
            const TotalEnergy te = total_energy(ref, mat, state.frame, state.y, true);
            records.push_back({state.y, te.gradient.cwiseProduct(free), Eigen::VectorXd::Zero(ref.dofs()),
                               make_linear_system(te.hessian, free, config)});
        }
        for (const auto &rec : records)
        {
            require(rec.system != nullptr, "truncated gradient: record without a linear system");
            const Eigen::VectorXd a = rec.system->solve(g).cwiseProduct(free);
            if (!rec.direction.isZero(0.0))
            {
                auto c = hessian_material_contraction(ref, mat, rec.y, a, rec.direction);
                out.log_mu -= c.log_mu;
                out.log_lambda -= c.log_lambda;
            }
            auto m = MixedPartialOperator(ref, mat, rec.y).apply_transpose(a);
            out.log_mu -= m.log_mu;
            out.log_lambda -= m.log_lambda;
        }
        return out;
    }

    /// Implicit-function sensitivity -(dL/dy) H^{-1} (d grad E/d theta) at a converged state.
    inline MaterialGradient loss_gradient_ift(const ReferenceModel &ref, const MaterialField &mat, const PointCloud &observed,
                                              const EquilibriumState &state)
    {
        if (!state.converged)
            throw SolverError("IFT gradient requires a converged state (grad_norm " + std::to_string(state.grad_norm) + " > tol " +
                              std::to_string(state.grad_tol) + ")");
        const Eigen::VectorXd g = loss_position_gradient(ref, observed, state);
        if (g.isZero(0.0))
            return MaterialGradient::zero(ref.size());
        const Eigen::VectorXd free = free_mask(state.frame, ref.size());

        // Unprojected Hessian; the projection floor only regularizes the solve.
        const TotalEnergy te = total_energy(ref, mat, state.frame, state.y, false);
        const TotalEnergy projected = total_energy(ref, mat, state.frame, state.y, true);
        Eigen::SparseMatrix<double> h = eliminate_pinned(te.hessian.assemble(), free);
        Eigen::SparseMatrix<double> reg(h.rows(), h.cols());
        reg.setIdentity();
        h += projected.hessian.epsilon * reg;
        Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt(h);
        if (ldlt.info() != Eigen::Success)
            throw SolverError("IFT gradient: factorization of the equilibrium Hessian failed");
        const Eigen::VectorXd a = Eigen::VectorXd(ldlt.solve(g)).cwiseProduct(free);
        auto m = MixedPartialOperator(ref, mat, state.y).apply_transpose(a);
        m.log_mu = -m.log_mu;
        m.log_lambda = -m.log_lambda;
        return m;
    }

    namespace detail
    {
        /// Mean surface displacement between two configurations.
        inline double mean_surface_displacement(const ReferenceModel &ref, const Points &a, const Points &b)
        {
            double s = 0.0;
            int c = 0;
            for (int i = 0; i < ref.size(); ++i)
                if (ref.surface_mask[i])
                {
                    s += (a.col(i) - b.col(i)).norm();
                    ++c;
                }
            return c ? s / c : 0.0;
        }

        inline constexpr double fallback_stiffness = 1e3;
    } // namespace detail

    /**
     * Stiffness scale whose simulated frame-0 sag matches the observed mean
     * displacement, assuming displacement scales with 1/mu. Returns the
     * fallback constant when the frame carries no measurable deflection.
     */
    inline double estimate_stiffness(const ReferenceModel &ref, const ForceFrame &frame, const PointCloud &observed,
                                     const SolverConfig &config = {})
    {
        const double observed_disp = detail::mean_surface_displacement(ref, observed.positions, ref.rest.positions);
        if (!(observed_disp > 1e-6 * ref.diameter))
            return detail::fallback_stiffness;
        double mu = detail::fallback_stiffness;
        bool ok = false;
        for (int refine = 0, attempts = 0; refine < 2 && attempts < 12; ++attempts)
        {
            const auto mat = MaterialField::uniform(ref.size(), mu, mu);
            EquilibriumState st;
            try
            {
                st = solve_equilibrium(ref, mat, frame, ref.rest.positions, config);
            }
            catch (const SolverError &)
            {
                st.converged = false;
            }
            if (!st.converged)
            {
                mu *= 10.0;
                continue;
            }
            const double sim_disp = detail::mean_surface_displacement(ref, st.y, ref.rest.positions);
            if (!(sim_disp > 0.0))
                break;
            mu *= sim_disp / observed_disp;
            ok = true;
            ++refine;
        }
        return ok && std::isfinite(mu) && mu > 0.0 ? mu : detail::fallback_stiffness;
    }

    namespace detail
    {
        struct Adam
        {
            Eigen::VectorXd m, v;
            int step = 0;

            explicit Adam(Eigen::Index n) : m(Eigen::VectorXd::Zero(n)), v(Eigen::VectorXd::Zero(n)) {}

            Eigen::VectorXd update(const Eigen::VectorXd &g, const FitConfig &c)
            {
                ++step;
                m = c.adam_beta1 * m + (1.0 - c.adam_beta1) * g;
                v = c.adam_beta2 * v + (1.0 - c.adam_beta2) * g.cwiseAbs2();
                const double b1 = 1.0 - std::pow(c.adam_beta1, step);
                const double b2 = 1.0 - std::pow(c.adam_beta2, step);
                return -c.adam_lr * (m / b1).cwiseQuotient(((v / b2).cwiseSqrt().array() + c.adam_eps).matrix());
            }
        };

        struct EpochResult
        {
            double loss = 0.0;
            std::vector<double> per_frame;
            MaterialGradient gradient;
            std::vector<Points> solutions;
        };

        inline EquilibriumState solve_training_frame(const ReferenceModel &ref, const MaterialField &mat, const ForceFrame &frame,
                                                     const Points &start, const SolverConfig &config, int index)
        {
            EquilibriumState st = solve_equilibrium(ref, mat, frame, start, config, index);
            if (st.converged)
                return st;
            // one cold retry before giving up on the frame
            st = solve_equilibrium(ref, mat, frame, ref.rest.positions, config, index);
            if (!st.converged)
                throw SolverError("fit: frame " + std::to_string(index) + " did not converge: " + st.diagnostic);
            return st;
        }

        inline EpochResult run_epoch(const ReferenceModel &ref, const MaterialField &mat, const std::vector<ForceFrame> &frames,
                                     const std::vector<PointCloud> &observations, const FitConfig &config, const Points *first_start)
        {
            EpochResult r;
            r.gradient = MaterialGradient::zero(ref.size());
            const Points *start = first_start ? first_start : &ref.rest.positions;
            for (int t : config.frames)
            {
                const EquilibriumState st = solve_training_frame(ref, mat, frames[t], *start, config.solver, t);
                const double l = frame_loss(ref, observations[t], st);
                r.per_frame.push_back(l);
                r.loss += l;
                r.gradient += config.grad_mode == GradMode::truncated ? loss_gradient_truncated(ref, mat, observations[t], st, config.solver)
                                                                     : loss_gradient_ift(ref, mat, observations[t], st);
                r.solutions.push_back(st.y);
                start = &r.solutions.back();
            }
            return r;
        }

        inline MaterialField initial_material(const ReferenceModel &ref, const std::vector<ForceFrame> &frames,
                                              const std::vector<PointCloud> &observations, const FitConfig &config)
        {
            double log_mu = 0.0, log_lambda = 0.0;
            if (!config.init_log_mu || !config.init_log_lambda)
            {
                const int t0 = config.frames.front();
                const double s = std::log(estimate_stiffness(ref, frames[t0], observations[t0], config.solver));
                log_mu = log_lambda = s;
            }
            if (config.init_log_mu)
                log_mu = *config.init_log_mu;
            if (config.init_log_lambda)
                log_lambda = *config.init_log_lambda;
            return MaterialField::uniform(ref.size(), std::exp(log_mu), std::exp(log_lambda));
        }

        inline FitReport fit(const ReferenceModel &ref, const std::vector<ForceFrame> &frames_in, const std::vector<PointCloud> &observations,
                             const FitConfig &config, bool homogeneous)
        {
            require(frames_in.size() == observations.size(), "fit: frame and observation counts differ");
            config.validate(static_cast<int>(frames_in.size()));
            for (const auto &o : observations)
                require(o.size() == ref.size(), "fit: observation does not correspond to the reference cloud");

            FitReport report;
            report.homogeneous = homogeneous;
            MaterialField mat = initial_material(ref, frames_in, observations, config);
            report.initial = mat;

            // Penalties stay fixed at their initial values so the objective
            // only depends on the material through the elastic energy.
            std::vector<ForceFrame> frames = frames_in;
            for (int t : config.frames)
                frames[t] = resolve_penalties(ref, mat, frames[t]);

            const int n = ref.size();
            Adam adam(homogeneous ? 2 : 2 * n);
            double best = std::numeric_limits<double>::infinity();
            std::vector<double> best_history;
            std::optional<Points> first_start;

            for (int epoch = 0; epoch < config.max_epochs; ++epoch)
            {
                EpochResult r = run_epoch(ref, mat, frames, observations, config, first_start ? &*first_start : nullptr);
                if (!std::isfinite(r.loss))
                    throw SolverError("fit: non-finite loss at epoch " + std::to_string(epoch));
                report.loss_history.push_back(r.loss);
                if (r.loss < best)
                {
                    best = r.loss;
                    report.material = mat;
                    report.per_frame_residuals = r.per_frame;
                    report.best_epoch = epoch;
                }
                best_history.push_back(best);
                report.epochs = epoch + 1;
                first_start = std::move(r.solutions.front());

                const int p = config.plateau_epochs;
                if (epoch >= p && best_history[epoch - p] - best <= config.plateau_rel * best_history[epoch - p])
                    break;
                if (epoch + 1 == config.max_epochs)
                    break;

                Eigen::VectorXd g(homogeneous ? 2 : 2 * n);
                if (homogeneous)
                    g << r.gradient.log_mu.sum(), r.gradient.log_lambda.sum();
                else
                    g << r.gradient.log_mu, r.gradient.log_lambda;
                const Eigen::VectorXd step = adam.update(g, config);
                if (homogeneous)
                {
                    mat.log_mu.array() += step(0);
                    mat.log_lambda.array() += step(1);
                }
                else
                {
                    mat.log_mu += step.head(n);
                    mat.log_lambda += step.tail(n);
                }
            }
            report.final_loss = best;
            return report;
        }
    } // namespace detail

    /// Per-point Lame fields minimizing the summed training loss with Adam in log space.
    inline FitReport fit_material(const ReferenceModel &ref, const std::vector<ForceFrame> &frames, const std::vector<PointCloud> &observations,
                                  const FitConfig &config)
    {
        return detail::fit(ref, frames, observations, config, false);
    }

    /// One global (mu, lambda) pair shared by all points.
    inline FitReport fit_material_homogeneous(const ReferenceModel &ref, const std::vector<ForceFrame> &frames,
                                              const std::vector<PointCloud> &observations, const FitConfig &config)
    {
        return detail::fit(ref, frames, observations, config, true);
    }
} // namespace veo
