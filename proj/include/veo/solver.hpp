#pragma once

#include "veo/elasticity.hpp"
#include "veo/forces.hpp"
#include "veo/geometry.hpp"
#include "veo/linear_solve.hpp"
#include "veo/types.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <deque>
#include <fstream>
#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace veo
{
    struct SolverConfig
    {
        int max_newton_iters = 50;
        /// Absolute tolerance on the free-coordinate gradient norm; unset
        /// means 1e-6 * max(1, sum |f_i|) / n.
        std::optional<double> grad_tol;
        /// Multiplies the (default or explicit) tolerance.
        double tolerance_scale = 1.0;
        double armijo_c = 1e-4;
        double backtrack_beta = 0.5;
        int max_backtracks = 40;
        double cg_rel_tol = 1e-8;
        /// 0 selects 10 * 3n.
        int cg_max_iters = 0;
        LinearSolverKind linear_solver = LinearSolverKind::pcg;
        /// Newton iterates kept for sensitivity back-propagation (0 disables).
        int trace_depth = 5;
        /// JSON-lines diagnostics sink; empty disables.
        std::string trace_path;

        void validate() const
        {
            require(max_newton_iters >= 0, "max_newton_iters must be non-negative");
            require(!grad_tol || *grad_tol > 0.0, "grad_tol must be positive");
            require(tolerance_scale > 0.0, "tolerance_scale must be positive");
            require(armijo_c > 0.0 && armijo_c < 1.0, "armijo_c must lie in (0, 1)");
            require(backtrack_beta > 0.0 && backtrack_beta < 1.0, "backtrack_beta must lie in (0, 1)");
            require(cg_rel_tol > 0.0, "cg_rel_tol must be positive");
            require(cg_max_iters >= 0, "cg_max_iters must be non-negative");
            require(trace_depth >= 0, "trace_depth must be non-negative");
        }
    };

    /// One recorded Newton iterate: y_k, grad E_k, direction -H_k^{-1} grad E_k and the system H_k.
    struct NewtonRecord
    {
        Points y;
        Eigen::VectorXd gradient;
        Eigen::VectorXd direction;
        std::shared_ptr<const LinearSystem> system;
    };

    struct EquilibriumState
    {
        Points y;
        double energy = 0.0;
        double grad_norm = 0.0;
        double grad_tol = 0.0;
        int iters = 0;
        bool converged = false;
        std::string diagnostic;
        /// Energy after each accepted step, starting with the initial energy.
        std::vector<double> energy_trace;
        /// Steps accepted on gradient decrease because the energy change was below roundoff.
        int roundoff_steps = 0;
        /// Frame with penalties set and follower loads baked in.
        ForceFrame frame;
        std::deque<NewtonRecord> newton_trace;
    };

    struct TotalEnergy
    {
        double value = 0.0;
        /// Sum of uncancelled term magnitudes; bounds the roundoff in `value`.
        double magnitude = 0.0;
        Eigen::VectorXd gradient;
        BlockHessian hessian;
    };

    namespace detail
    {
        inline void require_resolved(const ForceFrame &frame)
        {
            require(frame.jets.empty(), "total_energy: frame still has unresolved follower jets");
            require(frame.attraction.empty() || frame.attraction_penalty.has_value(), "total_energy: attraction penalty is unset");
            for (const auto &s : frame.sdfs)
                require(s.penalty.has_value(), "total_energy: sdf penalty is unset");
        }

        /// Energy only; +infinity on inversion.
        inline double total_energy_value(const ReferenceModel &ref, const MaterialField &mat, const ForceFrame &frame, const Points &y,
                                         double *magnitude = nullptr)
        {
            double mag = 0.0;
            double e = 0.0;
            for (const auto &nb : ref.neighborhoods)
            {
                const DeformationGradient dg = deformation_gradient(nb, y);
                const double psi = neo_hookean_density(dg, mat.mu(nb.center), mat.lambda(nb.center));
                if (!std::isfinite(psi))
                    return std::numeric_limits<double>::infinity();
                e += nb.volume * psi;
                const double mu = mat.mu(nb.center), lambda = mat.lambda(nb.center);
                mag += nb.volume * (0.5 * mu * (dg.Ic + 3.0) + mu * std::abs(std::log(dg.J)) + 0.5 * lambda * (dg.J - 1.0) * (dg.J - 1.0));
            }
            for (int i = 0; i < ref.size(); ++i)
            {
                const double w = frame.forces.col(i).dot(y.col(i) - ref.rest[i]);
                e -= w;
                mag += std::abs(w);
            }
            for (const auto &a : frame.attraction)
            {
                const double t = *frame.attraction_penalty * (y.col(a.id) - a.target).squaredNorm();
                e += t;
                mag += t;
            }
            for (const auto &s : frame.sdfs)
            {
                const double c = contact_energy(s, *s.penalty, ref, y).energy;
                e += c;
                mag += c;
            }
            if (magnitude)
                *magnitude = mag;
            return e;
        }
    } // namespace detail

    /**
     * E = E_NH + E_W + E_A + E_c with its gradient and (optionally projected) Hessian.
     *
     * The work term enters as -sum f_i . (y_i - x_i), so forces push points
     * along f_i; measuring from the rest pose only shifts E by a constant.
     */
    inline TotalEnergy total_energy(const ReferenceModel &ref, const MaterialField &mat, const ForceFrame &frame, const Points &y,
                                    bool project = true)
    {
        require(y.cols() == ref.size(), "total_energy: configuration size mismatch");
        frame.validate(ref.size());
        detail::require_resolved(frame);

        TotalEnergy out;
        EnergyReport el = elastic_gradient_hessian(ref, mat, y, project);
        out.value = detail::total_energy_value(ref, mat, frame, y, &out.magnitude);
        out.gradient = std::move(el.gradient);
        out.hessian = std::move(el.hessian);

        out.gradient -= flat(frame.forces);
        for (const auto &a : frame.attraction)
        {
            const double alpha = *frame.attraction_penalty;
            out.gradient.segment<3>(3 * a.id) += 2.0 * alpha * (y.col(a.id) - a.target);
            out.hessian.point_blocks[a.id] += 2.0 * alpha * Mat3::Identity();
        }
        for (const auto &s : frame.sdfs)
        {
            out.gradient += contact_energy(s, *s.penalty, ref, y).gradient;
            add_contact_hessian(s, *s.penalty, ref, y, out.hessian.point_blocks);
        }
        return out;
    }

    /// 1e-6 * max(1, sum_i |f_i|) / n.
    inline double default_grad_tol(const ForceFrame &frame)
    {
        const double total = frame.forces.colwise().norm().sum();
        return 1e-6 * std::max(1.0, total) / static_cast<double>(frame.forces.cols());
    }

    /// 1 for free coordinates, 0 for pinned ones.
    inline Eigen::VectorXd free_mask(const ForceFrame &frame, int n)
    {
        Eigen::VectorXd m = Eigen::VectorXd::Ones(3 * n);
        for (const auto &p : frame.pinned)
            m.segment<3>(3 * p.id).setZero();
        return m;
    }

    /// Sparse Hessian with pinned rows/columns replaced by identity.
    inline Eigen::SparseMatrix<double> eliminate_pinned(const Eigen::SparseMatrix<double> &h, const Eigen::VectorXd &free)
    {
        std::vector<Eigen::Triplet<double>> t;
        t.reserve(h.nonZeros() + h.rows());
        for (int c = 0; c < h.outerSize(); ++c)
            for (Eigen::SparseMatrix<double>::InnerIterator it(h, c); it; ++it)
                if (free(it.row()) != 0.0 && free(it.col()) != 0.0)
                    t.emplace_back(it.row(), it.col(), it.value());
        for (int i = 0; i < h.rows(); ++i)
            if (free(i) == 0.0)
                t.emplace_back(i, i, 1.0);
        Eigen::SparseMatrix<double> out(h.rows(), h.cols());
        out.setFromTriplets(t.begin(), t.end());
        return out;
    }

    inline std::shared_ptr<const LinearSystem> make_linear_system(const BlockHessian &h, const Eigen::VectorXd &free, const SolverConfig &config)
    {
        const int max_iters = config.cg_max_iters > 0 ? config.cg_max_iters : 10 * h.dofs();
        return std::make_shared<const LinearSystem>(eliminate_pinned(h.assemble(), free), config.linear_solver, config.cg_rel_tol, max_iters);
    }

    /// Prepares a frame for solving: penalties resolved, follower jets evaluated at y.
    inline ForceFrame prepare_frame(const ReferenceModel &ref, const MaterialField &mat, const ForceFrame &frame, const Points &y)
    {
        frame.validate(ref.size());
        return resolve_follower_loads(ref, resolve_penalties(ref, mat, frame), y);
    }

    namespace detail
    {
        class TraceSink
        {
        public:
            explicit TraceSink(const std::string &path)
            {
                if (!path.empty())
                    out_.open(path, std::ios::app);
            }

            void write(int frame, int iter, double energy, double grad_norm, double step)
            {
                if (!out_.is_open())
                    return;
                nlohmann::json j{{"frame", frame}, {"iteration", iter}, {"energy", energy}, {"grad_norm", grad_norm}, {"step", step}};
                out_ << j.dump() << '\n';
            }

        private:
            std::ofstream out_;
        };
    } // namespace detail

    /**
     * Projected-Newton minimization of the total energy for one frame.
     *
     * Pinned points are held at their prescribed positions by eliminating
     * their coordinates. Each step solves H d = -grad E on the free
     * coordinates and backtracks until the Armijo condition holds.
     */
    inline EquilibriumState solve_equilibrium(const ReferenceModel &ref, const MaterialField &mat, const ForceFrame &frame_in,
                                              const Points &y_init, const SolverConfig &config = {}, int frame_index = -1)
    {
        config.validate();
        mat.validate(ref.size());
        require(y_init.cols() == ref.size(), "solve_equilibrium: initial configuration size mismatch");

        EquilibriumState st;
        st.frame = prepare_frame(ref, mat, frame_in, y_init);
        const ForceFrame &frame = st.frame;
        st.grad_tol = config.grad_tol.value_or(default_grad_tol(frame)) * config.tolerance_scale;
        detail::TraceSink sink(config.trace_path);

        Points y = y_init;
        for (const auto &p : frame.pinned)
            y.col(p.id) = p.position;
        const Eigen::VectorXd free = free_mask(frame, ref.size());

        double magnitude = 0.0;
        double energy = detail::total_energy_value(ref, mat, frame, y, &magnitude);
        if (!std::isfinite(energy))
            throw SolverError("non-finite energy at initial configuration" + (frame_index >= 0 ? " of frame " + std::to_string(frame_index) : ""));

        TotalEnergy te = total_energy(ref, mat, frame, y, true);
        Eigen::VectorXd grad = te.gradient.cwiseProduct(free);
        st.energy_trace.push_back(energy);
        sink.write(frame_index, 0, energy, grad.norm(), 0.0);

        for (;;)
        {
            st.grad_norm = grad.norm();
            if (st.grad_norm <= st.grad_tol)
            {
                st.converged = true;
                break;
            }
            if (st.iters >= config.max_newton_iters)
            {
                st.diagnostic = "reached max_newton_iters=" + std::to_string(config.max_newton_iters);
                break;
            }

            auto system = make_linear_system(te.hessian, free, config);
            LinearSolveStats ls;
            Eigen::VectorXd dir = -system->solve(grad, &ls);
            dir = dir.cwiseProduct(free);
            double slope = grad.dot(dir);
            if (!(slope < 0.0))
            {
                dir = -grad;
                slope = grad.dot(dir);
            }

            const Eigen::Map<const Points> step_dir(dir.data(), 3, ref.size());
            const bool roundoff = std::abs(slope) <= 10.0 * std::numeric_limits<double>::epsilon() * magnitude;
            double t = 1.0;
            bool accepted = false;
            Points trial;
            double trial_energy = 0.0, trial_magnitude = 0.0;
            TotalEnergy trial_te;
            if (roundoff)
            {
                // Energy differences are unresolvable here; take the full step
                // if it reduces the gradient.
                trial = y + step_dir;
                trial_energy = detail::total_energy_value(ref, mat, frame, trial, &trial_magnitude);
                if (std::isfinite(trial_energy))
                {
                    trial_te = total_energy(ref, mat, frame, trial, true);
                    if (trial_te.gradient.cwiseProduct(free).norm() < st.grad_norm)
                    {
                        accepted = true;
                        ++st.roundoff_steps;
                    }
                    else
                        trial_te = TotalEnergy{};
                }
            }
            for (int b = 0; !accepted && b <= config.max_backtracks; ++b)
            {
                trial = y + t * step_dir;
                trial_energy = detail::total_energy_value(ref, mat, frame, trial, &trial_magnitude);
                if (std::isfinite(trial_energy) && trial_energy <= energy + config.armijo_c * t * slope)
                {
                    accepted = true;
                    break;
                }
                t *= config.backtrack_beta;
            }
            if (!accepted)
            {
                st.diagnostic = "line search failed after " + std::to_string(config.max_backtracks) + " backtracks at iteration " + std::to_string(st.iters);
                break;
            }

            if (config.trace_depth > 0)
            {
                st.newton_trace.push_back({y, grad, dir, system});
                if (static_cast<int>(st.newton_trace.size()) > config.trace_depth)
                    st.newton_trace.pop_front();
            }

            y = std::move(trial);
            energy = trial_energy;
            magnitude = trial_magnitude;
            ++st.iters;
            te = trial_te.gradient.size() ? std::move(trial_te) : total_energy(ref, mat, frame, y, true);
            grad = te.gradient.cwiseProduct(free);
            st.energy_trace.push_back(energy);
            sink.write(frame_index, st.iters, energy, grad.norm(), t);
        }

        st.y = std::move(y);
        st.energy = energy;
        return st;
    }

    /// Solves frames in order; frame 0 starts at rest, frame t at state t-1.
    inline std::vector<EquilibriumState> solve_sequence(const ReferenceModel &ref, const MaterialField &mat,
                                                        const std::vector<ForceFrame> &frames, const SolverConfig &config = {})
    {
        require(!frames.empty(), "solve_sequence: empty frame list");
        std::vector<EquilibriumState> out;
        out.reserve(frames.size());
        const Points *start = &ref.rest.positions;
        for (std::size_t t = 0; t < frames.size(); ++t)
        {
            out.push_back(solve_equilibrium(ref, mat, frames[t], *start, config, static_cast<int>(t)));
            start = &out.back().y;
        }
        return out;
    }
} // namespace veo
