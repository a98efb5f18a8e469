#include "test_util.hpp"

#include "veo/fit.hpp"

#include <gtest/gtest.h>

using namespace veo;
using namespace veo::testing;

namespace
{
    SolverConfig tight()
    {
        SolverConfig c;
        c.grad_tol = 1e-11;
        c.linear_solver = LinearSolverKind::ldlt;
        c.max_newton_iters = 100;
        return c;
    }

    struct Instance
    {
        Bar bar;
        ForceFrame frame;
        MaterialField truth;
        MaterialField guess;
        PointCloud observed;
    };

    /// Clamped bar under gravity and a tip load, observed under `truth`, evaluated at a perturbed guess.
    Instance make_instance(std::uint64_t seed, int nx = 6, int ny = 3, int nz = 3)
    {
        Instance in;
        in.bar = make_bar(nx, ny, nz, 0.02, 0.05, seed);
        const auto &ref = in.bar.ref;
        std::mt19937_64 rng(seed);
        in.truth = random_material(ref.size(), rng, 3e3, 3e3);
        in.guess = random_material(ref.size(), rng, 5e3, 4e3);
        std::vector<PointLoad> loads;
        std::uniform_real_distribution<double> u(-1.0, 1.0);
        const Vec3 tip_force = 1e-2 * Vec3(0.2 * u(rng), 0.5 * u(rng), -1.0);
        for (int id : in.bar.tip)
            loads.push_back({id, tip_force});
        in.frame = assemble_frame(ref, Vec3(0, 0, -9.81), {}, loads, pins_at_rest(ref, in.bar.clamped), {}, {});
        const auto st = solve_equilibrium(ref, in.truth, in.frame, ref.rest.positions, tight());
        EXPECT_TRUE(st.converged);
        in.observed = PointCloud(perturb(st.y, 1e-5, rng));
        return in;
    }

    Eigen::VectorXd stack(const MaterialGradient &g)
    {
        Eigen::VectorXd v(2 * g.log_mu.size());
        v << g.log_mu, g.log_lambda;
        return v;
    }

    double loss_at(const Instance &in, const MaterialField &mat)
    {
        const auto st = solve_equilibrium(in.bar.ref, mat, in.frame, in.bar.ref.rest.positions, tight());
        EXPECT_TRUE(st.converged) << st.diagnostic;
        return frame_loss(in.bar.ref, in.observed, st);
    }

    Eigen::VectorXd fd_loss_gradient(const Instance &in, const MaterialField &mat, double h)
    {
        const int n = mat.size();
        Eigen::VectorXd g(2 * n);
        for (int p = 0; p < 2 * n; ++p)
        {
            MaterialField plus = mat, minus = mat;
            auto &vp = p < n ? plus.log_mu : plus.log_lambda;
            auto &vm = p < n ? minus.log_mu : minus.log_lambda;
            vp(p % n) += h;
            vm(p % n) -= h;
            g(p) = (loss_at(in, plus) - loss_at(in, minus)) / (2.0 * h);
        }
        return g;
    }
} // namespace

TEST(FrameLoss, ZeroAtObservation)
{
    const auto bar = make_bar(5, 3, 3, 0.02, 0.05, 1);
    EXPECT_EQ(frame_loss(bar.ref, bar.ref.rest, bar.ref.rest.positions), 0.0);
}

TEST(FrameLoss, SinglePointOffset)
{
    const auto bar = make_bar(5, 3, 3, 0.02, 0.05, 2);
    Points y = bar.ref.rest.positions;
    y.col(0) += Vec3(0.003, 0.0, 0.0);
    ASSERT_TRUE(bar.ref.surface_mask[0]);
    EXPECT_NEAR(frame_loss(bar.ref, bar.ref.rest, y), 9e-6, 1e-18);
}

TEST(FrameLoss, MatchesBruteForceOverSurface)
{
    const auto bar = make_bar(6, 4, 4, 0.02, 0.05, 3);
    std::mt19937_64 rng(3);
    const Points y = perturb(bar.ref.rest.positions, 1e-3, rng);
    const PointCloud obs(perturb(bar.ref.rest.positions, 1e-3, rng));
    double expect = 0.0;
    int interior = 0;
    for (int i = 0; i < bar.ref.size(); ++i)
    {
        if (!bar.ref.surface_mask[i])
        {
            ++interior;
            continue;
        }
        for (int a = 0; a < 3; ++a)
            expect += (y(a, i) - obs.positions(a, i)) * (y(a, i) - obs.positions(a, i));
    }
    EXPECT_GT(interior, 0);
    EXPECT_NEAR(frame_loss(bar.ref, obs, y), expect, 1e-15);
    EXPECT_THROW(frame_loss(bar.ref, PointCloud(obs.positions.leftCols(10)), y), ValidationError);
}

TEST(LossGradient, ZeroForPerfectFit)
{
    auto in = make_instance(4);
    const auto st = solve_equilibrium(in.bar.ref, in.truth, in.frame, in.bar.ref.rest.positions, tight());
    const PointCloud exact(st.y);
    EXPECT_EQ(loss_gradient_truncated(in.bar.ref, in.truth, exact, st).norm(), 0.0);
    EXPECT_EQ(loss_gradient_ift(in.bar.ref, in.truth, exact, st).norm(), 0.0);
}

TEST(LossGradient, IftMatchesFiniteDifferences)
{
    for (std::uint64_t seed : {5u, 6u})
    {
        auto in = make_instance(seed);
        const auto st = solve_equilibrium(in.bar.ref, in.guess, in.frame, in.bar.ref.rest.positions, tight());
        ASSERT_TRUE(st.converged);
        const Eigen::VectorXd ift = stack(loss_gradient_ift(in.bar.ref, in.guess, in.observed, st));
        const Eigen::VectorXd fd = fd_loss_gradient(in, in.guess, 1e-5);
        EXPECT_LT(rel_error(ift, fd), 0.05) << "seed " << seed;
    }
}

TEST(LossGradient, TruncatedAlignsWithFiniteDifferences)
{
    auto in = make_instance(7);
    const auto &ref = in.bar.ref;
    const auto st = solve_equilibrium(ref, in.guess, in.frame, ref.rest.positions, tight());
    ASSERT_TRUE(st.converged);
    const Eigen::VectorXd tr = stack(loss_gradient_truncated(ref, in.guess, in.observed, st));
    const Eigen::VectorXd fd = fd_loss_gradient(in, in.guess, 1e-5);
    EXPECT_GT(cosine(tr, fd), 0.9);
}

TEST(LossGradient, TruncatedAgreesWithIftAtTightConvergence)
{
    for (std::uint64_t seed : {8u, 9u, 10u})
    {
        auto in = make_instance(seed);
        const auto &ref = in.bar.ref;
        const auto st = solve_equilibrium(ref, in.guess, in.frame, ref.rest.positions, tight());
        ASSERT_TRUE(st.converged);
        const Eigen::VectorXd tr = stack(loss_gradient_truncated(ref, in.guess, in.observed, st));
        const Eigen::VectorXd ift = stack(loss_gradient_ift(ref, in.guess, in.observed, st));
        EXPECT_GT(cosine(tr, ift), 0.95) << "seed " << seed;
    }
}

TEST(LossGradient, RepeatSolveWithoutStepsReducesToIft)
{
    auto in = make_instance(11);
    const auto &ref = in.bar.ref;
    const auto first = solve_equilibrium(ref, in.guess, in.frame, ref.rest.positions, tight());
    const auto again = solve_equilibrium(ref, in.guess, in.frame, first.y, tight());
    ASSERT_EQ(again.iters, 0);
    const Eigen::VectorXd tr = stack(loss_gradient_truncated(ref, in.guess, in.observed, again, tight()));
    const Eigen::VectorXd ift = stack(loss_gradient_ift(ref, in.guess, in.observed, again));
    EXPECT_GT(cosine(tr, ift), 0.99);
}

TEST(LossGradient, IftRejectsUnconvergedState)
{
    auto in = make_instance(12);
    SolverConfig c = tight();
    c.max_newton_iters = 1;
    const auto st = solve_equilibrium(in.bar.ref, in.guess, in.frame, in.bar.ref.rest.positions, c);
    ASSERT_FALSE(st.converged);
    EXPECT_THROW(loss_gradient_ift(in.bar.ref, in.guess, in.observed, st), SolverError);
}

TEST(LossGradient, MissingTraceRejected)
{
    auto in = make_instance(13);
    auto st = solve_equilibrium(in.bar.ref, in.guess, in.frame, in.bar.ref.rest.positions, tight());
    ASSERT_GT(st.iters, 0);
    st.newton_trace.clear();
    EXPECT_THROW(loss_gradient_truncated(in.bar.ref, in.guess, in.observed, st), ValidationError);
}

namespace
{
    struct Sequence
    {
        Bar bar;
        std::vector<ForceFrame> frames;
        std::vector<PointCloud> observed;
    };

    Sequence make_sequence(const MaterialField &truth, const Bar &bar, int count, double noise, std::uint64_t seed)
    {
        Sequence s{bar, {}, {}};
        const auto &ref = bar.ref;
        for (int t = 0; t < count; ++t)
        {
            const double angle = 0.4 * t;
            std::vector<PointLoad> loads;
            for (int id : bar.tip)
                loads.push_back({id, 5e-3 * Vec3(0.0, std::sin(angle), -std::cos(angle))});
            s.frames.push_back(assemble_frame(ref, Vec3(0, 0, -9.81), {}, loads, pins_at_rest(ref, bar.clamped), {}, {}));
        }
        SolverConfig c;
        c.tolerance_scale = 0.1;
        const auto states = solve_sequence(ref, truth, s.frames, c);
        std::mt19937_64 rng(seed);
        for (const auto &st : states)
        {
            EXPECT_TRUE(st.converged);
            s.observed.emplace_back(perturb(st.y, noise, rng));
        }
        return s;
    }
} // namespace

TEST(Fit, GroundTruthInitStaysPut)
{
    const auto bar = make_bar(8, 3, 3, 0.02, 0.05, 20);
    const auto truth = MaterialField::uniform(bar.ref.size(), 4e3, 4e3);
    const auto seq = make_sequence(truth, bar, 3, 0.0, 20);
    FitConfig cfg;
    cfg.frames = {0, 1, 2};
    cfg.max_epochs = 5;
    cfg.init_log_mu = std::log(4e3);
    cfg.init_log_lambda = std::log(4e3);
    const auto rep = fit_material(bar.ref, seq.frames, seq.observed, cfg);
    EXPECT_EQ(rep.epochs, 5);
    for (int i = 0; i < bar.ref.size(); ++i)
        EXPECT_LT(std::abs(rep.material.log_mu(i) - truth.log_mu(i)), std::log(1.01));
    EXPECT_LT(rep.final_loss, 1e-10);
}

TEST(Fit, HomogeneousRecoveryFromFourfoldInit)
{
    const auto bar = make_bar(8, 3, 3, 0.02, 0.05, 21);
    const double mu = 4e3;
    const auto truth = MaterialField::uniform(bar.ref.size(), mu, mu);
    const auto seq = make_sequence(truth, bar, 4, 1e-5, 21);
    FitConfig cfg;
    cfg.frames = {0, 1, 2, 3};
    cfg.max_epochs = 80;
    cfg.init_log_mu = std::log(4.0 * mu);
    cfg.init_log_lambda = std::log(4.0 * mu);
    const auto rep = fit_material_homogeneous(bar.ref, seq.frames, seq.observed, cfg);
    EXPECT_LT(std::abs(std::log(rep.material.mean_mu() / mu)), std::log(1.25));
    EXPECT_TRUE(rep.homogeneous);
    EXPECT_EQ(rep.material.log_mu.maxCoeff(), rep.material.log_mu.minCoeff());
    EXPECT_LT(rep.final_loss, rep.loss_history.front());
    for (double l : rep.loss_history)
        EXPECT_TRUE(std::isfinite(l));
}

TEST(Fit, StiffnessEstimateFromSag)
{
    const auto bar = make_bar(8, 3, 3, 0.02, 0.05, 22);
    const double mu = 6e3;
    const auto seq = make_sequence(MaterialField::uniform(bar.ref.size(), mu, mu), bar, 1, 0.0, 22);
    const double est = estimate_stiffness(bar.ref, seq.frames[0], seq.observed[0]);
    EXPECT_LT(std::abs(std::log(est / mu)), std::log(1.5));
    // no deflection at all falls back to the default scale
    EXPECT_EQ(estimate_stiffness(bar.ref, seq.frames[0], bar.ref.rest), 1e3);
}

TEST(Fit, UnimodalLossAlongMuSweep)
{
    const auto bar = make_bar(8, 3, 3, 0.02, 0.05, 23);
    const double mu = 4e3;
    const auto seq = make_sequence(MaterialField::uniform(bar.ref.size(), mu, mu), bar, 1, 0.0, 23);
    std::vector<double> losses;
    for (int k = -6; k <= 6; ++k)
    {
        const auto mat = MaterialField::uniform(bar.ref.size(), mu * std::pow(1.2, k), mu);
        const auto st = solve_equilibrium(bar.ref, mat, seq.frames[0], bar.ref.rest.positions);
        ASSERT_TRUE(st.converged);
        losses.push_back(frame_loss(bar.ref, seq.observed[0], st));
    }
    const auto it = std::min_element(losses.begin(), losses.end());
    EXPECT_EQ(it - losses.begin(), 6);
    for (auto k = losses.begin(); k < it; ++k)
        EXPECT_GT(*k, *(k + 1));
    for (auto k = it; k + 1 < losses.end(); ++k)
        EXPECT_LT(*k, *(k + 1));
}

TEST(Fit, Deterministic)
{
    const auto bar = make_bar(6, 3, 3, 0.02, 0.05, 24);
    std::mt19937_64 rng(24);
    const auto seq = make_sequence(random_material(bar.ref.size(), rng, 4e3, 4e3), bar, 2, 1e-5, 24);
    FitConfig cfg;
    cfg.frames = {0, 1};
    cfg.max_epochs = 4;
    const auto a = fit_material(bar.ref, seq.frames, seq.observed, cfg);
    const auto b = fit_material(bar.ref, seq.frames, seq.observed, cfg);
    EXPECT_EQ(a.material, b.material);
    EXPECT_EQ(a.loss_history, b.loss_history);
    EXPECT_TRUE((a.material.log_mu.array().exp() > 0.0).all());
}

TEST(Fit, ConfigValidation)
{
    const auto bar = make_bar(6, 3, 3, 0.02, 0.05, 25);
    const auto seq = make_sequence(MaterialField::uniform(bar.ref.size(), 4e3, 4e3), bar, 2, 0.0, 25);
    FitConfig cfg;
    EXPECT_THROW(fit_material(bar.ref, seq.frames, seq.observed, cfg), ValidationError);
    cfg.frames = {0, 5};
    EXPECT_THROW(fit_material(bar.ref, seq.frames, seq.observed, cfg), ValidationError);
    cfg.frames = {1, 0};
    EXPECT_THROW(fit_material(bar.ref, seq.frames, seq.observed, cfg), ValidationError);
    cfg.frames = {0};
    cfg.adam_beta1 = 1.0;
    EXPECT_THROW(fit_material(bar.ref, seq.frames, seq.observed, cfg), ValidationError);
    EXPECT_THROW(grad_mode_from_string("exact"), ValidationError);
}
