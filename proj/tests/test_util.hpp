#pragma once

#include "veo/geometry.hpp"
#include "veo/elasticity.hpp"

#include <Eigen/Geometry>

#include <cmath>
#include <random>
#include <vector>

namespace veo::testing
{
    inline Points random_cloud(int n, std::mt19937_64 &rng, double extent = 1.0)
    {
        std::uniform_real_distribution<double> u(0.0, extent);
        Points p(3, n);
        for (int i = 0; i < n; ++i)
            p.col(i) = Vec3(u(rng), u(rng), u(rng));
        return p;
    }

    /// Jittered lattice, x fastest.
    inline Points lattice(int nx, int ny, int nz, double h, double jitter, std::mt19937_64 &rng)
    {
        std::uniform_real_distribution<double> u(-jitter, jitter);
        Points p(3, nx * ny * nz);
        int c = 0;
        for (int k = 0; k < nz; ++k)
            for (int j = 0; j < ny; ++j)
                for (int i = 0; i < nx; ++i)
                    p.col(c++) = Vec3(i * h + u(rng), j * h + u(rng), k * h + u(rng));
        return p;
    }

    inline Points axis_cross()
    {
        Points p(3, 7);
        p.col(0) = Vec3::Zero();
        p.col(1) = Vec3::UnitX();
        p.col(2) = -Vec3::UnitX();
        p.col(3) = Vec3::UnitY();
        p.col(4) = -Vec3::UnitY();
        p.col(5) = Vec3::UnitZ();
        p.col(6) = -Vec3::UnitZ();
        return p;
    }

    inline Mat3 random_rotation(std::mt19937_64 &rng)
    {
        std::normal_distribution<double> g;
        Eigen::Quaterniond q(g(rng), g(rng), g(rng), g(rng));
        q.normalize();
        return q.toRotationMatrix();
    }

    inline Points perturb(const Points &p, double scale, std::mt19937_64 &rng)
    {
        std::normal_distribution<double> g(0.0, scale);
        Points out = p;
        for (Eigen::Index i = 0; i < out.size(); ++i)
            out.data()[i] += g(rng);
        return out;
    }

    /// Random affine map of size `amp` plus small per-point noise.
    inline Points smooth_deform(const Points &p, double amp, double noise, std::mt19937_64 &rng)
    {
        std::uniform_real_distribution<double> u(-amp, amp);
        Mat3 a;
        for (int i = 0; i < 9; ++i)
            a.data()[i] = u(rng);
        const Vec3 c = p.rowwise().mean();
        Points out = p + a * (p.colwise() - c);
        return perturb(out, noise, rng);
    }

    inline MaterialField random_material(int n, std::mt19937_64 &rng, double mu = 1e3, double lambda = 2e3)
    {
        std::uniform_real_distribution<double> u(-0.5, 0.5);
        MaterialField m = MaterialField::uniform(n, mu, lambda);
        for (int i = 0; i < n; ++i)
        {
            m.log_mu(i) += u(rng);
            m.log_lambda(i) += u(rng);
        }
        return m;
    }

    /// Jittered lattice bar along x with every lattice-boundary point on the surface.
    struct Bar
    {
        ReferenceModel ref;
        std::vector<int> clamped; // x = 0 face
        std::vector<int> tip;     // x = max face
    };

    inline Bar make_bar(int nx, int ny, int nz, double h, double mass, std::uint64_t seed, double jitter = 0.05)
    {
        std::mt19937_64 rng(seed);
        const Points p = lattice(nx, ny, nz, h, jitter * h, rng);
        std::vector<bool> surface(p.cols());
        Bar bar;
        for (int c = 0; c < p.cols(); ++c)
        {
            const int i = c % nx, j = (c / nx) % ny, k = c / (nx * ny);
            surface[c] = i == 0 || j == 0 || k == 0 || i == nx - 1 || j == ny - 1 || k == nz - 1;
            if (i == 0)
                bar.clamped.push_back(c);
            if (i == nx - 1)
                bar.tip.push_back(c);
        }
        bar.ref = build_reference(PointCloud(p), mass, surface);
        return bar;
    }

    /// Central finite-difference gradient of f over the flat coordinates of y.
    template <typename F>
    Eigen::VectorXd fd_gradient(F &&f, const Points &y, double h)
    {
        Eigen::VectorXd g(y.size());
        Points yp = y;
        for (Eigen::Index k = 0; k < y.size(); ++k)
        {
            const double orig = yp.data()[k];
            yp.data()[k] = orig + h;
            const double ep = f(yp);
            yp.data()[k] = orig - h;
            const double em = f(yp);
            yp.data()[k] = orig;
            g(k) = (ep - em) / (2.0 * h);
        }
        return g;
    }

    inline double rel_error(const Eigen::VectorXd &a, const Eigen::VectorXd &b)
    {
        return (a - b).norm() / std::max(b.norm(), 1e-300);
    }

    inline double cosine(const Eigen::VectorXd &a, const Eigen::VectorXd &b)
    {
        return a.dot(b) / (a.norm() * b.norm());
    }
} // namespace veo::testing
