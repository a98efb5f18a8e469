#pragma once

#include "veo/kdtree.hpp"
#include "veo/types.hpp"

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <string>
#include <vector>

namespace veo
{
    /// Number of neighbors in every deformation-gradient stencil.
    inline constexpr int stencil_neighbors = 6;
    /// Points per stencil (center plus neighbors).
    inline constexpr int stencil_points = stencil_neighbors + 1;

    /// Point set with implicit contiguous ids 0..n-1.
    struct PointCloud
    {
        Points positions;

        PointCloud() = default;
        explicit PointCloud(Points p) : positions(std::move(p)) {}

        int size() const { return static_cast<int>(positions.cols()); }
        Vec3 operator[](int i) const { return positions.col(i); }

        void validate() const
        {
            require(size() >= 4, "point cloud needs at least 4 points, got " + std::to_string(size()));
            require(positions.allFinite(), "point cloud has non-finite coordinates");
        }

        bool operator==(const PointCloud &o) const
        {
            return positions.cols() == o.positions.cols() && positions == o.positions;
        }
    };

    inline double bounding_diagonal(const Points &p)
    {
        if (p.cols() == 0)
            return 0.0;
        return (p.rowwise().maxCoeff() - p.rowwise().minCoeff()).norm();
    }

    /// Exact k nearest points to `query`, ascending by distance, ties by lower id.
    inline std::vector<NeighborHit> knn(const PointCloud &cloud, const Vec3 &query, int k)
    {
        require(k <= cloud.size(), "knn: k=" + std::to_string(k) + " exceeds point count " + std::to_string(cloud.size()));
        return KdTree(cloud.positions).query(query, k);
    }

    /**
     * Weighted least-squares stencil around one rest point.
     *
     * `shape[k]` holds the per-point vectors c_k such that the deformation
     * gradient is F = sum_k y_k c_k^T over the stencil points (center first).
     * They satisfy sum_k c_k = 0, so F ignores rigid translation.
     */
    struct Neighborhood
    {
        int center = -1;
        std::array<int, stencil_neighbors> neighbors{};
        std::array<double, stencil_neighbors> weights{};
        double volume = 0.0;
        Mat3 moment_inverse = Mat3::Zero();
        bool regularized = false;

        std::array<Vec3, stencil_points> shape{};

        int point(int k) const { return k == 0 ? center : neighbors[k - 1]; }
    };

    struct ReferenceModel
    {
        PointCloud rest;
        std::vector<Neighborhood> neighborhoods;
        double total_mass = 0.0;
        Eigen::VectorXd point_masses;
        std::vector<bool> surface_mask;
        double diameter = 0.0;

        int size() const { return rest.size(); }
        int dofs() const { return 3 * rest.size(); }

        double mean_volume() const
        {
            double s = 0.0;
            for (const auto &n : neighborhoods)
                s += n.volume;
            return neighborhoods.empty() ? 0.0 : s / neighborhoods.size();
        }

        double min_volume() const
        {
            double v = std::numeric_limits<double>::infinity();
            for (const auto &n : neighborhoods)
                v = std::min(v, n.volume);
            return v;
        }
    };

    /// Compact polynomial kernel (1 - (r/h)^2)^3, clamped at zero outside the support.
    inline double kernel_weight(double r, double support)
    {
        const double q = 1.0 - (r / support) * (r / support);
        return q > 0.0 ? q * q * q : 0.0;
    }

    /// Support radius relative to the distance of the farthest stencil neighbor.
    inline constexpr double support_scale = 1.1;
    /// Relative Tikhonov shift for rank-deficient moment matrices.
    inline constexpr double moment_regularization = 1e-6;

    /// sum_j w_j d_j d_j^T for offsets d_j = x_i - x_j.
    inline Mat3 moment_matrix(const std::array<Vec3, stencil_neighbors> &offsets,
                              const std::array<double, stencil_neighbors> &weights)
    {
        Mat3 m = Mat3::Zero();
        for (int j = 0; j < stencil_neighbors; ++j)
            m.noalias() += weights[j] * offsets[j] * offsets[j].transpose();
        return m;
    }

    namespace detail
    {
        inline Neighborhood make_neighborhood(const PointCloud &rest, const KdTree &tree, int i)
        {
            Neighborhood nb;
            nb.center = i;
            const Vec3 xi = rest[i];

            // k = 7 includes the center itself at distance 0; drop it explicitly
            // since coincident duplicates could otherwise displace it.
            auto hits = tree.query(xi, stencil_points);
            std::array<double, stencil_neighbors> dist{};
            int count = 0;
            for (const auto &h : hits)
            {
                if (h.id == i || count == stencil_neighbors)
                    continue;
                nb.neighbors[count] = h.id;
                dist[count] = h.distance;
                ++count;
            }

            const double support = support_scale * dist[stencil_neighbors - 1];
            std::array<Vec3, stencil_neighbors> offsets;
            double mean_dist = 0.0;
            for (int j = 0; j < stencil_neighbors; ++j)
            {
                offsets[j] = xi - rest[nb.neighbors[j]];
                nb.weights[j] = kernel_weight(dist[j], support);
                mean_dist += dist[j];
            }
            mean_dist /= stencil_neighbors;
            nb.volume = mean_dist * mean_dist * mean_dist;
            if (!(nb.volume > 0.0) || !std::isfinite(nb.volume))
                throw ValidationError("degenerate neighborhood at point " + std::to_string(i) + ": zero volume");

            Mat3 m = moment_matrix(offsets, nb.weights);
            const double trace = m.trace();
            if (!(trace > 0.0) || !std::isfinite(trace))
                throw ValidationError("degenerate neighborhood at point " + std::to_string(i) + ": zero moment trace");

            Eigen::SelfAdjointEigenSolver<Mat3> es(m, Eigen::EigenvaluesOnly);
            if (es.eigenvalues()(0) <= 1e-12 * es.eigenvalues()(2))
            {
                m += moment_regularization * trace / 3.0 * Mat3::Identity();
                nb.regularized = true;
            }

            Mat3 inv = m.inverse();
            inv = 0.5 * (inv + inv.transpose()).eval();
            if (!inv.allFinite())
                throw ValidationError("degenerate neighborhood at point " + std::to_string(i) + ": moment matrix not invertible");
            nb.moment_inverse = inv;

            Vec3 sum = Vec3::Zero();
            for (int j = 0; j < stencil_neighbors; ++j)
            {
                const Vec3 b = nb.weights[j] * (inv * offsets[j]);
                nb.shape[j + 1] = -b;
                sum += b;
            }
            nb.shape[0] = sum;
            return nb;
        }
    } // namespace detail

    /**
     * Builds the rest-pose discretization: exact 6-NN stencils, kernel weights,
     * volumes (cube of mean neighbor distance), inverted moment matrices, and
     * volume-proportional point masses.
     */
    inline ReferenceModel build_reference(const PointCloud &rest, double total_mass, std::vector<bool> surface_mask)
    {
        require(rest.size() >= stencil_points, "insufficient points: need at least " + std::to_string(stencil_points) + ", got " + std::to_string(rest.size()));
        rest.validate();
        require(total_mass > 0.0 && std::isfinite(total_mass), "total_mass must be positive");
        require(static_cast<int>(surface_mask.size()) == rest.size(), "surface_mask length does not match point count");

        ReferenceModel ref;
        ref.rest = rest;
        ref.total_mass = total_mass;
        ref.surface_mask = std::move(surface_mask);
        ref.diameter = bounding_diagonal(rest.positions);

        const KdTree tree(rest.positions);
        ref.neighborhoods.reserve(rest.size());
        for (int i = 0; i < rest.size(); ++i)
            ref.neighborhoods.push_back(detail::make_neighborhood(rest, tree, i));

        double total_volume = 0.0;
        for (const auto &nb : ref.neighborhoods)
            total_volume += nb.volume;
        ref.point_masses.resize(rest.size());
        for (int i = 0; i < rest.size(); ++i)
            ref.point_masses(i) = total_mass * ref.neighborhoods[i].volume / total_volume;
        return ref;
    }

    inline ReferenceModel build_reference(const PointCloud &rest, double total_mass)
    {
        return build_reference(rest, total_mass, std::vector<bool>(rest.size(), true));
    }

    /// Mean distance from each point to its nearest other point.
    inline double mean_nearest_spacing(const PointCloud &cloud)
    {
        if (cloud.size() < 2)
            return 0.0;
        const KdTree tree(cloud.positions);
        double s = 0.0;
        for (int i = 0; i < cloud.size(); ++i)
        {
            const auto hits = tree.query(cloud[i], 2);
            s += hits[0].id == i ? hits[1].distance : hits[0].distance;
        }
        return s / cloud.size();
    }
} // namespace veo
