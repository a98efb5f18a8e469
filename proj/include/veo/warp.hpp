#pragma once

#include "veo/geometry.hpp"
#include "veo/kdtree.hpp"
#include "veo/types.hpp"

#include <array>
#include <cstdint>
#include <memory>
#include <vector>

namespace veo
{
    inline constexpr int default_warp_neighbors = 5;

    /// Correspondence pair (rest x_s, deformed y_s) with spatial indices on both sides.
    class WarpField
    {
    public:
        /// mask_radius <= 0 selects twice the mean nearest-neighbor spacing of the rest cloud.
        WarpField(PointCloud rest, PointCloud deformed, int k = default_warp_neighbors, double mask_radius = 0.0)
            : rest_(std::move(rest)), deformed_(std::move(deformed)), k_(k)
        {
            rest_.validate();
            deformed_.validate();
            require(rest_.size() == deformed_.size(), "warp: rest and deformed clouds differ in size");
            require(k_ >= 1 && k_ <= rest_.size(), "warp: neighbor count must lie in [1, n]");
            mask_radius_ = mask_radius > 0.0 ? mask_radius : 2.0 * mean_nearest_spacing(rest_);
            require(std::isfinite(mask_radius_) && mask_radius_ > 0.0, "warp: mask radius must be positive");
            eta_ = 1e-9 * std::max(bounding_diagonal(rest_.positions), bounding_diagonal(deformed_.positions));
            rest_tree_ = std::make_shared<const KdTree>(rest_.positions);
            deformed_tree_ = std::make_shared<const KdTree>(deformed_.positions);
        }

        const PointCloud &rest() const { return rest_; }
        const PointCloud &deformed() const { return deformed_; }
        int k() const { return k_; }
        double mask_radius() const { return mask_radius_; }
        /// Exact-hit distance.
        double eta() const { return eta_; }
        const KdTree &rest_tree() const { return *rest_tree_; }
        const KdTree &deformed_tree() const { return *deformed_tree_; }

    private:
        PointCloud rest_, deformed_;
        int k_;
        double mask_radius_ = 0.0;
        double eta_ = 0.0;
        std::shared_ptr<const KdTree> rest_tree_, deformed_tree_;
    };

    struct WarpSample
    {
        Vec3 position;
        bool masked = false;
        bool exact_hit = false;
        /// All neighbors equidistant; weights fell back to uniform.
        bool uniform_fallback = false;
    };

    namespace detail
    {
        /**
         * Inverse-distance weights minus their minimum, normalized; uniform when
         * they all vanish. The interpolated offset is anchored at the first
         * neighbor so constant fields come back bit-for-bit.
         */
        inline WarpSample idw(const Vec3 &p, const std::vector<NeighborHit> &hits, const Points &source, const Points &target, double eta,
                              double mask_radius)
        {
            WarpSample s;
            s.masked = hits.front().distance > mask_radius;
            const int nearest = hits.front().id;
            if (hits.front().distance < eta)
            {
                s.exact_hit = true;
                s.position = target.col(nearest) + (p - source.col(nearest));
                return s;
            }
            const std::size_t k = hits.size();
            double min_w = std::numeric_limits<double>::infinity();
            std::vector<double> w(k);
            for (std::size_t j = 0; j < k; ++j)
            {
                w[j] = 1.0 / hits[j].distance;
                min_w = std::min(min_w, w[j]);
            }
            double total = 0.0;
            for (auto &wj : w)
            {
                wj -= min_w;
                total += wj;
            }
            if (!(total > 0.0))
            {
                s.uniform_fallback = true;
                std::fill(w.begin(), w.end(), 1.0);
                total = static_cast<double>(k);
            }
            const Vec3 anchor = target.col(nearest) - source.col(nearest);
            Vec3 correction = Vec3::Zero();
            for (std::size_t j = 0; j < k; ++j)
            {
                const int id = hits[j].id;
                if (id != nearest && w[j] != 0.0)
                    correction += (w[j] / total) * ((target.col(id) - source.col(id)) - anchor);
            }
            s.position = p + (anchor + correction);
            return s;
        }
    } // namespace detail

    /// Maps a deformed-space point back to rest space by IDW over the k nearest deformed points.
    inline WarpSample warp_backward(const WarpField &field, const Vec3 &p)
    {
        require(p.allFinite(), "warp: query must be finite");
        const auto hits = field.deformed_tree().query(p, field.k());
        return detail::idw(p, hits, field.deformed().positions, field.rest().positions, field.eta(), field.mask_radius());
    }

    struct GridBounds
    {
        Vec3 lo = Vec3::Zero();
        Vec3 hi = Vec3::Ones();
    };

    struct WarpGrid
    {
        GridBounds bounds;
        std::array<int, 3> resolution{2, 2, 2};
        /// p_c - p_d per node, x fastest.
        Points offsets;
        std::vector<std::uint8_t> mask;

        std::size_t nodes() const { return static_cast<std::size_t>(resolution[0]) * resolution[1] * resolution[2]; }
    };

    inline void validate_grid(const GridBounds &b, const std::array<int, 3> &res)
    {
        require(b.lo.allFinite() && b.hi.allFinite(), "warp grid: bounds must be finite");
        for (int a = 0; a < 3; ++a)
        {
            require(b.hi(a) > b.lo(a), "warp grid: degenerate bounds on axis " + std::to_string(a));
            require(res[a] >= 2, "warp grid: resolution must be at least 2 per axis");
        }
    }

    /// Coordinates of node (i, j, k).
    inline Vec3 grid_node(const GridBounds &b, const std::array<int, 3> &res, int i, int j, int k)
    {
        const std::array<int, 3> idx{i, j, k};
        Vec3 p;
        for (int a = 0; a < 3; ++a)
            p(a) = b.lo(a) + (b.hi(a) - b.lo(a)) * (static_cast<double>(idx[a]) / (res[a] - 1));
        return p;
    }

    inline WarpGrid warp_grid(const WarpField &field, const GridBounds &bounds, const std::array<int, 3> &res)
    {
        validate_grid(bounds, res);
        WarpGrid g{bounds, res, {}, {}};
        g.offsets.resize(3, static_cast<Eigen::Index>(g.nodes()));
        g.mask.resize(g.nodes());
        std::size_t c = 0;
        for (int k = 0; k < res[2]; ++k)
            for (int j = 0; j < res[1]; ++j)
                for (int i = 0; i < res[0]; ++i, ++c)
                {
                    const Vec3 p = grid_node(bounds, res, i, j, k);
                    const WarpSample s = warp_backward(field, p);
                    g.offsets.col(static_cast<Eigen::Index>(c)) = s.position - p;
                    g.mask[c] = s.masked ? 1 : 0;
                }
        return g;
    }

    struct ForwardResult
    {
        PointCloud cloud;
        /// Points farther than the mask radius from every rest point; left in place.
        std::vector<bool> flagged;
    };

    /// Carries a dense rest-space cloud along the forward offsets y_s - x_s.
    inline ForwardResult upsample_forward(const WarpField &field, const PointCloud &dense_rest)
    {
        dense_rest.validate();
        ForwardResult out{dense_rest, std::vector<bool>(dense_rest.size(), false)};
        for (int i = 0; i < dense_rest.size(); ++i)
        {
            const Vec3 p = dense_rest[i];
            const auto hits = field.rest_tree().query(p, field.k());
            const WarpSample s = detail::idw(p, hits, field.rest().positions, field.deformed().positions, field.eta(), field.mask_radius());
            if (s.masked)
                out.flagged[i] = true;
            else
                out.cloud.positions.col(i) = s.position;
        }
        return out;
    }
} // namespace veo
