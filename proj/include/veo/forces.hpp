#pragma once

#include "veo/elasticity.hpp"
#include "veo/geometry.hpp"
#include "veo/types.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace veo
{
    enum class SdfKind
    {
        sphere,
        plane,
        box
    };

    /// Signed distance field of a rigid secondary object; negative inside.
    struct SdfShape
    {
        SdfKind kind = SdfKind::sphere;
        Vec3 center = Vec3::Zero();       // sphere, box
        double radius = 1.0;              // sphere
        Vec3 point = Vec3::Zero();        // plane
        Vec3 normal = Vec3::UnitZ();      // plane
        Vec3 half_extents = Vec3::Ones(); // box
        /// Penalty stiffness alpha_c; unset means "derive from material".
        std::optional<double> penalty;

        static SdfShape sphere(const Vec3 &c, double r, std::optional<double> penalty = {})
        {
            SdfShape s;
            s.kind = SdfKind::sphere;
            s.center = c;
            s.radius = r;
            s.penalty = penalty;
            return s;
        }

        static SdfShape plane(const Vec3 &p, const Vec3 &n, std::optional<double> penalty = {})
        {
            SdfShape s;
            s.kind = SdfKind::plane;
            s.point = p;
            s.normal = n;
            s.penalty = penalty;
            return s;
        }

        static SdfShape box(const Vec3 &c, const Vec3 &h, std::optional<double> penalty = {})
        {
            SdfShape s;
            s.kind = SdfKind::box;
            s.center = c;
            s.half_extents = h;
            s.penalty = penalty;
            return s;
        }

        void validate() const
        {
            switch (kind)
            {
            case SdfKind::sphere:
                require(radius > 0.0, "sdf sphere radius must be positive");
                break;
            case SdfKind::plane:
                require(std::abs(normal.norm() - 1.0) < 1e-9, "sdf plane normal must be unit length");
                break;
            case SdfKind::box:
                require((half_extents.array() > 0.0).all(), "sdf box half extents must be positive");
                break;
            }
            require(!penalty || *penalty > 0.0, "sdf penalty must be positive");
        }

        bool operator==(const SdfShape &) const = default;
    };

    inline double sdf_eval(const SdfShape &s, const Vec3 &p)
    {
        switch (s.kind)
        {
        case SdfKind::sphere:
            return (p - s.center).norm() - s.radius;
        case SdfKind::plane:
            return s.normal.dot(p - s.point);
        case SdfKind::box:
        {
            const Vec3 q = (p - s.center).cwiseAbs() - s.half_extents;
            return q.cwiseMax(0.0).norm() + std::min(q.maxCoeff(), 0.0);
        }
        }
        return 0.0;
    }

    inline Vec3 sdf_gradient(const SdfShape &s, const Vec3 &p)
    {
        switch (s.kind)
        {
        case SdfKind::sphere:
        {
            const Vec3 r = p - s.center;
            const double len = r.norm();
            return len > 0.0 ? Vec3(r / len) : Vec3::UnitZ();
        }
        case SdfKind::plane:
            return s.normal;
        case SdfKind::box:
        {
            const Vec3 rel = p - s.center;
            const Vec3 sign = rel.unaryExpr([](double v) { return v < 0.0 ? -1.0 : 1.0; });
            const Vec3 q = rel.cwiseAbs() - s.half_extents;
            const Vec3 outside = q.cwiseMax(0.0);
            const double len = outside.norm();
            if (len > 0.0)
                return sign.cwiseProduct(outside) / len;
            int axis;
            q.maxCoeff(&axis);
            return sign(axis) * Vec3::Unit(axis);
        }
        }
        return Vec3::Zero();
    }

    /// Second derivative of the signed distance (zero for plane and box interiors).
    inline Mat3 sdf_hessian(const SdfShape &s, const Vec3 &p)
    {
        if (s.kind != SdfKind::sphere)
            return Mat3::Zero();
        const Vec3 r = p - s.center;
        const double len = r.norm();
        if (len == 0.0)
            return Mat3::Zero();
        const Vec3 n = r / len;
        return (Mat3::Identity() - n * n.transpose()) / len;
    }

    struct ContactTerm
    {
        double energy = 0.0;
        Eigen::VectorXd gradient;
    };

    /// Contact penalty sum_i V_i alpha_c d(y_i)^2 over penetrating points.
    inline ContactTerm contact_energy(const SdfShape &shape, double penalty, const ReferenceModel &ref, const Points &y)
    {
        ContactTerm out{0.0, Eigen::VectorXd::Zero(ref.dofs())};
        for (int i = 0; i < ref.size(); ++i)
        {
            const double d = sdf_eval(shape, y.col(i));
            if (d >= 0.0)
                continue;
            const double v = ref.neighborhoods[i].volume;
            out.energy += v * penalty * d * d;
            out.gradient.segment<3>(3 * i) += 2.0 * v * penalty * d * sdf_gradient(shape, y.col(i));
        }
        return out;
    }

    inline ContactTerm contact_energy(const SdfShape &shape, const ReferenceModel &ref, const Points &y)
    {
        shape.validate();
        require(shape.penalty.has_value(), "contact_energy: sdf penalty is unset");
        return contact_energy(shape, *shape.penalty, ref, y);
    }

    /// Adds the (PSD-clamped) per-point contact Hessian blocks.
    inline void add_contact_hessian(const SdfShape &shape, double penalty, const ReferenceModel &ref, const Points &y,
                                    std::vector<Mat3> &point_blocks)
    {
        for (int i = 0; i < ref.size(); ++i)
        {
            const Vec3 p = y.col(i);
            const double d = sdf_eval(shape, p);
            if (d >= 0.0)
                continue;
            const double v = ref.neighborhoods[i].volume;
            const Vec3 n = sdf_gradient(shape, p);
            Mat3 h = 2.0 * v * penalty * (n * n.transpose() + d * sdf_hessian(shape, p));
            Eigen::SelfAdjointEigenSolver<Mat3> es(h);
            if (es.eigenvalues()(0) < 0.0)
                h = es.eigenvectors() * es.eigenvalues().cwiseMax(0.0).asDiagonal() * es.eigenvectors().transpose();
            point_blocks[i] += h;
        }
    }

    /// Synthetic air-jet cone acting on surface points in front of a nozzle.
    struct AirJet
    {
        Vec3 nozzle = Vec3::Zero();
        Vec3 direction = Vec3::UnitZ();
        double strength = 0.0;                    // N at unit distance
        double half_angle = 0.3;                  // rad
        double falloff_power = 2.0;
        double min_distance = 0.01;               // m

        void validate() const
        {
            require(std::abs(direction.norm() - 1.0) < 1e-9, "air jet direction must be unit length");
            require(half_angle > 0.0 && half_angle < M_PI / 2.0, "air jet half angle must lie in (0, pi/2)");
            require(strength >= 0.0, "air jet strength must be non-negative");
            require(falloff_power >= 0.0, "air jet falloff power must be non-negative");
            require(min_distance > 0.0, "air jet minimum distance must be positive");
        }

        bool operator==(const AirJet &) const = default;
    };

    inline Points air_jet_forces(const AirJet &jet, const ReferenceModel &ref, const Points &y)
    {
        jet.validate();
        Points f = Points::Zero(3, ref.size());
        const double cos_limit = std::cos(jet.half_angle);
        for (int i = 0; i < ref.size(); ++i)
        {
            if (!ref.surface_mask[i])
                continue;
            const Vec3 v = y.col(i) - jet.nozzle;
            const double r = v.norm();
            const double along = v.dot(jet.direction);
            if (!(along > 0.0) || along < cos_limit * r)
                continue;
            f.col(i) = jet.strength * jet.direction / std::pow(std::max(r, jet.min_distance), jet.falloff_power);
        }
        return f;
    }

    struct PointLoad
    {
        int id;
        Vec3 force;
        bool operator==(const PointLoad &) const = default;
    };

    struct Pin
    {
        int id;
        Vec3 position;
        bool operator==(const Pin &) const = default;
    };

    struct AttractionTarget
    {
        int id;
        Vec3 target;
        bool operator==(const AttractionTarget &) const = default;
    };

    /**
     * Loads and constraints for one time step. `forces` are fixed for the
     * frame; `jets` are follower loads evaluated once per solve at the
     * warm-start configuration and added to `forces`.
     */
    struct ForceFrame
    {
        Points forces;
        std::vector<AirJet> jets;
        std::vector<Pin> pinned;
        std::vector<AttractionTarget> attraction;
        std::optional<double> attraction_penalty;
        std::vector<SdfShape> sdfs;

        static ForceFrame empty(int n) { return ForceFrame{Points::Zero(3, n), {}, {}, {}, {}, {}}; }

        void validate(int n) const
        {
            require(forces.cols() == n, "force frame has " + std::to_string(forces.cols()) + " force vectors, expected " + std::to_string(n));
            require(forces.allFinite(), "force frame has non-finite forces");
            std::set<int> pinned_ids;
            for (const auto &p : pinned)
            {
                require(p.id >= 0 && p.id < n, "pinned id " + std::to_string(p.id) + " out of range");
                require(p.position.allFinite(), "pinned position for id " + std::to_string(p.id) + " is not finite");
                pinned_ids.insert(p.id);
            }
            std::set<int> attracted;
            for (const auto &a : attraction)
            {
                require(a.id >= 0 && a.id < n, "attraction id " + std::to_string(a.id) + " out of range");
                require(!pinned_ids.count(a.id), "point " + std::to_string(a.id) + " is both pinned and attracted");
                require(a.target.allFinite(), "attraction target for id " + std::to_string(a.id) + " is not finite");
                attracted.insert(a.id);
            }
            require(!attraction_penalty || *attraction_penalty > 0.0, "attraction penalty must be positive");
            for (const auto &s : sdfs)
                s.validate();
            for (const auto &j : jets)
                j.validate();
        }

        bool operator==(const ForceFrame &o) const
        {
            return forces.cols() == o.forces.cols() && forces == o.forces && jets == o.jets && pinned == o.pinned &&
                   attraction == o.attraction && attraction_penalty == o.attraction_penalty && sdfs == o.sdfs;
        }
    };

    /// Pins every listed point at its rest position.
    inline std::vector<Pin> pins_at_rest(const ReferenceModel &ref, const std::vector<int> &ids)
    {
        std::vector<Pin> out;
        out.reserve(ids.size());
        for (int id : ids)
        {
            require(id >= 0 && id < ref.size(), "pinned id " + std::to_string(id) + " out of range");
            out.push_back({id, ref.rest[id]});
        }
        return out;
    }

    /**
     * Sums jet forces (evaluated at `at`), point loads, and m_i * gravity into
     * one frame and copies the constraint sets.
     */
    inline ForceFrame assemble_frame(const ReferenceModel &ref, const Vec3 &gravity, const std::vector<AirJet> &jets,
                                     const std::vector<PointLoad> &point_loads, const std::vector<Pin> &pins,
                                     const std::vector<AttractionTarget> &attraction, const std::vector<SdfShape> &sdfs,
                                     const Points *at = nullptr)
    {
        const Points &y = at ? *at : ref.rest.positions;
        require(y.cols() == ref.size(), "assemble_frame: configuration size mismatch");
        ForceFrame frame = ForceFrame::empty(ref.size());
        for (const auto &jet : jets)
            frame.forces += air_jet_forces(jet, ref, y);
        for (const auto &load : point_loads)
        {
            require(load.id >= 0 && load.id < ref.size(), "point load id " + std::to_string(load.id) + " out of range");
            frame.forces.col(load.id) += load.force;
        }
        for (int i = 0; i < ref.size(); ++i)
            frame.forces.col(i) += ref.point_masses(i) * gravity;
        frame.pinned = pins;
        frame.attraction = attraction;
        frame.sdfs = sdfs;
        frame.validate(ref.size());
        return frame;
    }

    /// Bakes follower jets into fixed forces using configuration y.
    inline ForceFrame resolve_follower_loads(const ReferenceModel &ref, ForceFrame frame, const Points &y)
    {
        for (const auto &jet : frame.jets)
            frame.forces += air_jet_forces(jet, ref, y);
        frame.jets.clear();
        return frame;
    }

    /// alpha = 1e4 * mean(mu) * mean(V) / diameter^2.
    inline double default_attraction_penalty(const ReferenceModel &ref, const MaterialField &mat)
    {
        return 1e4 * mat.mean_mu() * ref.mean_volume() / (ref.diameter * ref.diameter);
    }

    /// alpha_c = 1e3 * mean(mu).
    inline double default_contact_penalty(const MaterialField &mat) { return 1e3 * mat.mean_mu(); }

    /// Fills every unset penalty from the given material.
    inline ForceFrame resolve_penalties(const ReferenceModel &ref, const MaterialField &mat, ForceFrame frame)
    {
        if (!frame.attraction_penalty)
            frame.attraction_penalty = default_attraction_penalty(ref, mat);
        for (auto &s : frame.sdfs)
            if (!s.penalty)
                s.penalty = default_contact_penalty(mat);
        return frame;
    }
} // namespace veo
