#pragma once

#include <Eigen/Core>

#include <cstddef>
#include <stdexcept>
#include <string>

namespace veo
{
    using Vec3 = Eigen::Vector3d;
    using Mat3 = Eigen::Matrix3d;

    /// Column-per-point coordinate storage (3 x n). Flat 3n views map onto
    /// the same memory with x, y, z of point i at 3i, 3i+1, 3i+2.
    using Points = Eigen::Matrix3Xd;

    inline Eigen::Map<Eigen::VectorXd> flat(Points &p) { return {p.data(), p.size()}; }
    inline Eigen::Map<const Eigen::VectorXd> flat(const Points &p) { return {p.data(), p.size()}; }

    inline Points unflatten(const Eigen::VectorXd &v)
    {
        return Eigen::Map<const Points>(v.data(), 3, v.size() / 3);
    }

    /// Input violates a documented precondition (bad sizes, ids, malformed files).
    class ValidationError : public std::runtime_error
    {
    public:
        using std::runtime_error::runtime_error;
    };

    /// A numerical procedure could not produce a usable result.
    class SolverError : public std::runtime_error
    {
    public:
        using std::runtime_error::runtime_error;
    };

    inline void require(bool cond, const std::string &msg)
    {
        if (!cond)
            throw ValidationError(msg);
    }
} // namespace veo
