#pragma once

#include "veo/elasticity.hpp"
#include "veo/forces.hpp"
#include "veo/geometry.hpp"
#include "veo/solver.hpp"
#include "veo/types.hpp"
#include "veo/warp.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <random>
#include <string>
#include <vector>

namespace veo
{
    enum class ShapeKind
    {
        bar,
        slab,
        cross
    };

    inline std::string to_string(ShapeKind s)
    {
        switch (s)
        {
        case ShapeKind::bar:
            return "bar";
        case ShapeKind::slab:
            return "slab";
        case ShapeKind::cross:
            return "cross";
        }
        return "bar";
    }

    inline ShapeKind shape_from_string(const std::string &s)
    {
        if (s == "bar")
            return ShapeKind::bar;
        if (s == "slab")
            return ShapeKind::slab;
        if (s == "cross")
            return ShapeKind::cross;
        throw ValidationError("unknown shape '" + s + "' (expected bar, slab or cross)");
    }

    /// Constant material inside an axis-aligned box given in object coordinates.
    struct Region
    {
        std::string name;
        GridBounds box;
        double mu = 1e3;
        double lambda = 1e3;

        bool contains(const Vec3 &p) const { return (p.array() >= box.lo.array()).all() && (p.array() <= box.hi.array()).all(); }

        static Region everywhere(double mu, double lambda, std::string name = "all")
        {
            return {std::move(name), {Vec3::Constant(-1e300), Vec3::Constant(1e300)}, mu, lambda};
        }
    };

    struct SynthObject
    {
        ReferenceModel ref;
        MaterialField truth;
        /// Index into the region list for every point.
        std::vector<int> region_of;
        /// Lattice coordinates of every kept node.
        std::vector<std::array<int, 3>> lattice_index;
        /// Points on the x = 0 face, the default clamp.
        std::vector<int> clamp;
        /// Points on the far x face.
        std::vector<int> tip;
        std::vector<std::string> warnings;
    };

    inline constexpr double synth_jitter = 0.05;

    /**
     * Jittered lattice object with region-wise constant material. Later
     * regions override earlier ones; a point is on the surface when one of
     * its six lattice neighbors is missing.
     */
    inline SynthObject synth_object(ShapeKind shape, const std::array<int, 3> &dims, double spacing, const std::vector<Region> &regions,
                                    double total_mass, std::uint64_t seed)
    {
        for (int a = 0; a < 3; ++a)
            require(dims[a] >= 2, "synth: every dimension needs at least 2 lattice nodes");
        require(spacing > 0.0 && std::isfinite(spacing), "synth: spacing must be positive");
        require(!regions.empty(), "synth: at least one material region is required");
        for (const auto &r : regions)
            require(r.mu > 0.0 && r.lambda > 0.0 && std::isfinite(r.mu) && std::isfinite(r.lambda),
                    "synth: region '" + r.name + "' needs positive Lame parameters");

        const auto [nx, ny, nz] = dims;
        auto keep = [&](int i, int j, int k) {
            if (i < 0 || j < 0 || k < 0 || i >= nx || j >= ny || k >= nz)
                return false;
            if (shape != ShapeKind::cross)
                return true;
            // plus-shaped footprint in the xy plane, arms as wide as the thickness
            const double half = 0.5 * (nz - 1);
            return std::abs(i - 0.5 * (nx - 1)) <= half || std::abs(j - 0.5 * (ny - 1)) <= half;
        };

        SynthObject obj;
        std::mt19937_64 rng(seed);
        std::uniform_real_distribution<double> jitter(-synth_jitter * spacing, synth_jitter * spacing);
        std::vector<Vec3> pts;
        std::vector<bool> surface;
        for (int k = 0; k < nz; ++k)
            for (int j = 0; j < ny; ++j)
                for (int i = 0; i < nx; ++i)
                {
                    if (!keep(i, j, k))
                        continue;
                    const Vec3 lattice_pos(i * spacing, j * spacing, k * spacing);
                    const double jx = jitter(rng), jy = jitter(rng), jz = jitter(rng);
                    pts.push_back(lattice_pos + Vec3(jx, jy, jz));
                    obj.lattice_index.push_back({i, j, k});
                    surface.push_back(!keep(i - 1, j, k) || !keep(i + 1, j, k) || !keep(i, j - 1, k) || !keep(i, j + 1, k) ||
                                      !keep(i, j, k - 1) || !keep(i, j, k + 1));
                    const int id = static_cast<int>(pts.size()) - 1;
                    if (i == 0)
                        obj.clamp.push_back(id);
                    if (i == nx - 1)
                        obj.tip.push_back(id);
                }

        Points p(3, static_cast<Eigen::Index>(pts.size()));
        for (std::size_t c = 0; c < pts.size(); ++c)
            p.col(static_cast<Eigen::Index>(c)) = pts[c];
        obj.ref = build_reference(PointCloud(std::move(p)), total_mass, surface);

        const int n = obj.ref.size();
        obj.region_of.assign(n, -1);
        std::vector<int> counts(regions.size(), 0);
        int overlaps = 0;
        for (int i = 0; i < n; ++i)
            for (std::size_t r = 0; r < regions.size(); ++r)
                if (regions[r].contains(obj.ref.rest[i]))
                {
                    overlaps += obj.region_of[i] >= 0;
                    obj.region_of[i] = static_cast<int>(r);
                    ++counts[r];
                }
        for (std::size_t r = 0; r < regions.size(); ++r)
            require(counts[r] > 0, "synth: region '" + regions[r].name + "' contains no points");
        for (int i = 0; i < n; ++i)
            require(obj.region_of[i] >= 0, "synth: point " + std::to_string(i) + " is not covered by any region");
        if (overlaps > 0)
            obj.warnings.push_back(std::to_string(overlaps) + " points matched several regions; the later region was used");

        obj.truth = MaterialField::uniform(n, 1.0, 1.0);
        for (int i = 0; i < n; ++i)
        {
            obj.truth.log_mu(i) = std::log(regions[obj.region_of[i]].mu);
            obj.truth.log_lambda(i) = std::log(regions[obj.region_of[i]].lambda);
        }
        return obj;
    }

    /// Nozzle moving linearly between two positions over [first, last].
    struct JetSweep
    {
        int first = 0;
        int last = 0;
        Vec3 nozzle_from = Vec3::Zero();
        Vec3 nozzle_to = Vec3::Zero();
        Vec3 direction = -Vec3::UnitZ();
        double strength = 0.0;
        double half_angle = 0.3;
        double falloff_power = 2.0;
    };

    /// Load on a point set ramping linearly from `from` to `to` over [first, last].
    struct LoadRamp
    {
        int first = 0;
        int last = 0;
        std::vector<int> ids;
        Vec3 from = Vec3::Zero();
        Vec3 to = Vec3::Zero();
    };

    struct ForceScript
    {
        Vec3 gravity{0.0, 0.0, -9.81};
        std::vector<int> pins;
        std::vector<JetSweep> jets;
        std::vector<LoadRamp> loads;
        std::vector<SdfShape> sdfs;

        void validate(int n) const
        {
            require(gravity.allFinite(), "script: gravity must be finite");
            for (int id : pins)
                require(id >= 0 && id < n, "script: pin id " + std::to_string(id) + " out of range");
            for (const auto &j : jets)
                require(j.first >= 0 && j.last >= j.first, "script: jet sweep needs 0 <= first <= last");
            for (const auto &l : loads)
            {
                require(l.first >= 0 && l.last >= l.first, "script: load ramp needs 0 <= first <= last");
                for (int id : l.ids)
                    require(id >= 0 && id < n, "script: load id " + std::to_string(id) + " out of range");
            }
        }

        /// Frame t before follower jets are evaluated.
        ForceFrame frame(const ReferenceModel &ref, int t) const
        {
            auto lerp = [t](int a, int b) { return b > a ? static_cast<double>(t - a) / (b - a) : 0.0; };
            std::vector<AirJet> active;
            for (const auto &j : jets)
                if (t >= j.first && t <= j.last)
                {
                    AirJet jet;
                    const double s = lerp(j.first, j.last);
                    jet.nozzle = (1.0 - s) * j.nozzle_from + s * j.nozzle_to;
                    jet.direction = j.direction;
                    jet.strength = j.strength;
                    jet.half_angle = j.half_angle;
                    jet.falloff_power = j.falloff_power;
                    active.push_back(jet);
                }
            std::vector<PointLoad> point_loads;
            for (const auto &l : loads)
                if (t >= l.first && t <= l.last)
                {
                    const double s = lerp(l.first, l.last);
                    for (int id : l.ids)
                        point_loads.push_back({id, (1.0 - s) * l.from + s * l.to});
                }
            ForceFrame f = assemble_frame(ref, gravity, {}, point_loads, pins_at_rest(ref, pins), {}, sdfs);
            f.jets = std::move(active);
            return f;
        }
    };

    struct DatasetMeta
    {
        std::string name = "synthetic";
        double frame_rate = 40.0;
        double noise_sigma = 0.0;
        std::uint64_t seed = 0;
        std::vector<int> train_frames;
        std::vector<int> test_frames;

        bool operator==(const DatasetMeta &) const = default;
    };

    struct Dataset
    {
        PointCloud rest;
        double total_mass = 0.0;
        std::vector<bool> surface_mask;
        /// Frames with follower loads baked in.
        std::vector<ForceFrame> frames;
        std::vector<PointCloud> observations;
        DatasetMeta meta;

        void validate() const
        {
            rest.validate();
            require(total_mass > 0.0, "dataset: total_mass must be positive");
            require(static_cast<int>(surface_mask.size()) == rest.size(), "dataset: surface mask length differs from the rest cloud");
            require(frames.size() == observations.size(), "dataset: frame and observation counts differ");
            for (std::size_t t = 0; t < frames.size(); ++t)
            {
                frames[t].validate(rest.size());
                require(observations[t].size() == rest.size(), "dataset: observation " + std::to_string(t) + " does not match the rest cloud");
            }
            for (int t : meta.train_frames)
                require(t >= 0 && t < static_cast<int>(frames.size()), "dataset: train frame out of range");
            for (int t : meta.test_frames)
                require(t >= 0 && t < static_cast<int>(frames.size()), "dataset: test frame out of range");
        }

        ReferenceModel reference() const { return build_reference(rest, total_mass, surface_mask); }

        bool operator==(const Dataset &) const = default;
    };

    /// Solver settings for ground-truth synthesis: 10x tighter than the fitting default.
    inline SolverConfig synthesis_solver_config()
    {
        SolverConfig c;
        c.tolerance_scale = 0.1;
        return c;
    }

    /// Forward-simulates the script under the true material and adds Gaussian observation noise.
    inline Dataset synth_sequence(const ReferenceModel &ref, const MaterialField &truth, const ForceScript &script, int n_frames,
                                  double noise_sigma, std::uint64_t seed, const SolverConfig &config = synthesis_solver_config())
    {
        require(n_frames >= 1, "synth: need at least one frame");
        require(noise_sigma >= 0.0 && std::isfinite(noise_sigma), "synth: noise_sigma must be non-negative");
        script.validate(ref.size());

        std::vector<ForceFrame> frames;
        frames.reserve(n_frames);
        for (int t = 0; t < n_frames; ++t)
            frames.push_back(script.frame(ref, t));
        const auto states = solve_sequence(ref, truth, frames, config);

        Dataset d;
        d.rest = ref.rest;
        d.total_mass = ref.total_mass;
        d.surface_mask = ref.surface_mask;
        d.meta.noise_sigma = noise_sigma;
        d.meta.seed = seed;
        std::mt19937_64 rng(seed);
        std::normal_distribution<double> noise(0.0, noise_sigma > 0.0 ? noise_sigma : 1.0);
        for (int t = 0; t < n_frames; ++t)
        {
            const auto &st = states[t];
            if (!st.converged)
                throw SolverError("synth: ground-truth frame " + std::to_string(t) + " did not converge: " + st.diagnostic);
            d.frames.push_back(st.frame);
            Points obs = st.y;
            if (noise_sigma > 0.0)
                for (Eigen::Index k = 0; k < obs.size(); ++k)
                    obs.data()[k] += noise(rng);
            d.observations.emplace_back(std::move(obs));
        }
        return d;
    }

    /// Linear interpolation between closest ranks, q in [0, 1].
    inline double percentile(std::vector<double> values, double q)
    {
        require(!values.empty(), "percentile of an empty list");
        require(q >= 0.0 && q <= 1.0, "percentile rank must lie in [0, 1]");
        std::sort(values.begin(), values.end());
        const double pos = q * static_cast<double>(values.size() - 1);
        const auto lo = static_cast<std::size_t>(std::floor(pos));
        const std::size_t hi = std::min(lo + 1, values.size() - 1);
        const double frac = pos - static_cast<double>(lo);
        return values[lo] + frac * (values[hi] - values[lo]);
    }

    struct DistanceReport
    {
        double average_mm = 0.0;
        double p95_mm = 0.0;
        double max_mm = 0.0;
        /// Mean masked-point distance of every frame.
        std::vector<double> frame_means_mm;
    };

    /// Per-frame mean distances over masked points, their mean and 95th percentile, and the global maximum, in millimeters.
    inline DistanceReport evaluate(const std::vector<PointCloud> &simulated, const std::vector<PointCloud> &observed,
                                   const std::vector<bool> &surface_mask)
    {
        require(!simulated.empty(), "evaluate: no frames");
        require(simulated.size() == observed.size(), "evaluate: sequence lengths differ");
        const auto masked = std::count(surface_mask.begin(), surface_mask.end(), true);
        require(masked > 0, "evaluate: mask selects no points");
        DistanceReport r;
        double global_max = 0.0;
        for (std::size_t t = 0; t < simulated.size(); ++t)
        {
            require(simulated[t].size() == observed[t].size() && simulated[t].size() == static_cast<int>(surface_mask.size()),
                    "evaluate: frame " + std::to_string(t) + " does not match the mask");
            double sum = 0.0;
            for (int i = 0; i < simulated[t].size(); ++i)
                if (surface_mask[i])
                {
                    const double d = (simulated[t][i] - observed[t][i]).norm();
                    sum += d;
                    global_max = std::max(global_max, d);
                }
            r.frame_means_mm.push_back(1e3 * sum / static_cast<double>(masked));
        }
        double total = 0.0;
        for (double m : r.frame_means_mm)
            total += m;
        r.average_mm = total / static_cast<double>(r.frame_means_mm.size());
        r.p95_mm = percentile(r.frame_means_mm, 0.95);
        r.max_mm = 1e3 * global_max;
        return r;
    }

    /**
     * Clamped object swept by a jet along its length while a tip load swings
     * sideways; gravity throughout.
     */
    inline ForceScript default_script(const SynthObject &obj, int n_frames, double jet_strength, double tip_load)
    {
        const Points &x = obj.ref.rest.positions;
        const Vec3 lo = x.rowwise().minCoeff(), hi = x.rowwise().maxCoeff();
        const Vec3 mid = 0.5 * (lo + hi);
        const double height = 0.5 * (hi - lo).norm();
        ForceScript s;
        s.pins = obj.clamp;
        const int last = std::max(0, n_frames - 1);
        JetSweep sweep;
        sweep.first = 0;
        sweep.last = last;
        sweep.nozzle_from = Vec3(lo.x(), mid.y(), hi.z() + height);
        sweep.nozzle_to = Vec3(hi.x(), mid.y(), hi.z() + height);
        sweep.direction = -Vec3::UnitZ();
        sweep.strength = jet_strength;
        sweep.half_angle = 0.35;
        s.jets.push_back(sweep);
        if (tip_load != 0.0 && !obj.tip.empty())
        {
            const double per_point = tip_load / static_cast<double>(obj.tip.size());
            s.loads.push_back({0, last / 2, obj.tip, Vec3(0, -per_point, 0), Vec3(0, per_point, 0)});
            if (last / 2 + 1 <= last)
                s.loads.push_back({last / 2 + 1, last, obj.tip, Vec3(0, per_point, -per_point), Vec3(0, -per_point, -per_point)});
        }
        return s;
    }

    /// Every k-th frame for training, the rest held out.
    inline void split_frames(DatasetMeta &meta, int n_frames, int train_count)
    {
        meta.train_frames.clear();
        meta.test_frames.clear();
        train_count = std::clamp(train_count, 1, n_frames);
        std::vector<bool> train(n_frames, false);
        for (int c = 0; c < train_count; ++c)
            train[static_cast<int>(std::floor(static_cast<double>(c) * n_frames / train_count))] = true;
        for (int t = 0; t < n_frames; ++t)
            (train[t] ? meta.train_frames : meta.test_frames).push_back(t);
    }
} // namespace veo
