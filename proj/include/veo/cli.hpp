#pragma once

#include "veo/fit.hpp"
#include "veo/harness.hpp"
#include "veo/io.hpp"
#include "veo/solver.hpp"
#include "veo/warp.hpp"

#include <iostream>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace veo::cli
{
    using io::json;
    namespace fs = std::filesystem;

    inline constexpr int exit_ok = 0;
    inline constexpr int exit_validation = 1;
    inline constexpr int exit_solver = 2;

    /// Parses "a..b" (inclusive), "a,b,c" or a mix such as "0..4,9".
    inline std::vector<int> parse_frames(const std::string &spec)
    {
        std::set<int> out;
        std::stringstream ss(spec);
        std::string part;
        auto to_int = [&](const std::string &s) {
            int v = 0;
            const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
            if (r.ec != std::errc() || r.ptr != s.data() + s.size() || v < 0)
                throw ValidationError("--frames: cannot parse '" + s + "' in '" + spec + "'");
            return v;
        };
        while (std::getline(ss, part, ','))
        {
            const auto dots = part.find("..");
            if (dots == std::string::npos)
                out.insert(to_int(part));
            else
            {
                const int a = to_int(part.substr(0, dots)), b = to_int(part.substr(dots + 2));
                if (b < a)
                    throw ValidationError("--frames: empty range '" + part + "'");
                for (int t = a; t <= b; ++t)
                    out.insert(t);
            }
        }
        if (out.empty())
            throw ValidationError("--frames: no frames selected");
        return {out.begin(), out.end()};
    }

    /// Section of the configuration file, or an empty object.
    inline json section(const json &config, const std::string &name)
    {
        if (config.is_object() && config.contains(name))
        {
            if (!config.at(name).is_object())
                throw ValidationError("config: section '" + name + "' must be an object");
            return config.at(name);
        }
        return json::object();
    }

    inline json load_config(const std::string &path)
    {
        if (path.empty())
            return json::object();
        json j = io::read_json(path);
        if (!j.is_object())
            throw ValidationError(path + ": configuration must be a JSON object");
        return j;
    }

    inline SolverConfig solver_config(const json &s, SolverConfig c, const std::string &where)
    {
        c.max_newton_iters = io::get_or<int>(s, "max_newton_iters", c.max_newton_iters, where);
        if (s.contains("grad_tol"))
            c.grad_tol = io::get<double>(s, "grad_tol", where);
        c.tolerance_scale = io::get_or<double>(s, "tolerance_scale", c.tolerance_scale, where);
        c.armijo_c = io::get_or<double>(s, "armijo_c", c.armijo_c, where);
        c.backtrack_beta = io::get_or<double>(s, "backtrack_beta", c.backtrack_beta, where);
        c.max_backtracks = io::get_or<int>(s, "max_backtracks", c.max_backtracks, where);
        c.cg_rel_tol = io::get_or<double>(s, "cg_rel_tol", c.cg_rel_tol, where);
        c.cg_max_iters = io::get_or<int>(s, "cg_max_iters", c.cg_max_iters, where);
        c.trace_depth = io::get_or<int>(s, "trace_depth", c.trace_depth, where);
        c.trace_path = io::get_or<std::string>(s, "trace_path", c.trace_path, where);
        if (s.contains("linear_solver"))
            c.linear_solver = linear_solver_from_string(io::get<std::string>(s, "linear_solver", where));
        c.validate();
        return c;
    }

    // ---- synth ----

    struct SynthOptions
    {
        ShapeKind shape = ShapeKind::bar;
        std::array<int, 3> dims{20, 5, 5};
        double spacing = 0.01;
        double total_mass = 0.1;
        std::vector<Region> regions{Region::everywhere(1e4, 1e4)};
        int frames = 40;
        int train_count = 30;
        double noise_sigma = 1e-4;
        std::uint64_t seed = 0;
        double jet_strength = 2e-5;
        double tip_load = 5e-3;
        std::string name = "synthetic";
        double frame_rate = 40.0;
        std::vector<SdfShape> sdfs;
        SolverConfig solver = synthesis_solver_config();
    };

    inline SynthOptions synth_options(const json &config)
    {
        const std::string w = "config.synth";
        const json s = section(config, "synth");
        SynthOptions o;
        if (s.contains("shape"))
            o.shape = shape_from_string(io::get<std::string>(s, "shape", w));
        if (s.contains("dims"))
        {
            const auto d = io::get<std::vector<int>>(s, "dims", w);
            if (d.size() != 3)
                throw ValidationError(w + ": field 'dims' must have 3 entries");
            o.dims = {d[0], d[1], d[2]};
        }
        o.spacing = io::get_or<double>(s, "spacing", o.spacing, w);
        o.total_mass = io::get_or<double>(s, "total_mass", o.total_mass, w);
        o.frames = io::get_or<int>(s, "frames", o.frames, w);
        o.train_count = io::get_or<int>(s, "train_count", o.train_count, w);
        o.noise_sigma = io::get_or<double>(s, "noise_sigma", o.noise_sigma, w);
        o.seed = io::get_or<std::uint64_t>(s, "seed", o.seed, w);
        o.jet_strength = io::get_or<double>(s, "jet_strength", o.jet_strength, w);
        o.tip_load = io::get_or<double>(s, "tip_load", o.tip_load, w);
        o.name = io::get_or<std::string>(s, "name", o.name, w);
        o.frame_rate = io::get_or<double>(s, "frame_rate", o.frame_rate, w);
        if (s.contains("regions"))
        {
            o.regions.clear();
            const json &rs = s.at("regions");
            if (!rs.is_array())
                throw ValidationError(w + ": field 'regions' must be an array");
            for (std::size_t r = 0; r < rs.size(); ++r)
            {
                const std::string rw = w + ".regions[" + std::to_string(r) + "]";
                Region reg = Region::everywhere(io::get<double>(rs[r], "mu", rw), io::get<double>(rs[r], "lambda", rw),
                                                io::get_or<std::string>(rs[r], "name", "region" + std::to_string(r), rw));
                if (rs[r].contains("lo"))
                    reg.box.lo = io::vec_from(rs[r], "lo", rw);
                if (rs[r].contains("hi"))
                    reg.box.hi = io::vec_from(rs[r], "hi", rw);
                o.regions.push_back(reg);
            }
        }
        if (s.contains("sdfs"))
            for (std::size_t k = 0; k < s.at("sdfs").size(); ++k)
                o.sdfs.push_back(io::sdf_from_json(s.at("sdfs")[k], w + ".sdfs[" + std::to_string(k) + "]"));
        o.solver = solver_config(section(s, "solver"), o.solver, "config.synth.solver");
        return o;
    }

    struct SynthResult
    {
        SynthObject object;
        Dataset dataset;
    };

    inline SynthResult run_synth(const SynthOptions &o)
    {
        require(o.frames >= 1, "synth: frames must be at least 1");
        SynthResult r;
        r.object = synth_object(o.shape, o.dims, o.spacing, o.regions, o.total_mass, o.seed);
        ForceScript script = default_script(r.object, o.frames, o.jet_strength, o.tip_load);
        script.sdfs = o.sdfs;
        r.dataset = synth_sequence(r.object.ref, r.object.truth, script, o.frames, o.noise_sigma, o.seed, o.solver);
        r.dataset.meta.name = o.name;
        r.dataset.meta.frame_rate = o.frame_rate;
        split_frames(r.dataset.meta, o.frames, o.train_count);
        return r;
    }

    // ---- fit ----

    inline FitConfig fit_options(const json &config)
    {
        const std::string w = "config.fit";
        const json s = section(config, "fit");
        FitConfig c;
        c.adam_lr = io::get_or<double>(s, "adam_lr", c.adam_lr, w);
        c.adam_beta1 = io::get_or<double>(s, "adam_beta1", c.adam_beta1, w);
        c.adam_beta2 = io::get_or<double>(s, "adam_beta2", c.adam_beta2, w);
        c.adam_eps = io::get_or<double>(s, "adam_eps", c.adam_eps, w);
        c.max_epochs = io::get_or<int>(s, "max_epochs", c.max_epochs, w);
        c.plateau_epochs = io::get_or<int>(s, "plateau_epochs", c.plateau_epochs, w);
        c.plateau_rel = io::get_or<double>(s, "plateau_rel", c.plateau_rel, w);
        if (s.contains("init_mu"))
            c.init_log_mu = std::log(io::get<double>(s, "init_mu", w));
        if (s.contains("init_lambda"))
            c.init_log_lambda = std::log(io::get<double>(s, "init_lambda", w));
        if (s.contains("grad_mode"))
            c.grad_mode = grad_mode_from_string(io::get<std::string>(s, "grad_mode", w));
        if (s.contains("frames"))
            c.frames = io::get<std::vector<int>>(s, "frames", w);
        c.solver = solver_config(section(config, "solver"), c.solver, "config.solver");
        return c;
    }

    inline void write_fit_outputs(const fs::path &out, const Dataset &d, const FitReport &rep, const FitConfig &c)
    {
        fs::create_directories(out);
        io::write_material(out / "material.json", rep.material);
        io::write_material_ply(out / "material.ply", d.rest, rep.material);
        io::write_json(out / "report.json", io::fit_report_json(rep, c));
    }

    // ---- simulate ----

    struct SimulateResult
    {
        std::vector<EquilibriumState> states;
        std::vector<int> evaluated;
        DistanceReport report;
    };

    /// Warm-started pass over every frame; the report covers `evaluated` only.
    inline SimulateResult run_simulate(const Dataset &d, const MaterialField &mat, const std::vector<int> &evaluated, const SolverConfig &config)
    {
        const ReferenceModel ref = d.reference();
        mat.validate(ref.size());
        require(!evaluated.empty(), "simulate: no frames to evaluate");
        for (int t : evaluated)
            require(t >= 0 && t < static_cast<int>(d.frames.size()), "simulate: frame " + std::to_string(t) + " out of range");
        SimulateResult r;
        r.evaluated = evaluated;
        r.states = solve_sequence(ref, mat, d.frames, config);
        for (std::size_t t = 0; t < r.states.size(); ++t)
            if (!r.states[t].converged)
                throw SolverError("simulate: frame " + std::to_string(t) + " did not converge: " + r.states[t].diagnostic);
        std::vector<PointCloud> sim, obs;
        for (int t : evaluated)
        {
            sim.emplace_back(r.states[t].y);
            obs.push_back(d.observations[t]);
        }
        r.report = evaluate(sim, obs, d.surface_mask);
        return r;
    }

    // ---- entry point ----

    inline std::string usage()
    {
        return "usage: veo <command> [options]\n"
               "commands:\n"
               "  synth     generate a synthetic dataset directory\n"
               "  simulate  forward-simulate a dataset with a material and report distances\n"
               "  fit       estimate a material field from a dataset\n"
               "  warp      build a backward warp grid or warp a cloud\n"
               "  metrics   compare two cloud sequences\n"
               "run 'veo <command> --help' for options\n";
    }

    /// Runs one command line; returns the process exit code. Defined in the veo_cli library.
    int run(int argc, const char *const *argv, std::ostream &out = std::cout, std::ostream &err = std::cerr);
} // namespace veo::cli
