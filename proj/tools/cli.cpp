#include "veo/cli.hpp"

#include <CLI11.hpp>

namespace veo::cli
{
    namespace
    {
        struct Flags
        {
            std::string config;
            std::string out;
            std::string dataset;
            std::string material;
            std::string frames;
            std::string linear_solver;

            // synth
            std::optional<std::uint64_t> seed;
            std::optional<double> noise;
            std::optional<int> frame_count;
            std::optional<int> train_count;
            std::optional<std::string> shape;
            std::vector<int> dims;
            std::optional<double> spacing;
            std::optional<double> jet;
            std::optional<double> tip_load;
            std::optional<std::string> name;

            // fit
            bool homogeneous = false;
            std::optional<std::string> grad_mode;
            std::optional<int> epochs;
            std::optional<double> lr;
            std::optional<double> init_mu;

            // warp
            std::string rest;
            std::string deformed;
            std::string query;
            std::string forward;
            std::vector<double> grid_lo;
            std::vector<double> grid_hi;
            std::vector<int> resolution;
            std::optional<int> k;
            std::optional<double> mask_radius;

            // metrics
            std::string simulated;
            std::string observed;
            std::string mask_from;
        };

        SolverConfig with_solver_flag(SolverConfig c, const Flags &f)
        {
            if (!f.linear_solver.empty())
                c.linear_solver = linear_solver_from_string(f.linear_solver);
            return c;
        }

        int cmd_synth(const Flags &f, std::ostream &out)
        {
            SynthOptions o = synth_options(load_config(f.config));
            if (f.seed)
                o.seed = *f.seed;
            if (f.noise)
                o.noise_sigma = *f.noise;
            if (f.frame_count)
                o.frames = *f.frame_count;
            if (f.train_count)
                o.train_count = *f.train_count;
            if (f.shape)
                o.shape = shape_from_string(*f.shape);
            if (!f.dims.empty())
            {
                require(f.dims.size() == 3, "--dims needs three values");
                o.dims = {f.dims[0], f.dims[1], f.dims[2]};
            }
            if (f.spacing)
                o.spacing = *f.spacing;
            if (f.jet)
                o.jet_strength = *f.jet;
            if (f.tip_load)
                o.tip_load = *f.tip_load;
            if (f.name)
                o.name = *f.name;
            o.solver = with_solver_flag(o.solver, f);

            const SynthResult r = run_synth(o);
            io::write_dataset(f.out, r.dataset);
            io::write_material(fs::path(f.out) / "truth_material.json", r.object.truth);
            for (const auto &w : r.object.warnings)
                out << "warning: " << w << "\n";
            out << "wrote " << r.dataset.frames.size() << " frames of " << r.dataset.rest.size() << " points to " << f.out << "\n";
            return exit_ok;
        }

        int cmd_fit(const Flags &f, std::ostream &out)
        {
            const Dataset d = io::read_dataset(f.dataset);
            FitConfig c = fit_options(load_config(f.config));
            if (!f.frames.empty())
                c.frames = parse_frames(f.frames);
            else if (c.frames.empty())
                c.frames = d.meta.train_frames;
            if (c.frames.empty())
                c.frames = parse_frames("0.." + std::to_string(d.frames.size() - 1));
            if (f.grad_mode)
                c.grad_mode = grad_mode_from_string(*f.grad_mode);
            if (f.epochs)
                c.max_epochs = *f.epochs;
            if (f.lr)
                c.adam_lr = *f.lr;
            if (f.init_mu)
                c.init_log_mu = std::log(*f.init_mu);
            c.solver = with_solver_flag(c.solver, f);

            const ReferenceModel ref = d.reference();
            const FitReport rep = f.homogeneous ? fit_material_homogeneous(ref, d.frames, d.observations, c)
                                                : fit_material(ref, d.frames, d.observations, c);
            write_fit_outputs(f.out, d, rep, c);
            out << (f.homogeneous ? "homogeneous" : "heterogeneous") << " fit: " << rep.epochs << " epochs, final loss "
                << io::format_double(rep.final_loss) << ", mean mu " << io::format_double(rep.material.mean_mu()) << "\n";
            return exit_ok;
        }

        int cmd_simulate(const Flags &f, std::ostream &out)
        {
            const Dataset d = io::read_dataset(f.dataset);
            const MaterialField mat = io::read_material(f.material);
            const json config = load_config(f.config);
            const SolverConfig sc = with_solver_flag(solver_config(section(config, "solver"), SolverConfig{}, "config.solver"), f);
            std::vector<int> frames;
            if (!f.frames.empty())
                frames = parse_frames(f.frames);
            else if (!d.meta.test_frames.empty())
                frames = d.meta.test_frames;
            else
                frames = parse_frames("0.." + std::to_string(d.frames.size() - 1));

            const SimulateResult r = run_simulate(d, mat, frames, sc);
            std::vector<PointCloud> clouds;
            for (const auto &st : r.states)
                clouds.emplace_back(st.y);
            io::write_sequence(f.out, clouds);
            json metrics = io::distance_json(r.report);
            metrics["frames"] = r.evaluated;
            io::write_json(fs::path(f.out) / "metrics.json", metrics);
            out << io::distance_table(r.report, d.meta.name) << "\n";
            return exit_ok;
        }

        int cmd_warp(const Flags &f, std::ostream &out)
        {
            const json config = section(load_config(f.config), "warp");
            const std::string w = "config.warp";
            const int k = f.k.value_or(io::get_or<int>(config, "k", default_warp_neighbors, w));
            const double radius = f.mask_radius.value_or(io::get_or<double>(config, "mask_radius", 0.0, w));
            const WarpField field(io::read_cloud(f.rest), io::read_cloud(f.deformed), k, radius);
            require(f.query.empty() + f.forward.empty() >= 1, "warp: --query and --forward are exclusive");

            if (!f.query.empty())
            {
                const PointCloud q = io::read_cloud(f.query);
                Points warped(3, q.size());
                std::vector<double> masked(q.size());
                for (int i = 0; i < q.size(); ++i)
                {
                    const WarpSample s = warp_backward(field, q[i]);
                    warped.col(i) = s.position;
                    masked[i] = s.masked ? 1.0 : 0.0;
                }
                io::write_ply(f.out, warped, {{"masked", masked}});
                out << "warped " << q.size() << " points\n";
                return exit_ok;
            }
            if (!f.forward.empty())
            {
                const ForwardResult r = upsample_forward(field, io::read_cloud(f.forward));
                std::vector<double> flagged(r.flagged.begin(), r.flagged.end());
                io::write_ply(f.out, r.cloud.positions, {{"flagged", flagged}});
                out << "carried " << r.cloud.size() << " points forward\n";
                return exit_ok;
            }

            GridBounds b;
            const Points &y = field.deformed().positions;
            b.lo = y.rowwise().minCoeff().array() - field.mask_radius();
            b.hi = y.rowwise().maxCoeff().array() + field.mask_radius();
            auto vec3 = [](const std::vector<double> &v, const char *flag) {
                require(v.size() == 3, std::string(flag) + " needs three values");
                return Vec3(v[0], v[1], v[2]);
            };
            if (config.contains("grid_lo"))
                b.lo = io::vec_from(config, "grid_lo", w);
            if (config.contains("grid_hi"))
                b.hi = io::vec_from(config, "grid_hi", w);
            if (!f.grid_lo.empty())
                b.lo = vec3(f.grid_lo, "--grid-lo");
            if (!f.grid_hi.empty())
                b.hi = vec3(f.grid_hi, "--grid-hi");
            std::vector<int> res = io::get_or<std::vector<int>>(config, "resolution", {32, 32, 32}, w);
            if (!f.resolution.empty())
                res = f.resolution;
            require(res.size() == 3, "--resolution needs three values");
            const WarpGrid g = warp_grid(field, b, {res[0], res[1], res[2]});
            io::write_warp_grid(f.out, g);
            out << "wrote " << g.nodes() << " grid nodes to " << f.out << ".json/.bin\n";
            return exit_ok;
        }

        int cmd_metrics(const Flags &f, std::ostream &out)
        {
            std::vector<PointCloud> sim = io::read_sequence(f.simulated), obs = io::read_sequence(f.observed);
            if (!f.frames.empty())
            {
                std::vector<PointCloud> s2, o2;
                for (int t : parse_frames(f.frames))
                {
                    require(t < static_cast<int>(sim.size()) && t < static_cast<int>(obs.size()),
                            "metrics: frame " + std::to_string(t) + " out of range");
                    s2.push_back(sim[t]);
                    o2.push_back(obs[t]);
                }
                sim = std::move(s2);
                obs = std::move(o2);
            }
            require(sim.size() == obs.size(), "metrics: sequences have " + std::to_string(sim.size()) + " and " + std::to_string(obs.size()) +
                                                  " frames");
            std::vector<bool> mask(static_cast<std::size_t>(sim.front().size()), true);
            if (!f.mask_from.empty())
                mask = io::read_dataset(f.mask_from).surface_mask;
            const DistanceReport r = evaluate(sim, obs, mask);
            if (!f.out.empty())
                io::write_json(f.out, io::distance_json(r));
            out << io::distance_table(r, "metrics") << "\n";
            return exit_ok;
        }
    } // namespace

    int run(int argc, const char *const *argv, std::ostream &out, std::ostream &err)
    {
        CLI::App app{"Point-based elastic object reconstruction tools", "veo"};
        app.require_subcommand(0, 1);
        Flags f;

        auto common = [&](CLI::App *sub) { sub->add_option("--config", f.config, "JSON configuration file")->check(CLI::ExistingFile); };

        CLI::App *synth = app.add_subcommand("synth", "generate a synthetic dataset directory");
        common(synth);
        synth->add_option("--out", f.out, "output dataset directory")->required();
        synth->add_option("--seed", f.seed, "random seed");
        synth->add_option("--noise", f.noise, "observation noise sigma in meters");
        synth->add_option("--frames", f.frame_count, "number of frames");
        synth->add_option("--train-count", f.train_count, "number of training frames");
        synth->add_option("--shape", f.shape, "bar, slab or cross");
        synth->add_option("--dims", f.dims, "lattice nodes per axis")->expected(3);
        synth->add_option("--spacing", f.spacing, "lattice spacing in meters");
        synth->add_option("--jet", f.jet, "air jet strength");
        synth->add_option("--tip-load", f.tip_load, "total tip load in newtons");
        synth->add_option("--name", f.name, "dataset name");
        synth->add_option("--linear-solver", f.linear_solver, "pcg or ldlt");

        CLI::App *simulate = app.add_subcommand("simulate", "forward-simulate a dataset and report distances");
        common(simulate);
        simulate->add_option("--dataset", f.dataset, "dataset directory")->required();
        simulate->add_option("--material", f.material, "material.json")->required();
        simulate->add_option("--out", f.out, "output directory")->required();
        simulate->add_option("--frames", f.frames, "evaluated frames, e.g. 30..39 (default: held-out frames)");
        simulate->add_option("--linear-solver", f.linear_solver, "pcg or ldlt");

        CLI::App *fit = app.add_subcommand("fit", "estimate a material field from a dataset");
        common(fit);
        fit->add_option("--dataset", f.dataset, "dataset directory")->required();
        fit->add_option("--out", f.out, "output directory")->required();
        fit->add_flag("--homogeneous", f.homogeneous, "fit one (mu, lambda) pair");
        fit->add_option("--grad-mode", f.grad_mode, "truncated or ift_oracle");
        fit->add_option("--frames", f.frames, "training frames, e.g. 0..29 (default: dataset training split)");
        fit->add_option("--epochs", f.epochs, "maximum epochs");
        fit->add_option("--lr", f.lr, "Adam learning rate");
        fit->add_option("--init-mu", f.init_mu, "initial shear modulus (skips the sag estimate)");
        fit->add_option("--linear-solver", f.linear_solver, "pcg or ldlt");

        CLI::App *warp = app.add_subcommand("warp", "backward warp grid, warped cloud or forward upsampling");
        common(warp);
        warp->add_option("--rest", f.rest, "rest correspondence cloud (PLY)")->required();
        warp->add_option("--deformed", f.deformed, "deformed correspondence cloud (PLY)")->required();
        warp->add_option("--out", f.out, "grid file stem, or output PLY with --query/--forward")->required();
        warp->add_option("--query", f.query, "deformed-space points to warp back (PLY)");
        warp->add_option("--forward", f.forward, "dense rest-space cloud to carry forward (PLY)");
        warp->add_option("--grid-lo", f.grid_lo, "grid lower corner")->expected(3);
        warp->add_option("--grid-hi", f.grid_hi, "grid upper corner")->expected(3);
        warp->add_option("--resolution", f.resolution, "grid nodes per axis")->expected(3);
        warp->add_option("-k,--neighbors", f.k, "IDW neighbor count");
        warp->add_option("--mask-radius", f.mask_radius, "mask radius in meters");

        CLI::App *metrics = app.add_subcommand("metrics", "compare two cloud sequences");
        common(metrics);
        metrics->add_option("--simulated", f.simulated, "directory of simulated PLY frames")->required();
        metrics->add_option("--observed", f.observed, "directory of observed PLY frames")->required();
        metrics->add_option("--frames", f.frames, "frame subset, e.g. 30..39");
        metrics->add_option("--mask-from", f.mask_from, "dataset directory whose surface mask is used");
        metrics->add_option("--out", f.out, "metrics.json path");

        try
        {
            app.parse(argc, argv);
        }
        catch (const CLI::CallForHelp &e)
        {
            out << app.help();
            return exit_ok;
        }
        catch (const CLI::CallForAllHelp &e)
        {
            out << app.help("", CLI::AppFormatMode::All);
            return exit_ok;
        }
        catch (const CLI::ParseError &e)
        {
            err << "error: " << e.what() << "\n" << usage();
            return exit_validation;
        }
        if (app.get_subcommands().empty())
        {
            err << usage();
            return exit_validation;
        }

        try
        {
            if (synth->parsed())
                return cmd_synth(f, out);
            if (fit->parsed())
                return cmd_fit(f, out);
            if (simulate->parsed())
                return cmd_simulate(f, out);
            if (warp->parsed())
                return cmd_warp(f, out);
            return cmd_metrics(f, out);
        }
        catch (const ValidationError &e)
        {
            err << "error: " << e.what() << "\n";
            return exit_validation;
        }
        catch (const SolverError &e)
        {
            err << "solver failure: " << e.what() << "\n";
            return exit_solver;
        }
        catch (const std::exception &e)
        {
            err << "error: " << e.what() << "\n";
            return exit_solver;
        }
    }
} // namespace veo::cli
