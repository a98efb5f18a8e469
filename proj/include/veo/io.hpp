#pragma once

#include "veo/elasticity.hpp"
#include "veo/fit.hpp"
#include "veo/forces.hpp"
#include "veo/geometry.hpp"
#include "veo/harness.hpp"
#include "veo/types.hpp"
#include "veo/warp.hpp"

#include <nlohmann/json.hpp>

#include <bit>
#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

namespace veo::io
{
    namespace fs = std::filesystem;
    using json = nlohmann::json;

    inline constexpr int schema_version = 1;

    /// Shortest decimal text that reads back to the same double.
    inline std::string format_double(double v)
    {
        char buf[32];
        const auto r = std::to_chars(buf, buf + sizeof(buf), v);
        return std::string(buf, r.ptr);
    }

    inline double parse_double(const std::string &s, const std::string &where)
    {
        double v = 0.0;
        const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
        if (r.ec != std::errc() || r.ptr != s.data() + s.size())
            throw ValidationError(where + ": cannot parse number '" + s + "'");
        return v;
    }

    inline void write_text(const fs::path &path, const std::string &text)
    {
        if (path.has_parent_path())
            fs::create_directories(path.parent_path());
        std::ofstream out(path, std::ios::binary);
        if (!out)
            throw ValidationError("cannot open " + path.string() + " for writing");
        out << text;
        if (!out)
            throw ValidationError("failed writing " + path.string());
    }

    inline std::string read_text(const fs::path &path)
    {
        std::ifstream in(path, std::ios::binary);
        if (!in)
            throw ValidationError("cannot open " + path.string());
        std::ostringstream ss;
        ss << in.rdbuf();
        return ss.str();
    }

    // ---- PLY ----

    struct PlyChannel
    {
        std::string name;
        std::vector<double> values;
    };

    /// ASCII PLY with float64 x y z and optional extra per-vertex scalars.
    inline std::string ply_text(const Points &p, const std::vector<PlyChannel> &extra = {})
    {
        for (const auto &c : extra)
            require(static_cast<Eigen::Index>(c.values.size()) == p.cols(), "ply: channel '" + c.name + "' has the wrong length");
        std::string s = "ply\nformat ascii 1.0\nelement vertex " + std::to_string(p.cols()) + "\n";
        s += "property double x\nproperty double y\nproperty double z\n";
        for (const auto &c : extra)
            s += "property double " + c.name + "\n";
        s += "end_header\n";
        for (Eigen::Index i = 0; i < p.cols(); ++i)
        {
            s += format_double(p(0, i)) + ' ' + format_double(p(1, i)) + ' ' + format_double(p(2, i));
            for (const auto &c : extra)
                s += ' ' + format_double(c.values[static_cast<std::size_t>(i)]);
            s += '\n';
        }
        return s;
    }

    inline void write_ply(const fs::path &path, const Points &p, const std::vector<PlyChannel> &extra = {})
    {
        write_text(path, ply_text(p, extra));
    }

    struct PlyData
    {
        Points positions;
        std::vector<PlyChannel> channels;

        const std::vector<double> &channel(const std::string &name) const
        {
            for (const auto &c : channels)
                if (c.name == name)
                    return c.values;
            throw ValidationError("ply: missing property '" + name + "'");
        }
    };

    /// Reads ASCII PLY vertices; x, y, z are required, other scalar properties are kept.
    inline PlyData read_ply(const fs::path &path)
    {
        std::istringstream in(read_text(path));
        const std::string where = path.string();
        std::string line;
        std::getline(in, line);
        if (line != "ply")
            throw ValidationError(where + ": not a PLY file");
        long long count = -1;
        std::vector<std::string> props;
        bool in_vertex = false;
        while (std::getline(in, line))
        {
            std::istringstream ls(line);
            std::string word;
            ls >> word;
            if (word == "end_header")
                break;
            if (word == "format")
            {
                std::string fmt;
                ls >> fmt;
                if (fmt != "ascii")
                    throw ValidationError(where + ": only ASCII PLY is supported");
            }
            else if (word == "element")
            {
                std::string name;
                long long n = 0;
                ls >> name >> n;
                in_vertex = name == "vertex";
                if (in_vertex)
                    count = n;
            }
            else if (word == "property" && in_vertex)
            {
                std::string type, name;
                ls >> type >> name;
                if (type == "list")
                    throw ValidationError(where + ": list properties on vertices are not supported");
                props.push_back(name);
            }
        }
        if (count < 0)
            throw ValidationError(where + ": no vertex element");
        int ix = -1, iy = -1, iz = -1;
        for (std::size_t k = 0; k < props.size(); ++k)
        {
            ix = props[k] == "x" ? static_cast<int>(k) : ix;
            iy = props[k] == "y" ? static_cast<int>(k) : iy;
            iz = props[k] == "z" ? static_cast<int>(k) : iz;
        }
        if (ix < 0 || iy < 0 || iz < 0)
            throw ValidationError(where + ": vertex element lacks x, y or z");

        PlyData d;
        d.positions.resize(3, count);
        for (std::size_t k = 0; k < props.size(); ++k)
            if (static_cast<int>(k) != ix && static_cast<int>(k) != iy && static_cast<int>(k) != iz)
                d.channels.push_back({props[k], std::vector<double>(static_cast<std::size_t>(count))});
        for (long long i = 0; i < count; ++i)
        {
            if (!std::getline(in, line))
                throw ValidationError(where + ": expected " + std::to_string(count) + " vertices, found " + std::to_string(i));
            std::istringstream ls(line);
            std::size_t extra = 0;
            for (std::size_t k = 0; k < props.size(); ++k)
            {
                std::string tok;
                if (!(ls >> tok))
                    throw ValidationError(where + ": vertex " + std::to_string(i) + " has too few values");
                const double v = parse_double(tok, where + " vertex " + std::to_string(i));
                if (static_cast<int>(k) == ix)
                    d.positions(0, i) = v;
                else if (static_cast<int>(k) == iy)
                    d.positions(1, i) = v;
                else if (static_cast<int>(k) == iz)
                    d.positions(2, i) = v;
                else
                    d.channels[extra++].values[static_cast<std::size_t>(i)] = v;
            }
        }
        return d;
    }

    inline PointCloud read_cloud(const fs::path &path)
    {
        PointCloud c(read_ply(path).positions);
        c.validate();
        return c;
    }

    // ---- JSON helpers ----

    /// Field lookup whose errors name the file and the field.
    inline const json &field(const json &j, const std::string &key, const std::string &where)
    {
        if (!j.is_object() || !j.contains(key))
            throw ValidationError(where + ": missing field '" + key + "'");
        return j.at(key);
    }

    template <typename T>
    T get(const json &j, const std::string &key, const std::string &where)
    {
        const json &v = field(j, key, where);
        try
        {
            return v.get<T>();
        }
        catch (const json::exception &)
        {
            throw ValidationError(where + ": field '" + key + "' has the wrong type");
        }
    }

    template <typename T>
    T get_or(const json &j, const std::string &key, T fallback, const std::string &where)
    {
        return j.is_object() && j.contains(key) ? get<T>(j, key, where) : fallback;
    }

    inline json vec_json(const Vec3 &v) { return json::array({v.x(), v.y(), v.z()}); }

    inline Vec3 vec_from(const json &j, const std::string &key, const std::string &where)
    {
        const auto a = get<std::vector<double>>(j, key, where);
        if (a.size() != 3)
            throw ValidationError(where + ": field '" + key + "' must have 3 entries");
        return Vec3(a[0], a[1], a[2]);
    }

    inline json parse_json(const std::string &text, const std::string &where)
    {
        try
        {
            return json::parse(text);
        }
        catch (const json::parse_error &e)
        {
            throw ValidationError(where + ": malformed JSON (" + std::string(e.what()) + ")");
        }
    }

    inline json read_json(const fs::path &path) { return parse_json(read_text(path), path.string()); }

    inline void write_json(const fs::path &path, const json &j) { write_text(path, j.dump(2) + "\n"); }

    inline void check_schema(const json &j, const std::string &where)
    {
        const int v = get<int>(j, "schema_version", where);
        if (v != schema_version)
            throw ValidationError(where + ": unsupported schema_version " + std::to_string(v));
    }

    // ---- material ----

    inline json material_json(const MaterialField &m)
    {
        return {{"schema_version", schema_version},
                {"log_mu", std::vector<double>(m.log_mu.data(), m.log_mu.data() + m.log_mu.size())},
                {"log_lambda", std::vector<double>(m.log_lambda.data(), m.log_lambda.data() + m.log_lambda.size())}};
    }

    inline MaterialField material_from_json(const json &j, const std::string &where)
    {
        check_schema(j, where);
        const auto mu = get<std::vector<double>>(j, "log_mu", where);
        const auto la = get<std::vector<double>>(j, "log_lambda", where);
        if (mu.size() != la.size())
            throw ValidationError(where + ": log_mu and log_lambda differ in length");
        MaterialField m;
        m.log_mu = Eigen::Map<const Eigen::VectorXd>(mu.data(), static_cast<Eigen::Index>(mu.size()));
        m.log_lambda = Eigen::Map<const Eigen::VectorXd>(la.data(), static_cast<Eigen::Index>(la.size()));
        m.validate(m.size());
        return m;
    }

    inline void write_material(const fs::path &path, const MaterialField &m) { write_json(path, material_json(m)); }

    inline MaterialField read_material(const fs::path &path) { return material_from_json(read_json(path), path.string()); }

    /// Rest cloud with mu and lambda channels.
    inline void write_material_ply(const fs::path &path, const PointCloud &rest, const MaterialField &m)
    {
        std::vector<double> mu(m.size()), la(m.size());
        for (int i = 0; i < m.size(); ++i)
        {
            mu[i] = m.mu(i);
            la[i] = m.lambda(i);
        }
        write_ply(path, rest.positions, {{"mu", mu}, {"lambda", la}});
    }

    // ---- force frames ----

    inline json sdf_json(const SdfShape &s)
    {
        json j{{"kind", s.kind == SdfKind::sphere ? "sphere" : s.kind == SdfKind::plane ? "plane" : "box"}};
        switch (s.kind)
        {
        case SdfKind::sphere:
            j["center"] = vec_json(s.center);
            j["radius"] = s.radius;
            break;
        case SdfKind::plane:
            j["point"] = vec_json(s.point);
            j["normal"] = vec_json(s.normal);
            break;
        case SdfKind::box:
            j["center"] = vec_json(s.center);
            j["half_extents"] = vec_json(s.half_extents);
            break;
        }
        if (s.penalty)
            j["penalty"] = *s.penalty;
        return j;
    }

    inline SdfShape sdf_from_json(const json &j, const std::string &where)
    {
        const auto kind = get<std::string>(j, "kind", where);
        std::optional<double> penalty;
        if (j.contains("penalty"))
            penalty = get<double>(j, "penalty", where);
        SdfShape s;
        if (kind == "sphere")
            s = SdfShape::sphere(vec_from(j, "center", where), get<double>(j, "radius", where));
        else if (kind == "plane")
            s = SdfShape::plane(vec_from(j, "point", where), vec_from(j, "normal", where));
        else if (kind == "box")
            s = SdfShape::box(vec_from(j, "center", where), vec_from(j, "half_extents", where));
        else
            throw ValidationError(where + ": unknown sdf kind '" + kind + "'");
        s.penalty = penalty;
        try
        {
            s.validate();
        }
        catch (const ValidationError &e)
        {
            throw ValidationError(where + ": " + e.what());
        }
        return s;
    }

    inline json jet_json(const AirJet &jet)
    {
        return {{"nozzle", vec_json(jet.nozzle)},     {"direction", vec_json(jet.direction)},
                {"strength", jet.strength},           {"half_angle", jet.half_angle},
                {"falloff_power", jet.falloff_power}, {"min_distance", jet.min_distance}};
    }

    inline AirJet jet_from_json(const json &j, const std::string &where)
    {
        AirJet jet;
        jet.nozzle = vec_from(j, "nozzle", where);
        jet.direction = vec_from(j, "direction", where);
        jet.strength = get<double>(j, "strength", where);
        jet.half_angle = get_or<double>(j, "half_angle", jet.half_angle, where);
        jet.falloff_power = get_or<double>(j, "falloff_power", jet.falloff_power, where);
        jet.min_distance = get_or<double>(j, "min_distance", jet.min_distance, where);
        return jet;
    }

    /// Nonzero per-point forces as point loads; follower jets kept separately.
    inline json frame_json(const ForceFrame &f)
    {
        json loads = json::array(), pins = json::array(), attraction = json::array(), sdfs = json::array(), jets = json::array();
        for (Eigen::Index i = 0; i < f.forces.cols(); ++i)
            if (!f.forces.col(i).isZero(0.0))
                loads.push_back({{"id", i}, {"fx", f.forces(0, i)}, {"fy", f.forces(1, i)}, {"fz", f.forces(2, i)}});
        for (const auto &p : f.pinned)
            pins.push_back({{"id", p.id}, {"x", p.position.x()}, {"y", p.position.y()}, {"z", p.position.z()}});
        for (const auto &a : f.attraction)
            attraction.push_back({{"id", a.id}, {"x", a.target.x()}, {"y", a.target.y()}, {"z", a.target.z()}});
        for (const auto &s : f.sdfs)
            sdfs.push_back(sdf_json(s));
        for (const auto &jt : f.jets)
            jets.push_back(jet_json(jt));
        json j{{"point_loads", loads}, {"pins", pins}, {"attraction", attraction}, {"sdfs", sdfs}, {"jets", jets}};
        if (f.attraction_penalty)
            j["attraction_penalty"] = *f.attraction_penalty;
        return j;
    }

    inline ForceFrame frame_from_json(const json &j, int n, const std::string &where)
    {
        ForceFrame f = ForceFrame::empty(n);
        auto id_of = [&](const json &e, const std::string &w) {
            const int id = get<int>(e, "id", w);
            if (id < 0 || id >= n)
                throw ValidationError(w + ": point id " + std::to_string(id) + " out of range");
            return id;
        };
        if (j.contains("point_loads"))
            for (std::size_t k = 0; k < j.at("point_loads").size(); ++k)
            {
                const auto &e = j.at("point_loads")[k];
                const std::string w = where + ".point_loads[" + std::to_string(k) + "]";
                f.forces.col(id_of(e, w)) += Vec3(get<double>(e, "fx", w), get<double>(e, "fy", w), get<double>(e, "fz", w));
            }
        if (j.contains("pins"))
            for (std::size_t k = 0; k < j.at("pins").size(); ++k)
            {
                const auto &e = j.at("pins")[k];
                const std::string w = where + ".pins[" + std::to_string(k) + "]";
                f.pinned.push_back({id_of(e, w), Vec3(get<double>(e, "x", w), get<double>(e, "y", w), get<double>(e, "z", w))});
            }
        if (j.contains("attraction"))
            for (std::size_t k = 0; k < j.at("attraction").size(); ++k)
            {
                const auto &e = j.at("attraction")[k];
                const std::string w = where + ".attraction[" + std::to_string(k) + "]";
                f.attraction.push_back({id_of(e, w), Vec3(get<double>(e, "x", w), get<double>(e, "y", w), get<double>(e, "z", w))});
            }
        if (j.contains("attraction_penalty"))
            f.attraction_penalty = get<double>(j, "attraction_penalty", where);
        if (j.contains("sdfs"))
            for (std::size_t k = 0; k < j.at("sdfs").size(); ++k)
                f.sdfs.push_back(sdf_from_json(j.at("sdfs")[k], where + ".sdfs[" + std::to_string(k) + "]"));
        if (j.contains("jets"))
            for (std::size_t k = 0; k < j.at("jets").size(); ++k)
                f.jets.push_back(jet_from_json(j.at("jets")[k], where + ".jets[" + std::to_string(k) + "]"));
        try
        {
            f.validate(n);
        }
        catch (const ValidationError &e)
        {
            throw ValidationError(where + ": " + e.what());
        }
        return f;
    }

    // ---- dataset directory ----

    inline std::string observation_name(std::size_t t)
    {
        char buf[32];
        std::snprintf(buf, sizeof(buf), "obs_%05zu.ply", t);
        return buf;
    }

    inline void write_dataset(const fs::path &dir, const Dataset &d)
    {
        d.validate();
        fs::create_directories(dir);
        json frames = json::array();
        for (const auto &f : d.frames)
            frames.push_back(frame_json(f));
        std::vector<int> mask(d.surface_mask.begin(), d.surface_mask.end());
        const json manifest{{"schema_version", schema_version},
                            {"meta",
                             {{"name", d.meta.name},
                              {"frame_rate", d.meta.frame_rate},
                              {"noise_sigma", d.meta.noise_sigma},
                              {"seed", d.meta.seed},
                              {"train_frames", d.meta.train_frames},
                              {"test_frames", d.meta.test_frames}}},
                            {"total_mass", d.total_mass},
                            {"point_count", d.rest.size()},
                            {"surface_mask", mask},
                            {"rest", "rest.ply"},
                            {"frames", frames}};
        write_json(dir / "manifest.json", manifest);
        write_ply(dir / "rest.ply", d.rest.positions);
        for (std::size_t t = 0; t < d.observations.size(); ++t)
            write_ply(dir / observation_name(t), d.observations[t].positions);
    }

    inline Dataset read_dataset(const fs::path &dir)
    {
        const fs::path mpath = dir / "manifest.json";
        const std::string where = mpath.string();
        const json m = read_json(mpath);
        check_schema(m, where);
        Dataset d;
        d.rest = read_cloud(dir / get<std::string>(m, "rest", where));
        const int n = d.rest.size();
        if (get<int>(m, "point_count", where) != n)
            throw ValidationError(where + ": point_count does not match rest cloud");
        d.total_mass = get<double>(m, "total_mass", where);
        const auto mask = get<std::vector<int>>(m, "surface_mask", where);
        if (static_cast<int>(mask.size()) != n)
            throw ValidationError(where + ": surface_mask length does not match rest cloud");
        d.surface_mask.assign(mask.begin(), mask.end());
        const json &meta = field(m, "meta", where);
        const std::string mw = where + ".meta";
        d.meta.name = get_or<std::string>(meta, "name", d.meta.name, mw);
        d.meta.frame_rate = get_or<double>(meta, "frame_rate", d.meta.frame_rate, mw);
        d.meta.noise_sigma = get_or<double>(meta, "noise_sigma", d.meta.noise_sigma, mw);
        d.meta.seed = get_or<std::uint64_t>(meta, "seed", d.meta.seed, mw);
        d.meta.train_frames = get_or<std::vector<int>>(meta, "train_frames", {}, mw);
        d.meta.test_frames = get_or<std::vector<int>>(meta, "test_frames", {}, mw);
        const json &frames = field(m, "frames", where);
        if (!frames.is_array())
            throw ValidationError(where + ": field 'frames' must be an array");
        for (std::size_t t = 0; t < frames.size(); ++t)
        {
            d.frames.push_back(frame_from_json(frames[t], n, where + ".frames[" + std::to_string(t) + "]"));
            const PointCloud obs = read_cloud(dir / observation_name(t));
            if (obs.size() != n)
                throw ValidationError((dir / observation_name(t)).string() + ": point count does not match rest cloud");
            d.observations.push_back(obs);
        }
        try
        {
            d.validate();
        }
        catch (const ValidationError &e)
        {
            throw ValidationError(where + ": " + e.what());
        }
        return d;
    }

    /// Simulated sequence as sim_%05d.ply files.
    inline void write_sequence(const fs::path &dir, const std::vector<PointCloud> &clouds, const std::string &prefix = "sim")
    {
        fs::create_directories(dir);
        for (std::size_t t = 0; t < clouds.size(); ++t)
        {
            char buf[64];
            std::snprintf(buf, sizeof(buf), "%s_%05zu.ply", prefix.c_str(), t);
            write_ply(dir / buf, clouds[t].positions);
        }
    }

    /// Every *.ply in a directory, in file-name order.
    inline std::vector<PointCloud> read_sequence(const fs::path &dir)
    {
        if (!fs::is_directory(dir))
            throw ValidationError(dir.string() + ": not a directory");
        std::vector<fs::path> files;
        for (const auto &e : fs::directory_iterator(dir))
            if (e.is_regular_file() && e.path().extension() == ".ply" && e.path().filename() != "rest.ply")
                files.push_back(e.path());
        std::sort(files.begin(), files.end());
        if (files.empty())
            throw ValidationError(dir.string() + ": no PLY frames");
        std::vector<PointCloud> out;
        for (const auto &f : files)
            out.push_back(read_cloud(f));
        return out;
    }

    // ---- reports ----

    inline json fit_report_json(const FitReport &r, const FitConfig &c)
    {
        return {{"schema_version", schema_version},
                {"homogeneous", r.homogeneous},
                {"grad_mode", to_string(c.grad_mode)},
                {"frames", c.frames},
                {"epochs", r.epochs},
                {"best_epoch", r.best_epoch},
                {"final_loss", r.final_loss},
                {"loss_history", r.loss_history},
                {"per_frame_residuals", r.per_frame_residuals},
                {"initial_mu", r.initial.mean_mu()},
                {"mean_mu", r.material.mean_mu()},
                {"mean_lambda", r.material.log_lambda.array().exp().mean()}};
    }

    inline json distance_json(const DistanceReport &r)
    {
        return {{"schema_version", schema_version},
                {"average_mm", r.average_mm},
                {"p95_mm", r.p95_mm},
                {"max_mm", r.max_mm},
                {"frame_means_mm", r.frame_means_mm}};
    }

    /// One line in the layout of a results table: average, 95th percentile, maximum.
    inline std::string distance_table(const DistanceReport &r, const std::string &label)
    {
        char buf[256];
        std::snprintf(buf, sizeof(buf), "%-12s | avg %8.3f mm | 95%% %8.3f mm | max %8.3f mm", label.c_str(), r.average_mm, r.p95_mm,
                      r.max_mm);
        return buf;
    }

    // ---- warp grid ----

    namespace detail
    {
        template <typename T>
        void put_le(std::string &out, T v)
        {
            auto bits = std::bit_cast<std::array<char, sizeof(T)>>(v);
            if constexpr (std::endian::native == std::endian::big)
                std::reverse(bits.begin(), bits.end());
            out.append(bits.data(), bits.size());
        }

        template <typename T>
        T get_le(const std::string &in, std::size_t offset)
        {
            std::array<char, sizeof(T)> bits;
            std::copy_n(in.data() + offset, sizeof(T), bits.begin());
            if constexpr (std::endian::native == std::endian::big)
                std::reverse(bits.begin(), bits.end());
            return std::bit_cast<T>(bits);
        }
    } // namespace detail

    /// `<stem>.json` header plus `<stem>.bin`: float64 offsets (3 per node) followed by one uint8 mask byte per node.
    inline void write_warp_grid(const fs::path &stem, const WarpGrid &g)
    {
        const json header{{"schema_version", schema_version},
                          {"bounds", {{"lo", vec_json(g.bounds.lo)}, {"hi", vec_json(g.bounds.hi)}}},
                          {"resolution", g.resolution},
                          {"ordering", "x_fastest"},
                          {"byte_order", "little"},
                          {"layout", "float64 offset[nodes][3], then uint8 mask[nodes]"},
                          {"data", stem.filename().string() + ".bin"}};
        write_json(fs::path(stem).concat(".json"), header);
        std::string bin;
        bin.reserve(g.nodes() * 25);
        for (std::size_t c = 0; c < g.nodes(); ++c)
            for (int a = 0; a < 3; ++a)
                detail::put_le(bin, g.offsets(a, static_cast<Eigen::Index>(c)));
        for (std::uint8_t m : g.mask)
            bin.push_back(static_cast<char>(m));
        write_text(fs::path(stem).concat(".bin"), bin);
    }

    inline WarpGrid read_warp_grid(const fs::path &stem)
    {
        const fs::path hpath = fs::path(stem).concat(".json");
        const std::string where = hpath.string();
        const json h = read_json(hpath);
        check_schema(h, where);
        WarpGrid g;
        const json &b = field(h, "bounds", where);
        g.bounds.lo = vec_from(b, "lo", where + ".bounds");
        g.bounds.hi = vec_from(b, "hi", where + ".bounds");
        const auto res = get<std::vector<int>>(h, "resolution", where);
        if (res.size() != 3)
            throw ValidationError(where + ": resolution must have 3 entries");
        g.resolution = {res[0], res[1], res[2]};
        validate_grid(g.bounds, g.resolution);
        const std::string bin = read_text(hpath.parent_path() / get<std::string>(h, "data", where));
        const std::size_t nodes = g.nodes();
        if (bin.size() != nodes * 25)
            throw ValidationError(where + ": binary payload has " + std::to_string(bin.size()) + " bytes, expected " + std::to_string(nodes * 25));
        g.offsets.resize(3, static_cast<Eigen::Index>(nodes));
        for (std::size_t c = 0; c < nodes; ++c)
            for (int a = 0; a < 3; ++a)
                g.offsets(a, static_cast<Eigen::Index>(c)) = detail::get_le<double>(bin, 8 * (3 * c + a));
        g.mask.resize(nodes);
        for (std::size_t c = 0; c < nodes; ++c)
            g.mask[c] = static_cast<std::uint8_t>(bin[24 * nodes + c]);
        return g;
    }
} // namespace veo::io
