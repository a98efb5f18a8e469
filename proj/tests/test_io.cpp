#include "veo/io.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace veo;
namespace fs = std::filesystem;

namespace
{
    fs::path scratch(const std::string &name)
    {
        const fs::path p = fs::temp_directory_path() / ("veo_io_" + name);
        fs::remove_all(p);
        fs::create_directories(p);
        return p;
    }

    Points awkward_points(int n, std::uint64_t seed)
    {
        std::mt19937_64 rng(seed);
        std::uniform_real_distribution<double> u(-1.0, 1.0);
        Points p(3, n);
        for (Eigen::Index k = 0; k < p.size(); ++k)
            p.data()[k] = u(rng) * std::pow(10.0, static_cast<int>(k % 9) - 4);
        p(0, 0) = 0.1;
        p(1, 0) = -0.0;
        p(2, 0) = 5e-324;
        return p;
    }
} // namespace

TEST(Ply, RoundTripIsBitExact)
{
    const auto dir = scratch("ply");
    const Points p = awkward_points(50, 1);
    std::vector<double> extra(50);
    for (int i = 0; i < 50; ++i)
        extra[i] = 1.0 / (i + 3);
    io::write_ply(dir / "a.ply", p, {{"mu", extra}});
    const auto d = io::read_ply(dir / "a.ply");
    EXPECT_EQ(d.positions, p);
    EXPECT_EQ(d.channel("mu"), extra);
    EXPECT_THROW(d.channel("lambda"), ValidationError);
}

TEST(Ply, ErrorsNameTheFile)
{
    const auto dir = scratch("ply_err");
    io::write_text(dir / "short.ply", "ply\nformat ascii 1.0\nelement vertex 3\nproperty double x\nproperty double y\nproperty double z\n"
                                      "end_header\n0 0 0\n1 1 1\n");
    try
    {
        io::read_ply(dir / "short.ply");
        FAIL();
    }
    catch (const ValidationError &e)
    {
        EXPECT_NE(std::string(e.what()).find("short.ply"), std::string::npos);
    }
    io::write_text(dir / "bad.ply", "ply\nformat ascii 1.0\nelement vertex 1\nproperty double x\nproperty double y\nproperty double z\n"
                                    "end_header\n0 zero 0\n");
    EXPECT_THROW(io::read_ply(dir / "bad.ply"), ValidationError);
    io::write_text(dir / "bin.ply", "ply\nformat binary_little_endian 1.0\nend_header\n");
    EXPECT_THROW(io::read_ply(dir / "bin.ply"), ValidationError);
    EXPECT_THROW(io::read_ply(dir / "missing.ply"), ValidationError);
}

TEST(Material, JsonRoundTrip)
{
    const auto dir = scratch("mat");
    MaterialField m = MaterialField::uniform(20, 1e4, 3e4);
    m.log_mu(3) = std::log(1234.5678);
    io::write_material(dir / "material.json", m);
    const auto back = io::read_material(dir / "material.json");
    EXPECT_EQ(back.log_mu, m.log_mu);
    EXPECT_EQ(back.log_lambda, m.log_lambda);

    io::write_text(dir / "bad.json", R"({"schema_version": 1, "log_mu": [1, 2], "log_lambda": [1]})");
    EXPECT_THROW(io::read_material(dir / "bad.json"), ValidationError);
    io::write_text(dir / "old.json", R"({"schema_version": 99, "log_mu": [1], "log_lambda": [1]})");
    EXPECT_THROW(io::read_material(dir / "old.json"), ValidationError);
    io::write_text(dir / "broken.json", "{");
    EXPECT_THROW(io::read_material(dir / "broken.json"), ValidationError);
}

TEST(Dataset, DirectoryRoundTripIsExact)
{
    const auto dir = scratch("dataset");
    const auto obj = synth_object(ShapeKind::bar, {6, 3, 3}, 0.01, {Region::everywhere(2e4, 2e4)}, 0.05, 4);
    auto script = default_script(obj, 3, 1e-5, 2e-3);
    script.sdfs.push_back(SdfShape::sphere(Vec3(0.03, 0.01, -0.5), 0.1, 7.5));
    script.sdfs.push_back(SdfShape::plane(Vec3(0, 0, -1), Vec3::UnitZ()));
    auto d = synth_sequence(obj.ref, obj.truth, script, 3, 1e-4, 2);
    d.frames[1].attraction.push_back({5, Vec3(0.1, 0.2, 0.3)});
    d.frames[1].attraction_penalty = 42.0;
    d.frames[2].jets.push_back(AirJet{Vec3(0, 0, 1), -Vec3::UnitZ(), 1e-5, 0.3, 2.0, 0.01});
    d.meta.name = "round trip";
    split_frames(d.meta, 3, 2);
    io::write_dataset(dir, d);
    const auto back = io::read_dataset(dir);
    EXPECT_TRUE(back == d);

    // writing the loaded copy reproduces the same bytes
    const auto dir2 = scratch("dataset2");
    io::write_dataset(dir2, back);
    EXPECT_EQ(io::read_text(dir / "manifest.json"), io::read_text(dir2 / "manifest.json"));
    EXPECT_EQ(io::read_text(dir / "obs_00002.ply"), io::read_text(dir2 / "obs_00002.ply"));
}

TEST(Dataset, ValidationErrorsNameField)
{
    const auto dir = scratch("dataset_bad");
    const auto obj = synth_object(ShapeKind::bar, {4, 3, 3}, 0.01, {Region::everywhere(2e4, 2e4)}, 0.05, 4);
    ForceScript s;
    s.pins = obj.clamp;
    const auto d = synth_sequence(obj.ref, obj.truth, s, 1, 0.0, 0);
    io::write_dataset(dir, d);
    auto manifest = io::read_json(dir / "manifest.json");
    manifest["frames"][0]["pins"][0]["id"] = 10000;
    io::write_json(dir / "manifest.json", manifest);
    try
    {
        io::read_dataset(dir);
        FAIL();
    }
    catch (const ValidationError &e)
    {
        const std::string msg = e.what();
        EXPECT_NE(msg.find("manifest.json"), std::string::npos);
        EXPECT_NE(msg.find("pins[0]"), std::string::npos);
    }
    manifest.erase("total_mass");
    io::write_json(dir / "manifest.json", manifest);
    try
    {
        io::read_dataset(dir);
        FAIL();
    }
    catch (const ValidationError &e)
    {
        EXPECT_NE(std::string(e.what()).find("total_mass"), std::string::npos);
    }
}

TEST(WarpGridFile, BinaryRoundTrip)
{
    const auto dir = scratch("grid");
    WarpGrid g;
    g.bounds = {Vec3(-1, 0, 0.5), Vec3(1, 2, 0.75)};
    g.resolution = {3, 4, 2};
    g.offsets = awkward_points(24, 3);
    g.mask.assign(24, 0);
    g.mask[5] = 1;
    io::write_warp_grid(dir / "warp", g);
    EXPECT_EQ(fs::file_size(dir / "warp.bin"), 24u * 25u);
    const auto back = io::read_warp_grid(dir / "warp");
    EXPECT_EQ(back.offsets, g.offsets);
    EXPECT_EQ(back.mask, g.mask);
    EXPECT_EQ(back.resolution, g.resolution);
    EXPECT_EQ(back.bounds.lo, g.bounds.lo);
    // first value is stored little-endian
    const std::string bin = io::read_text(dir / "warp.bin");
    double first;
    std::memcpy(&first, bin.data(), 8);
    if constexpr (std::endian::native == std::endian::little)
    {
        EXPECT_EQ(first, g.offsets(0, 0));
    }

    io::write_text(dir / "warp.bin", bin.substr(0, 100));
    EXPECT_THROW(io::read_warp_grid(dir / "warp"), ValidationError);
}

TEST(Format, ShortestRoundTrip)
{
    EXPECT_EQ(io::format_double(0.1), "0.1");
    for (double v : {1e-4, 1.0 / 3.0, -2.5e300, 5e-324})
        EXPECT_EQ(io::parse_double(io::format_double(v), "x"), v);
    EXPECT_EQ(io::parse_double("2.5", "x"), 2.5);
    EXPECT_THROW(io::parse_double("2.5abc", "x"), ValidationError);
}
