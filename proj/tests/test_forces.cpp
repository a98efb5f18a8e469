#include "test_util.hpp"

#include "veo/forces.hpp"

#include <gtest/gtest.h>

using namespace veo;
using namespace veo::testing;

namespace
{
    ReferenceModel small_model(std::mt19937_64 &rng, int nx = 5, int ny = 4, int nz = 3)
    {
        const int n = nx * ny * nz;
        return build_reference(PointCloud(lattice(nx, ny, nz, 0.1, 0.005, rng)), 0.5, std::vector<bool>(n, true));
    }
} // namespace

TEST(Sdf, ClosedFormDistances)
{
    EXPECT_DOUBLE_EQ(sdf_eval(SdfShape::sphere(Vec3::Zero(), 1.0), Vec3(2, 0, 0)), 1.0);
    EXPECT_DOUBLE_EQ(sdf_eval(SdfShape::plane(Vec3::Zero(), Vec3::UnitZ()), Vec3(0, 0, -0.5)), -0.5);
    EXPECT_DOUBLE_EQ(sdf_eval(SdfShape::box(Vec3::Zero(), Vec3::Ones()), Vec3(2, 2, 0)), std::sqrt(2.0));
    EXPECT_DOUBLE_EQ(sdf_eval(SdfShape::box(Vec3::Zero(), Vec3::Ones()), Vec3(0.5, 0.2, 0.0)), -0.5);
    EXPECT_DOUBLE_EQ(sdf_eval(SdfShape::sphere(Vec3::Zero(), 1.0), Vec3(0, 0.25, 0)), -0.75);
}

TEST(Sdf, GradientMatchesFiniteDifferences)
{
    std::mt19937_64 rng(31);
    std::uniform_real_distribution<double> u(-2.0, 2.0);
    const std::vector<SdfShape> shapes{SdfShape::sphere(Vec3(0.1, 0.2, 0.3), 0.8),
                                       SdfShape::plane(Vec3(0, 0, 0.2), Vec3(1, 2, 2).normalized()),
                                       SdfShape::box(Vec3(0.1, 0, 0), Vec3(0.5, 0.7, 0.9))};
    for (const auto &s : shapes)
        for (int t = 0; t < 50; ++t)
        {
            const Vec3 p(u(rng), u(rng), u(rng));
            Vec3 fd;
            for (int a = 0; a < 3; ++a)
            {
                const double h = 1e-7;
                fd(a) = (sdf_eval(s, p + h * Vec3::Unit(a)) - sdf_eval(s, p - h * Vec3::Unit(a))) / (2 * h);
            }
            EXPECT_LT((sdf_gradient(s, p) - fd).norm(), 1e-6);
        }
}

TEST(Sdf, ValidationRejectsBadShapes)
{
    EXPECT_THROW(SdfShape::sphere(Vec3::Zero(), -1.0).validate(), ValidationError);
    EXPECT_THROW(SdfShape::plane(Vec3::Zero(), Vec3(0, 0, 2)).validate(), ValidationError);
    EXPECT_THROW(SdfShape::box(Vec3::Zero(), Vec3(1, 0, 1)).validate(), ValidationError);
    EXPECT_THROW(SdfShape::sphere(Vec3::Zero(), 1.0, -5.0).validate(), ValidationError);
}

TEST(Contact, ZeroWhenSeparated)
{
    std::mt19937_64 rng(32);
    const auto ref = small_model(rng);
    const auto c = contact_energy(SdfShape::plane(Vec3(0, 0, -1.0), Vec3::UnitZ(), 100.0), ref, ref.rest.positions);
    EXPECT_EQ(c.energy, 0.0);
    EXPECT_EQ(c.gradient.cwiseAbs().maxCoeff(), 0.0);
}

TEST(Contact, SinglePointDepth)
{
    // one point at depth 0.1 below a plane with alpha_c = 100 and V = 1
    std::mt19937_64 rng(33);
    auto ref = small_model(rng);
    for (auto &nb : ref.neighborhoods)
        nb.volume = 1.0;
    Points y = ref.rest.positions;
    y.row(2).array() += 10.0;
    y.col(4) = Vec3(0.3, 0.1, -0.1);
    const auto c = contact_energy(SdfShape::plane(Vec3::Zero(), Vec3::UnitZ(), 100.0), ref, y);
    EXPECT_NEAR(c.energy, 1.0, 1e-12);
}

TEST(Contact, GradientMatchesFiniteDifferences)
{
    std::mt19937_64 rng(34);
    const auto ref = small_model(rng);
    const std::vector<SdfShape> shapes{SdfShape::sphere(Vec3(0.2, 0.15, 0.35), 0.2, 50.0),
                                       SdfShape::plane(Vec3(0, 0, 0.12), Vec3(0.1, 0.0, 1.0).normalized(), 50.0),
                                       SdfShape::box(Vec3(0.2, 0.15, 0.3), Vec3(0.15, 0.1, 0.14), 50.0)};
    for (const auto &s : shapes)
    {
        const Points y = perturb(ref.rest.positions, 1e-3, rng);
        // keep every point clear of the kink at d = 0
        bool near_kink = false;
        for (int i = 0; i < ref.size(); ++i)
            near_kink |= std::abs(sdf_eval(s, y.col(i))) < 1e-5;
        ASSERT_FALSE(near_kink);
        const auto c = contact_energy(s, ref, y);
        ASSERT_GT(c.energy, 0.0);
        const auto fd = fd_gradient([&](const Points &p) { return contact_energy(s, ref, p).energy; }, y, 1e-7);
        EXPECT_LT(rel_error(c.gradient, fd), 1e-5);
    }
}

TEST(Contact, ContinuousAcrossSurface)
{
    std::mt19937_64 rng(35);
    const auto ref = small_model(rng);
    const auto plane = SdfShape::plane(Vec3::Zero(), Vec3::UnitZ(), 1e4);
    Points y = ref.rest.positions;
    y.row(2).array() += 1.0;
    const double v = ref.neighborhoods[0].volume;
    for (double depth : {1e-2, 1e-3, 1e-4, 1e-6, 0.0})
    {
        y(2, 0) = -depth;
        const auto c = contact_energy(plane, ref, y);
        EXPECT_NEAR(c.energy, v * 1e4 * depth * depth, 1e-15 * v);
        EXPECT_NEAR(c.gradient.norm(), 2.0 * 1e4 * v * depth, 1e-12);
    }
    y(2, 0) = 0.0;
    EXPECT_EQ(contact_energy(plane, ref, y).energy, 0.0);
}

TEST(AirJet, OnAxisInverseSquare)
{
    std::mt19937_64 rng(36);
    const auto ref = small_model(rng);
    AirJet jet;
    jet.nozzle = Vec3(0, 0, 0);
    jet.direction = Vec3::UnitX();
    jet.strength = 2.0;
    jet.falloff_power = 2.0;
    jet.half_angle = 0.2;
    Points y = Points::Constant(3, ref.size(), -5.0);
    y.col(3) = Vec3(1.0, 0.0, 0.0);  // on axis at distance 1
    y.col(4) = Vec3(-1.0, 0.0, 0.0); // behind nozzle
    y.col(5) = Vec3(1.0, 1.0, 0.0);  // 45 degrees off axis
    y.col(6) = Vec3(2.0, 0.0, 0.0);
    const Points f = air_jet_forces(jet, ref, y);
    EXPECT_LT((f.col(3) - Vec3(2.0, 0, 0)).norm(), 1e-15);
    EXPECT_EQ(f.col(4).norm(), 0.0);
    EXPECT_EQ(f.col(5).norm(), 0.0);
    EXPECT_NEAR(f.col(6).norm(), 0.5, 1e-15);
}

TEST(AirJet, MonotoneAlongAxisAndSurfaceOnly)
{
    std::mt19937_64 rng(37);
    auto ref = small_model(rng);
    AirJet jet;
    jet.direction = Vec3::UnitY();
    jet.strength = 1.0;
    jet.falloff_power = 1.5;
    Points y = Points::Zero(3, ref.size());
    for (int i = 0; i < ref.size(); ++i)
        y.col(i) = Vec3(0, 0.001 + 0.05 * i, 0);
    const Points f = air_jet_forces(jet, ref, y);
    for (int i = 1; i < ref.size(); ++i)
        EXPECT_LE(f.col(i).norm(), f.col(i - 1).norm());
    // inside r_min the force saturates
    EXPECT_DOUBLE_EQ(f.col(0).norm(), 1.0 / std::pow(0.01, 1.5));

    ref.surface_mask[2] = false;
    EXPECT_EQ(air_jet_forces(jet, ref, y).col(2).norm(), 0.0);
}

TEST(AirJet, RejectsInvalid)
{
    std::mt19937_64 rng(38);
    const auto ref = small_model(rng);
    AirJet jet;
    jet.direction = Vec3(1, 1, 0);
    EXPECT_THROW(air_jet_forces(jet, ref, ref.rest.positions), ValidationError);
    jet.direction = Vec3::UnitX();
    jet.half_angle = 2.0;
    EXPECT_THROW(air_jet_forces(jet, ref, ref.rest.positions), ValidationError);
}

TEST(Frame, GravityOnly)
{
    std::mt19937_64 rng(39);
    const auto ref = small_model(rng);
    const Vec3 g(0, 0, -9.81);
    const auto frame = assemble_frame(ref, g, {}, {}, {}, {}, {});
    for (int i = 0; i < ref.size(); ++i)
        EXPECT_EQ(frame.forces.col(i), ref.point_masses(i) * g);
}

TEST(Frame, SuperpositionOfSources)
{
    std::mt19937_64 rng(40);
    const auto ref = small_model(rng);
    AirJet jet;
    jet.nozzle = Vec3(0.2, 0.15, -0.5);
    jet.direction = Vec3::UnitZ();
    jet.strength = 0.3;
    jet.half_angle = 0.5;
    const Vec3 g(0, 0, -9.81);
    const std::vector<PointLoad> loads{{3, Vec3(0.1, 0, 0)}, {7, Vec3(0, 0.2, 0)}};
    const auto all = assemble_frame(ref, g, {jet}, loads, {}, {}, {});
    const auto only_g = assemble_frame(ref, g, {}, {}, {}, {}, {});
    const auto only_jet = assemble_frame(ref, Vec3::Zero(), {jet}, {}, {}, {}, {});
    const auto only_loads = assemble_frame(ref, Vec3::Zero(), {}, loads, {}, {}, {});
    EXPECT_GT(only_jet.forces.norm(), 0.0);
    EXPECT_LT((all.forces - only_g.forces - only_jet.forces - only_loads.forces).norm(), 1e-15);

    const auto twice = assemble_frame(ref, 2.0 * g, {}, {}, {}, {}, {});
    EXPECT_LT((twice.forces - 2.0 * only_g.forces).norm(), 1e-15);
}

TEST(Frame, PinAndAttractionOverlapRejected)
{
    std::mt19937_64 rng(41);
    const auto ref = small_model(rng);
    const auto pins = pins_at_rest(ref, {2, 5});
    EXPECT_THROW(assemble_frame(ref, Vec3::Zero(), {}, {}, pins, {{5, Vec3::Zero()}}, {}), ValidationError);
    EXPECT_NO_THROW(assemble_frame(ref, Vec3::Zero(), {}, {}, pins, {{6, Vec3::Zero()}}, {}));
    EXPECT_THROW(assemble_frame(ref, Vec3::Zero(), {}, {{999, Vec3::Zero()}}, {}, {}, {}), ValidationError);
}
