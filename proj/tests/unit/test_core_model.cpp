#include <cmath>
#include <numbers>
#include <random>

#include <gtest/gtest.h>

#include "vesselcomm/config.hpp"
#include "vesselcomm/core_model.hpp"

using namespace vesselcomm;

namespace {

// Independent SI evaluation of k_B T / (6 pi eta a), returned in um^2/us.
double stokes_einstein_si(double a_m, double theta, double eta)
{
    double const kb = 1.380649e-23;
    double const d_m2_per_s = kb * theta / (6.0 * M_PI * eta * a_m);
    return d_m2_per_s * 1e12 / 1e6;
}

}  // namespace

TEST(StokesEinstein, CarrierMatchesSiOracle)
{
    double const expected = stokes_einstein_si(1.75e-9, 310.0, 1.3e-3);
    EXPECT_NEAR(expected, 9.98e-5, 0.01e-5);
    EXPECT_NEAR(stokes_einstein_diffusivity(1.75 * units::nm, 310.0, 1.3 * units::mPa_s),
                expected, 1e-12 * expected);
}

TEST(StokesEinstein, PlateletMatchesSiOracle)
{
    double const expected = stokes_einstein_si(1.0e-6, 310.0, 1.3e-3);
    EXPECT_NEAR(expected, 1.75e-7, 0.01e-7);
    EXPECT_NEAR(stokes_einstein_diffusivity(1.0, 310.0, 1.3e-3), expected, 1e-12 * expected);
}

TEST(StokesEinstein, InverseInRadius)
{
    double const d1 = stokes_einstein_diffusivity(0.5, 310.0, 1.3e-3);
    double const d2 = stokes_einstein_diffusivity(1.0, 310.0, 1.3e-3);
    EXPECT_DOUBLE_EQ(d1, 2.0 * d2);
}

TEST(StokesEinstein, RejectsNonPositive)
{
    EXPECT_THROW(stokes_einstein_diffusivity(0.0, 310.0, 1e-3), std::invalid_argument);
    EXPECT_THROW(stokes_einstein_diffusivity(1.0, -1.0, 1e-3), std::invalid_argument);
}

TEST(Cylindrical, AxisAlignedExamples)
{
    auto a = to_cartesian({0.0, 30.0, 5.0});
    EXPECT_NEAR(a.x, 30.0, 1e-12);
    EXPECT_NEAR(a.y, 0.0, 1e-12);
    EXPECT_NEAR(a.z, 5.0, 1e-12);
    auto b = to_cartesian({std::numbers::pi / 2, 2.0, 0.0});
    EXPECT_NEAR(b.x, 0.0, 1e-12);
    EXPECT_NEAR(b.y, 2.0, 1e-12);
}

TEST(Cylindrical, AxisPointHasZeroAzimuth)
{
    auto c = from_cartesian({0.0, 0.0, 7.0});
    EXPECT_EQ(c.phi, 0.0);
    EXPECT_EQ(c.r, 0.0);
    EXPECT_EQ(c.z, 7.0);
}

TEST(Cylindrical, RoundTripFuzz)
{
    std::mt19937_64 rng(42);
    std::uniform_real_distribution<double> phi(0.0, two_pi), r(0.0, 30.0), z(-100.0, 1400.0);
    for (int k = 0; k < 10000; ++k)
    {
        CylindricalPosition p{phi(rng), r(rng), z(rng)};
        auto v = to_cartesian(p);
        auto q = from_cartesian(v);
        EXPECT_NEAR(q.r, std::hypot(v.x, v.y), 1e-12);
        auto w = to_cartesian(q);
        ASSERT_LT(norm(w - v), 1e-9);
        ASSERT_GE(q.phi, 0.0);
        ASSERT_LT(q.phi, two_pi);
    }
}

TEST(Units, ReferenceValuesConvert)
{
    EXPECT_EQ(0.5 * units::mm_per_s, 5e-4);
    EXPECT_EQ(1.35 * units::mm, 1350.0);
    EXPECT_EQ(4.0 * units::nm, 0.004);
}

TEST(Population, DefaultPopulationCounts)
{
    // Vessel volume pi * 30^2 * 1350 um^3 = 3.8170e-3 mm^3.
    VesselGeometry g;
    double const volume_mm3 = M_PI * 900.0 * 1350.0 / 1e9;
    EXPECT_NEAR(g.volume() / units::um3_per_mm3, volume_mm3, 1e-15);
    EXPECT_EQ(population_count(4.0e6, g), 15268);
    EXPECT_EQ(population_count(4.0e3, g), 15);
    EXPECT_EQ(population_count(2.0e5, g), 763);
}

TEST(Population, FullRbcDensityExceedsHardSpherePacking)
{
    // 15268 rigid spheres of radius 3.5 um cannot be overlap-free in this
    // vessel: their volume fraction is above random close packing (~0.64).
    VesselGeometry g;
    double const sphere = 4.0 / 3.0 * M_PI * std::pow(3.5, 3);
    double const fraction = 15268 * sphere / g.volume();
    EXPECT_GT(fraction, 0.64);
}

TEST(LoadConfig, EmptyDocumentGivesDefaults)
{
    auto c = load_config("");
    EXPECT_EQ(c, default_config());
    auto d = load_config("{\"vessel\": {}, \"fluid\": {}, \"simulation\": {}}");
    EXPECT_EQ(d, default_config());
    EXPECT_EQ(c.geometry.radius, 30.0);
    EXPECT_EQ(c.geometry.length, 1350.0);
    EXPECT_EQ(c.fluid.mean_velocity, 5e-4);
    EXPECT_DOUBLE_EQ(c.fluid.viscosity, 1.3e-3);
    EXPECT_EQ(c.fluid.temperature, 310.0);
    EXPECT_EQ(c.time_step, 5.0);
    EXPECT_EQ(c.receivers.cell_side, 15.0);
    EXPECT_EQ(c.receivers.receptor_count, 1000);
    EXPECT_EQ(c.receivers.receptor_radius, 0.004);
    ASSERT_NE(c.find_species("rbc"), nullptr);
    EXPECT_EQ(c.find_species("rbc")->radius, 3.5);
    EXPECT_EQ(c.find_species("wbc")->concentration, 4.0e3);
    EXPECT_EQ(c.carrier().radius, 1.75e-3);
    EXPECT_NEAR(c.transmitter.position.phi, M_PI / 4, 1e-15);
}

TEST(LoadConfig, TransmitterOutsideVesselRejected)
{
    try
    {
        load_config(R"({"transmitter": {"d_um": 31.0}})");
        FAIL() << "expected a validation error";
    }
    catch (ConfigError const& e)
    {
        EXPECT_EQ(e.kind(), ConfigError::Kind::validation);
        EXPECT_NE(std::string(e.what()).find("transmitter outside vessel"), std::string::npos);
    }
}

TEST(LoadConfig, ZeroTimeStepRejected)
{
    EXPECT_THROW(load_config(R"({"simulation": {"time_step_us": 0}})"), ConfigError);
}

TEST(LoadConfig, ParseErrorReportsLine)
{
    try
    {
        load_config("{\n  \"vessel\": {\n    \"radius_um\": 30,,\n  }\n}");
        FAIL() << "expected a parse error";
    }
    catch (ConfigError const& e)
    {
        EXPECT_EQ(e.kind(), ConfigError::Kind::parse);
        EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos) << e.what();
    }
}

TEST(LoadConfig, UnknownKeyRejected)
{
    EXPECT_THROW(load_config(R"({"vessel": {"radius": 30}})"), ConfigError);
}

TEST(LoadConfig, SpeciesOverridesMergeWithDefaults)
{
    auto c = load_config(R"({"species": [
        {"name": "platelet"},
        {"name": "rbc", "concentration_per_mm3": 4e5},
        {"name": "sCD40L", "diffusivity_um2_per_us": 1e-4}]})");
    ASSERT_EQ(c.species.size(), 3u);
    EXPECT_EQ(c.find_species("rbc")->concentration, 4e5);
    EXPECT_EQ(c.find_species("rbc")->radius, 3.5);
    EXPECT_EQ(species_diffusivity(c.carrier(), c.fluid), 1e-4);
}

TEST(LoadConfig, RequiresExactlyOneCarrier)
{
    EXPECT_THROW(load_config(R"({"species": [{"name": "platelet"}]})"), ConfigError);
}

TEST(LoadConfig, SerializeRoundTrip)
{
    auto c = default_config();
    c.seed = 77;
    c.duration = 2.0 * units::s;
    c.transmitter.position.r = 0.0;
    c.species[2].concentration = 4e5;
    c.species[3].diffusivity = 1.234e-4;
    c.receivers.finite_receptors = true;
    c.receivers.recycle_time = 100.0;
    auto text = serialize_config(c);
    auto back = load_config(text);
    EXPECT_EQ(back, c);
    EXPECT_EQ(serialize_config(back), text);
}
