//! \file vesselcomm/core_model.hpp
//! Shared model vocabulary: units, vessel geometry, fluid, species and the
//! simulation configuration with its validation rules.
#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "vec3.hpp"

namespace vesselcomm {

//---------------------------------------------------------------------------//
// Units. Internally every length is in micrometres and every time in
// microseconds; the constants below convert a value expressed in the named
// unit into internal units.
//---------------------------------------------------------------------------//
namespace units {
inline constexpr double um = 1.0;
inline constexpr double nm = 1.0e-3;
inline constexpr double mm = 1.0e3;
inline constexpr double m = 1.0e6;
inline constexpr double us = 1.0;
inline constexpr double ms = 1.0e3;
inline constexpr double s = 1.0e6;
inline constexpr double mm_per_s = 1.0e-3;      // um/us
inline constexpr double m2_per_s = 1.0e6;       // um^2/us
inline constexpr double mPa_s = 1.0e-3;         // Pa*s (viscosity stays SI)
inline constexpr double um3_per_mm3 = 1.0e9;

inline constexpr double boltzmann = 1.380649e-23;  // J/K
}  // namespace units

inline constexpr double two_pi = 2.0 * std::numbers::pi;

//---------------------------------------------------------------------------//
// Errors
//---------------------------------------------------------------------------//
class ConfigError : public std::runtime_error
{
  public:
    enum class Kind
    {
        parse,
        validation
    };

    ConfigError(Kind kind, std::string const& what)
        : std::runtime_error(what), kind_(kind)
    {
    }

    Kind kind() const noexcept { return kind_; }

  private:
    Kind kind_;
};

//---------------------------------------------------------------------------//
// Geometry
//---------------------------------------------------------------------------//
struct CylindricalPosition
{
    double phi = 0.0;  // radians in [0, 2pi)
    double r = 0.0;
    double z = 0.0;

    friend bool operator==(CylindricalPosition const&,
                           CylindricalPosition const&) = default;
};

inline Vec3 to_cartesian(CylindricalPosition const& p)
{
    return {p.r * std::cos(p.phi), p.r * std::sin(p.phi), p.z};
}

/// The azimuth of a point on the axis is 0.
inline CylindricalPosition from_cartesian(Vec3 const& v)
{
    double const r = radial_distance(v);
    double phi = 0.0;
    if (r > 0.0)
    {
        phi = std::atan2(v.y, v.x);
        if (phi < 0.0)
            phi += two_pi;
        if (phi >= two_pi)
            phi = 0.0;
    }
    return {phi, r, v.z};
}

/// Wrap an angle difference into (-pi, pi].
inline double wrap_angle(double a)
{
    a = std::remainder(a, two_pi);
    if (a <= -std::numbers::pi)
        a += two_pi;
    return a;
}

enum class OutletPolicy
{
    absorbing
};

struct VesselGeometry
{
    double radius = 30.0 * units::um;
    double length = 1.35 * units::mm;
    OutletPolicy outlet = OutletPolicy::absorbing;

    double volume() const { return std::numbers::pi * radius * radius * length; }

    //! Whether a sphere of radius a centred at p lies radially inside the wall.
    bool contains(Vec3 const& p, double a) const
    {
        return radial_distance(p) <= radius - a;
    }

    friend bool operator==(VesselGeometry const&, VesselGeometry const&) = default;
};

struct FluidCharacteristics
{
    double mean_velocity = 0.5 * units::mm_per_s;  // um/us
    double viscosity = 1.3 * units::mPa_s;         // Pa*s
    double temperature = 310.0;                    // K

    friend bool operator==(FluidCharacteristics const&,
                           FluidCharacteristics const&) = default;
};

//---------------------------------------------------------------------------//
// Species
//---------------------------------------------------------------------------//
enum class SpeciesKind
{
    carrier,  // released by bursts, never pre-populated
    cell
};

struct SpeciesSpec
{
    std::string name;
    SpeciesKind kind = SpeciesKind::cell;
    double radius = 1.0;
    double concentration = 0.0;  // per mm^3
    int receptor_count = 0;
    double receptor_radius = 0.0;
    std::optional<double> diffusivity;  // um^2/us, overrides Stokes-Einstein

    friend bool operator==(SpeciesSpec const&, SpeciesSpec const&) = default;
};

/*!
 * Stokes-Einstein diffusion coefficient of a sphere.
 *
 * Radius in um, temperature in K, viscosity in Pa*s; the result is in
 * um^2/us.
 */
inline double stokes_einstein_diffusivity(double radius, double temperature,
                                          double viscosity)
{
    if (!(radius > 0.0) || !(temperature > 0.0) || !(viscosity > 0.0))
        throw std::invalid_argument(
            "stokes_einstein_diffusivity: arguments must be positive");
    double const radius_m = radius / units::m;
    double const d_si = units::boltzmann * temperature
                        / (6.0 * std::numbers::pi * viscosity * radius_m);
    return d_si * units::m2_per_s;
}

inline double species_diffusivity(SpeciesSpec const& s,
                                  FluidCharacteristics const& f)
{
    if (s.diffusivity)
        return *s.diffusivity;
    return stokes_einstein_diffusivity(s.radius, f.temperature, f.viscosity);
}

/// Expected number of particles of a species filling the vessel.
inline double expected_population(double concentration_per_mm3,
                                  VesselGeometry const& g)
{
    return concentration_per_mm3 * g.volume() / units::um3_per_mm3;
}

inline std::int64_t population_count(double concentration_per_mm3,
                                     VesselGeometry const& g)
{
    return std::llround(expected_population(concentration_per_mm3, g));
}

//---------------------------------------------------------------------------//
// Configuration
//---------------------------------------------------------------------------//
struct TransmitterPlacement
{
    std::string species = "platelet";
    CylindricalPosition position{std::numbers::pi / 4.0, 27.125, 400.0};

    friend bool operator==(TransmitterPlacement const&,
                           TransmitterPlacement const&) = default;
};

//! Wall tiling of receiver (endothelial) cells.
struct ReceiverLayout
{
    double cell_side = 15.0 * units::um;
    int receptor_count = 1000;
    double receptor_radius = 4.0 * units::nm;
    // Longitudinal band covered by receivers, relative to the release point.
    double delta_L_min = -0.4 * units::mm;
    double delta_L_max = 0.95 * units::mm;
    // Finite-receptor mode: each assimilation occupies one receptor until
    // recycle_time has elapsed.
    bool finite_receptors = false;
    double recycle_time = 0.0;

    friend bool operator==(ReceiverLayout const&, ReceiverLayout const&) = default;
};

struct PhysicsOptions
{
    bool carrier_collisions = false;
    bool mobile_capture = false;
    bool poisson_populations = false;
    int max_sweeps = 8;

    friend bool operator==(PhysicsOptions const&, PhysicsOptions const&) = default;
};

struct SimulationConfig
{
    VesselGeometry geometry;
    FluidCharacteristics fluid;
    std::vector<SpeciesSpec> species;
    double time_step = 5.0 * units::us;
    double duration = 8.0 * units::s;
    TransmitterPlacement transmitter;
    std::uint64_t seed = 1;
    int threads = 1;
    bool deterministic = true;
    PhysicsOptions physics;
    ReceiverLayout receivers;

    SpeciesSpec const* find_species(std::string const& name) const
    {
        for (auto const& s : species)
            if (s.name == name)
                return &s;
        return nullptr;
    }

    SpeciesSpec* find_species(std::string const& name)
    {
        return const_cast<SpeciesSpec*>(std::as_const(*this).find_species(name));
    }

    //! The unique carrier species; validation guarantees it exists.
    SpeciesSpec const& carrier() const
    {
        for (auto const& s : species)
            if (s.kind == SpeciesKind::carrier)
                return s;
        throw ConfigError(ConfigError::Kind::validation,
                          "no carrier species configured");
    }

    std::int64_t step_count() const
    {
        return static_cast<std::int64_t>(std::floor(duration / time_step + 1e-9));
    }

    friend bool operator==(SimulationConfig const&, SimulationConfig const&) = default;
};

inline std::vector<SpeciesSpec> default_species()
{
    return {
        {"platelet", SpeciesKind::cell, 1.0 * units::um, 2.0e5, 1000, 4.0 * units::nm, {}},
        // No WBC receptor radius is available; the CD40 value is reused.
        {"wbc", SpeciesKind::cell, 5.0 * units::um, 4.0e3, 2000, 4.0 * units::nm, {}},
        {"rbc", SpeciesKind::cell, 3.5 * units::um, 4.0e6, 0, 0.0, {}},
        {"sCD40L", SpeciesKind::carrier, 1.75 * units::nm, 0.0, 0, 0.0, {}},
    };
}

inline SimulationConfig default_config()
{
    SimulationConfig c;
    c.species = default_species();
    return c;
}

inline void validate(SimulationConfig const& c)
{
    auto fail = [](std::string const& msg) {
        throw ConfigError(ConfigError::Kind::validation, msg);
    };
    auto const& g = c.geometry;
    if (!(g.radius > 0.0))
        fail("vessel radius must be positive");
    if (!(g.length > 0.0))
        fail("vessel length must be positive");
    auto const& f = c.fluid;
    if (!(f.mean_velocity > 0.0))
        fail("mean flow velocity must be positive");
    if (!(f.viscosity > 0.0))
        fail("viscosity must be positive");
    if (!(f.temperature > 0.0))
        fail("temperature must be positive");
    if (!(c.time_step > 0.0))
        fail("time step must be positive");
    if (!(c.duration >= c.time_step))
        fail("duration must be at least one time step");
    if (c.threads < 1)
        fail("thread count must be at least 1");
    if (c.physics.max_sweeps < 1)
        fail("max_sweeps must be at least 1");

    int carriers = 0;
    for (std::size_t i = 0; i < c.species.size(); ++i)
    {
        auto const& s = c.species[i];
        if (s.name.empty())
            fail("species name must not be empty");
        for (std::size_t j = 0; j < i; ++j)
            if (c.species[j].name == s.name)
                fail("duplicate species '" + s.name + "'");
        if (!(s.radius > 0.0))
            fail("species '" + s.name + "' radius must be positive");
        if (!(s.concentration >= 0.0))
            fail("species '" + s.name + "' concentration must be >= 0");
        if (s.receptor_count < 0 || s.receptor_radius < 0.0)
            fail("species '" + s.name + "' receptor fields must be >= 0");
        if (s.diffusivity && !(*s.diffusivity >= 0.0))
            fail("species '" + s.name + "' diffusivity must be >= 0");
        if (s.kind == SpeciesKind::carrier)
        {
            ++carriers;
            if (s.concentration != 0.0)
                fail("carrier species '" + s.name
                     + "' must have zero concentration");
        }
        if (2.0 * s.radius > 2.0 * g.radius)
            fail("species '" + s.name + "' does not fit in the vessel");
    }
    if (carriers != 1)
        fail("exactly one carrier species is required");

    auto const* tx = c.find_species(c.transmitter.species);
    if (!tx)
        fail("transmitter species '" + c.transmitter.species + "' not found");
    if (tx->kind != SpeciesKind::cell)
        fail("transmitter species must be a cell species");
    auto const& x0 = c.transmitter.position;
    if (!(x0.phi >= 0.0 && x0.phi < two_pi))
        fail("transmitter phi must be in [0, 2pi)");
    if (!(x0.r >= 0.0 && x0.r <= g.radius - tx->radius))
        fail("transmitter outside vessel: d must satisfy 0 <= d <= R - a");
    if (!(x0.z >= 0.0 && x0.z <= g.length))
        fail("transmitter outside vessel: z must satisfy 0 <= z <= L");

    auto const& rx = c.receivers;
    if (!(rx.cell_side > 0.0))
        fail("receiver cell side must be positive");
    if (rx.receptor_count < 0 || rx.receptor_radius < 0.0)
        fail("receiver receptor fields must be >= 0");
    if (!(rx.delta_L_max > rx.delta_L_min))
        fail("receiver band must have positive extent");
    if (x0.z + rx.delta_L_min < -1e-9 || x0.z + rx.delta_L_max > g.length + 1e-9)
        fail("receiver band extends outside the vessel");
    if (rx.recycle_time < 0.0)
        fail("receptor recycle time must be >= 0");
}

}  // namespace vesselcomm
