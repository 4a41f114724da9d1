//! \file vesselcomm/flow_diffusion.hpp
//! Per-step kinematics before collision resolution: Poiseuille drift along
//! the vessel axis plus Brownian displacement (Euler-Maruyama, fixed step).
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>

#include <boost/random/normal_distribution.hpp>

#include "core_model.hpp"
#include "vec3.hpp"

namespace vesselcomm {

enum class ParticleStatus : std::uint8_t
{
    free,
    assimilated,
    exited
};

struct ParticleState
{
    std::uint32_t species = 0;
    Vec3 position;
    double radius = 0.0;
    double diffusivity = 0.0;
    ParticleStatus status = ParticleStatus::free;
};

/// Axial velocity of the parabolic profile, 2 v_mean (1 - (r/R)^2).
inline double poiseuille_velocity(double r, double R, double mean_velocity)
{
    if (r < 0.0 || r > R)
        throw std::domain_error("poiseuille_velocity: r outside [0, R]");
    double const rho = r / R;
    return 2.0 * mean_velocity * (1.0 - rho * rho);
}

//! Independent N(0, 2 D dt) sample per axis (ziggurat sampler; the
//! libstdc++ polar method is about three times slower here).
template<class Rng>
Vec3 brownian_displacement(double diffusivity, double dt, Rng& rng)
{
    if (diffusivity == 0.0)
        return {};
    boost::random::normal_distribution<double> gauss(0.0, std::sqrt(2.0 * diffusivity * dt));
    double const x = gauss(rng);
    double const y = gauss(rng);
    double const z = gauss(rng);
    return {x, y, z};
}

/*!
 * Proposed position after drift and diffusion. Wall, outlet and collision
 * handling are applied afterwards by the collision engine.
 *
 * Particles that already sit outside the wall (possible only transiently)
 * are advected with the no-slip velocity, i.e. not at all.
 */
template<class Rng>
Vec3 advect_and_diffuse(ParticleState const& p, VesselGeometry const& geometry,
                        FluidCharacteristics const& fluid, double dt, Rng& rng)
{
    double const r = std::min(radial_distance(p.position), geometry.radius);
    Vec3 next = p.position;
    next.z += poiseuille_velocity(r, geometry.radius, fluid.mean_velocity) * dt;
    next += brownian_displacement(p.diffusivity, dt, rng);
    return next;
}

}  // namespace vesselcomm
