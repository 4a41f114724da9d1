//! \file vesselcomm/reception.hpp
//! Receiver cells tiling the vessel wall and carrier assimilation on contact.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <numbers>
#include <optional>
#include <random>
#include <stdexcept>
#include <vector>

#include "core_model.hpp"
#include "flow_diffusion.hpp"

namespace vesselcomm {

struct AssimilationEvent
{
    double time = 0.0;  // us
    std::uint64_t carrier_id = 0;

    friend bool operator==(AssimilationEvent const&, AssimilationEvent const&) = default;
};

struct ReceiverCell
{
    int ring = 0;
    int ring_position = 0;
    double phi_center = 0.0;
    double z_center = 0.0;
    double side = 15.0;
    int receptor_count = 1000;
    double receptor_radius = 0.004;
    double delta_phi = 0.0;  // relative to the release point, (-pi, pi]
    double delta_L = 0.0;
    std::vector<AssimilationEvent> log;

    // Finite-receptor mode bookkeeping.
    int free_receptors = 1000;
    std::deque<double> recycle_at;
};

/*!
 * Geometric receptor coverage of a cell face, N_r pi a_r^2 / side^2,
 * clamped to [0, 1]. This is the assimilation probability per wall contact.
 */
inline double coverage_fraction(int receptors, double receptor_radius, double side)
{
    double const f = receptors * std::numbers::pi * receptor_radius
                     * receptor_radius / (side * side);
    return std::clamp(f, 0.0, 1.0);
}

inline double coverage_fraction(ReceiverCell const& cell)
{
    return coverage_fraction(cell.receptor_count, cell.receptor_radius, cell.side);
}

/*!
 * Tile the wall band z in [z_begin, z_end) with square-ish cells of the
 * given side. Each ring holds round(2 pi R / side) equal-angle cells, the
 * first one centred on the release azimuth so that a delta_phi = 0 column
 * exists.
 */
inline std::vector<ReceiverCell>
tile_vessel_wall(VesselGeometry const& geometry, ReceiverLayout const& layout,
                 double z_begin, double z_end, CylindricalPosition const& release)
{
    double const circumference = two_pi * geometry.radius;
    if (!(layout.cell_side > 0.0))
        throw std::invalid_argument("tile_vessel_wall: side must be positive");
    if (layout.cell_side > circumference * (1.0 + 1e-12))
        throw std::invalid_argument(
            "tile_vessel_wall: cell side exceeds the vessel circumference");
    if (z_begin < -1e-9 || z_end > geometry.length + 1e-9 || !(z_end > z_begin))
        throw std::invalid_argument("tile_vessel_wall: z range outside vessel");

    int const per_ring = std::max(1, static_cast<int>(std::lround(circumference / layout.cell_side)));
    int const rings = static_cast<int>(std::floor((z_end - z_begin) / layout.cell_side + 1e-9));
    double const dphi = two_pi / per_ring;

    std::vector<ReceiverCell> cells;
    cells.reserve(static_cast<std::size_t>(rings) * per_ring);
    for (int k = 0; k < rings; ++k)
    {
        for (int m = 0; m < per_ring; ++m)
        {
            ReceiverCell c;
            c.ring = k;
            c.ring_position = m;
            c.phi_center = std::fmod(release.phi + m * dphi, two_pi);
            c.z_center = z_begin + (k + 0.5) * layout.cell_side;
            c.side = layout.cell_side;
            c.receptor_count = layout.receptor_count;
            c.receptor_radius = layout.receptor_radius;
            c.delta_phi = wrap_angle(m * dphi);
            c.delta_L = c.z_center - release.z;
            c.free_receptors = layout.receptor_count;
            cells.push_back(std::move(c));
        }
    }
    return cells;
}

/*!
 * The receiver tiling of a configured vessel, with the wall-point to cell
 * lookup used by the reception check.
 */
class ReceiverArray
{
  public:
    ReceiverArray() = default;

    ReceiverArray(VesselGeometry const& geometry, ReceiverLayout const& layout,
                  CylindricalPosition const& release)
        : layout_(layout)
        , z_begin_(release.z + layout.delta_L_min)
        , phi_origin_(release.phi)
    {
        cells_ = tile_vessel_wall(geometry, layout, z_begin_,
                                  release.z + layout.delta_L_max, release);
        per_ring_ = std::max(1, static_cast<int>(std::lround(two_pi * geometry.radius / layout.cell_side)));
        rings_ = static_cast<int>(cells_.size()) / per_ring_;
    }

    std::vector<ReceiverCell>& cells() { return cells_; }
    std::vector<ReceiverCell> const& cells() const { return cells_; }
    int per_ring() const { return per_ring_; }
    int rings() const { return rings_; }
    ReceiverLayout const& layout() const { return layout_; }

    std::size_t index(int ring, int position) const
    {
        return static_cast<std::size_t>(ring) * per_ring_ + position;
    }

    //! Cell owning the wall point at azimuth phi and height z, if any.
    std::optional<std::size_t> locate(double phi, double z) const
    {
        if (rings_ == 0)
            return std::nullopt;
        double const fz = (z - z_begin_) / layout_.cell_side;
        if (!(fz >= 0.0) || !(fz < rings_))
            return std::nullopt;
        int const ring = static_cast<int>(fz);
        double const dphi = two_pi / per_ring_;
        double rel = std::fmod(phi - phi_origin_ + 0.5 * dphi, two_pi);
        if (rel < 0.0)
            rel += two_pi;
        int pos = static_cast<int>(rel / dphi);
        if (pos >= per_ring_)
            pos = per_ring_ - 1;
        return index(ring, pos);
    }

    std::optional<std::size_t> locate(Vec3 const& p) const
    {
        return locate(std::atan2(p.y, p.x), p.z);
    }

  private:
    ReceiverLayout layout_;
    std::vector<ReceiverCell> cells_;
    int per_ring_ = 0;
    int rings_ = 0;
    double z_begin_ = 0.0;
    double phi_origin_ = 0.0;
};

/*!
 * A carrier touching a receiver cell is assimilated with probability equal
 * to the cell's receptor coverage. On success the carrier leaves the world
 * and the event is logged; otherwise the caller reflects it off the wall.
 *
 * In finite-receptor mode the coverage uses the receptors currently free,
 * and each assimilation occupies one receptor for the recycle time.
 */
template<class Rng>
bool attempt_assimilation(ParticleState& carrier, std::uint64_t carrier_id,
                          ReceiverCell& cell, double time, Rng& rng,
                          bool finite_receptors = false, double recycle_time = 0.0)
{
    if (carrier.status != ParticleStatus::free)
        return false;
    double p;
    if (finite_receptors)
    {
        while (!cell.recycle_at.empty() && cell.recycle_at.front() <= time)
        {
            cell.recycle_at.pop_front();
            ++cell.free_receptors;
        }
        p = coverage_fraction(cell.free_receptors, cell.receptor_radius, cell.side);
    }
    else
    {
        p = coverage_fraction(cell);
    }
    double const u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
    if (!(u < p))
        return false;
    carrier.status = ParticleStatus::assimilated;
    cell.log.push_back({time, carrier_id});
    if (finite_receptors)
    {
        --cell.free_receptors;
        cell.recycle_at.push_back(time + recycle_time);
    }
    return true;
}

struct ReceptionMapEntry
{
    int ring = 0;
    int ring_position = 0;
    double delta_phi = 0.0;
    double delta_L = 0.0;
    std::int64_t count = 0;
};

struct ReceptionMap
{
    double horizon = 0.0;
    std::vector<ReceptionMapEntry> entries;

    std::int64_t total() const
    {
        std::int64_t t = 0;
        for (auto const& e : entries)
            t += e.count;
        return t;
    }

    //! Index of the entry with the largest count (first one on ties).
    std::size_t argmax() const
    {
        std::size_t best = 0;
        for (std::size_t i = 1; i < entries.size(); ++i)
            if (entries[i].count > entries[best].count)
                best = i;
        return best;
    }
};

inline ReceptionMap reception_map(std::vector<ReceiverCell> const& cells, double horizon)
{
    ReceptionMap map;
    map.horizon = horizon;
    map.entries.reserve(cells.size());
    for (auto const& c : cells)
    {
        std::int64_t n = 0;
        for (auto const& e : c.log)
            n += e.time <= horizon ? 1 : 0;
        map.entries.push_back({c.ring, c.ring_position, c.delta_phi, c.delta_L, n});
    }
    return map;
}

}  // namespace vesselcomm
