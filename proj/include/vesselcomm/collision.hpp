//! \file vesselcomm/collision.hpp
//! Hard-sphere collision detection on a uniform grid and overdamped
//! positional resolution, plus wall reflection and outlet handling.
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

#ifdef _OPENMP
#    include <omp.h>
#endif

#include "core_model.hpp"
#include "flow_diffusion.hpp"
#include "vec3.hpp"

namespace vesselcomm {

//! Separation added on top of contact distance when resolving an overlap.
inline constexpr double contact_epsilon = 1.0e-6;

struct CollisionEvent
{
    std::uint32_t i = 0;
    std::uint32_t j = 0;
    Vec3 normal;  // unit vector pointing from i to j
    double overlap = 0.0;

    friend bool operator<(CollisionEvent const& a, CollisionEvent const& b)
    {
        return a.i != b.i ? a.i < b.i : a.j < b.j;
    }
};

/*!
 * Uniform bucket grid in CSR layout over the bounding box of the indexed
 * particles. With the cell size at least the largest diameter, every
 * overlapping pair lies in the same or in adjacent cells.
 */
class SpatialGrid
{
  public:
    SpatialGrid() = default;

    double cell_size() const { return cell_size_; }
    std::size_t cell_count() const { return start_.empty() ? 0 : start_.size() - 1; }
    std::size_t indexed_count() const { return indices_.size(); }
    int nx() const { return n_[0]; }
    int ny() const { return n_[1]; }
    int nz() const { return n_[2]; }

    std::size_t flat(int ix, int iy, int iz) const
    {
        return (static_cast<std::size_t>(iz) * n_[1] + iy) * n_[0] + ix;
    }

    //! Cell coordinates of a point, clamped into the grid.
    std::array<int, 3> cell_of(Vec3 const& p) const
    {
        double const c[3] = {p.x, p.y, p.z};
        std::array<int, 3> out{};
        for (int d = 0; d < 3; ++d)
        {
            double const f = std::floor((c[d] - origin_[d]) / cell_size_);
            double const hi = n_[d] - 1;
            out[d] = static_cast<int>(std::clamp(f, 0.0, hi));
        }
        return out;
    }

    std::span<std::uint32_t const> bucket(std::size_t cell) const
    {
        return {indices_.data() + start_[cell], start_[cell + 1] - start_[cell]};
    }

    //! Visit every particle index in the 27-cell neighborhood of a point.
    template<class F>
    void for_each_neighbor(Vec3 const& p, F&& f) const
    {
        if (indices_.empty())
            return;
        auto const c = cell_of(p);
        for (int iz = std::max(c[2] - 1, 0); iz <= std::min(c[2] + 1, n_[2] - 1); ++iz)
            for (int iy = std::max(c[1] - 1, 0); iy <= std::min(c[1] + 1, n_[1] - 1); ++iy)
                for (int ix = std::max(c[0] - 1, 0); ix <= std::min(c[0] + 1, n_[0] - 1); ++ix)
                    for (auto idx : bucket(flat(ix, iy, iz)))
                        f(idx);
    }

    template<class Range>
    static SpatialGrid build(std::span<ParticleState const> particles,
                             Range const& indices, double cell_size)
    {
        SpatialGrid g;
        g.rebuild(particles, indices, cell_size);
        return g;
    }

    /*!
     * Grid for neighbour queries by particles of radius at most
     * `query_radius` that are not themselves indexed. The cell only needs to
     * cover the largest query contact distance, which for tiny queries is
     * about half the usual cell.
     */
    template<class Range>
    static SpatialGrid build_for_queries(std::span<ParticleState const> particles,
                                         Range const& indices, double query_radius)
    {
        SpatialGrid g;
        g.rebuild_for_queries(particles, indices, query_radius);
        return g;
    }

    //! In-place variants of the builders; storage is reused between calls.
    template<class Range>
    void rebuild(std::span<ParticleState const> particles, Range const& indices,
                 double cell_size)
    {
        rebuild_impl(particles, indices, cell_size, -1.0);
    }

    template<class Range>
    void rebuild_for_queries(std::span<ParticleState const> particles, Range const& indices,
                             double query_radius)
    {
        double max_radius = 0.0;
        for (auto idx : indices)
            max_radius = std::max(max_radius, particles[idx].radius);
        rebuild_impl(particles, indices, max_radius + query_radius, query_radius);
    }

  private:
    // query_radius < 0: queries are the indexed particles themselves.
    template<class Range>
    void rebuild_impl(std::span<ParticleState const> particles, Range const& indices,
                      double cell_size, double query_radius);

    double cell_size_ = 1.0;
    double origin_[3] = {0, 0, 0};
    int n_[3] = {1, 1, 1};
    std::vector<std::uint32_t> start_;
    std::vector<std::uint32_t> indices_;
    std::vector<std::uint32_t> cell_id_;
};

template<class Range>
void SpatialGrid::rebuild_impl(std::span<ParticleState const> particles, Range const& indices,
                               double cell_size, double query_radius)
{
    double max_diameter = 0.0;
    double lo[3] = {std::numeric_limits<double>::max(),
                    std::numeric_limits<double>::max(),
                    std::numeric_limits<double>::max()};
    double hi[3] = {std::numeric_limits<double>::lowest(),
                    std::numeric_limits<double>::lowest(),
                    std::numeric_limits<double>::lowest()};
    std::size_t count = 0;
    for (auto idx : indices)
    {
        auto const& p = particles[idx];
        max_diameter = std::max(max_diameter, query_radius < 0.0
                                                  ? 2.0 * p.radius
                                                  : p.radius + query_radius);
        double const c[3] = {p.position.x, p.position.y, p.position.z};
        for (int d = 0; d < 3; ++d)
        {
            lo[d] = std::min(lo[d], c[d]);
            hi[d] = std::max(hi[d], c[d]);
        }
        ++count;
    }
    if (!(cell_size >= max_diameter * (1.0 - 1e-12)) || !(cell_size > 0.0))
        throw std::invalid_argument(
            "build_grid: cell size must be positive and at least the largest "
            "particle diameter");

    cell_size_ = cell_size;
    std::size_t cells = 1;
    for (int d = 0; d < 3; ++d)
    {
        if (count == 0)
        {
            origin_[d] = 0.0;
            n_[d] = 1;
            continue;
        }
        origin_[d] = lo[d];
        double const extent = (hi[d] - lo[d]) / cell_size;
        if (!(extent < 1.0e7))
            throw std::length_error("build_grid: particle extent too large");
        n_[d] = static_cast<int>(extent) + 1;
        cells *= static_cast<std::size_t>(n_[d]);
    }
    if (cells > (std::size_t{1} << 26))
        throw std::length_error("build_grid: too many grid cells");

    // Counting sort by cell. start_[c] first holds the running end of cell c;
    // filling backwards leaves it at the cell's first slot.
    cell_id_.clear();
    start_.assign(cells + 1, 0);
    for (auto idx : indices)
    {
        auto const c = cell_of(particles[idx].position);
        auto const f = static_cast<std::uint32_t>(flat(c[0], c[1], c[2]));
        cell_id_.push_back(f);
        ++start_[f];
    }
    for (std::size_t c = 1; c < cells; ++c)
        start_[c] += start_[c - 1];
    start_[cells] = static_cast<std::uint32_t>(count);
    indices_.resize(count);
    std::size_t k = count;
    for (auto it = std::rbegin(indices); it != std::rend(indices); ++it)
        indices_[--start_[cell_id_[--k]]] = static_cast<std::uint32_t>(*it);
}

//! Grid over every free particle.
inline SpatialGrid build_grid(std::span<ParticleState const> particles,
                              double cell_size)
{
    std::vector<std::uint32_t> free;
    free.reserve(particles.size());
    for (std::size_t i = 0; i < particles.size(); ++i)
        if (particles[i].status == ParticleStatus::free)
            free.push_back(static_cast<std::uint32_t>(i));
    return SpatialGrid::build(particles, free, cell_size);
}

namespace detail {

inline bool make_event(std::span<ParticleState const> particles,
                       std::uint32_t a, std::uint32_t b, CollisionEvent& out)
{
    auto const& pa = particles[a];
    auto const& pb = particles[b];
    Vec3 const d = pb.position - pa.position;
    double const contact = pa.radius + pb.radius;
    double const d2 = dot(d, d);
    if (!(d2 < contact * contact))
        return false;
    double const dist = std::sqrt(d2);
    out.i = a;
    out.j = b;
    out.normal = dist > 0.0 ? d * (1.0 / dist) : Vec3{0.0, 0.0, 1.0};
    out.overlap = contact - dist;
    return true;
}

inline int thread_index()
{
#ifdef _OPENMP
    return omp_get_thread_num();
#else
    return 0;
#endif
}

inline void merge_events(std::vector<std::vector<CollisionEvent>>& per_thread,
                         std::vector<CollisionEvent>& out, bool canonical)
{
    for (auto& v : per_thread)
        out.insert(out.end(), v.begin(), v.end());
    if (canonical)
        std::sort(out.begin(), out.end());
}

}  // namespace detail

/*!
 * All overlapping pairs among the particles indexed by the grid, each once
 * with i < j. With canonical ordering the list is sorted by (i, j) and does
 * not depend on the thread count.
 */
inline std::vector<CollisionEvent>
detect_collisions(SpatialGrid const& grid, std::span<ParticleState const> particles,
                  int threads = 1, bool canonical = true)
{
    threads = std::max(threads, 1);
    std::vector<std::vector<CollisionEvent>> found(threads);
    auto const cells = static_cast<std::int64_t>(grid.cell_count());
#pragma omp parallel for num_threads(threads) schedule(static) if (threads > 1)
    for (std::int64_t c = 0; c < cells; ++c)
    {
        auto& out = found[detail::thread_index()];
        for (auto i : grid.bucket(static_cast<std::size_t>(c)))
        {
            grid.for_each_neighbor(particles[i].position, [&](std::uint32_t j) {
                CollisionEvent e;
                if (i < j && detail::make_event(particles, i, j, e))
                    out.push_back(e);
            });
        }
    }
    std::vector<CollisionEvent> events;
    detail::merge_events(found, events, canonical);
    return events;
}

/*!
 * Overlaps between query particles (not indexed by the grid) and the
 * particles the grid indexes. Pairs are reported with i < j.
 */
inline std::vector<CollisionEvent>
detect_collisions_against(SpatialGrid const& grid,
                          std::span<ParticleState const> particles,
                          std::span<std::uint32_t const> queries,
                          int threads = 1, bool canonical = true)
{
    threads = std::max(threads, 1);
    std::vector<std::vector<CollisionEvent>> found(threads);
    auto const n = static_cast<std::int64_t>(queries.size());
    if (grid.indexed_count() > 0)
    {
#pragma omp parallel for num_threads(threads) schedule(static) if (threads > 1)
        for (std::int64_t k = 0; k < n; ++k)
        {
            auto& out = found[detail::thread_index()];
            auto const q = queries[static_cast<std::size_t>(k)];
            grid.for_each_neighbor(particles[q].position, [&](std::uint32_t j) {
                CollisionEvent e;
                if (q != j
                    && detail::make_event(particles, std::min(q, j),
                                          std::max(q, j), e))
                    out.push_back(e);
            });
        }
    }
    std::vector<CollisionEvent> events;
    detail::merge_events(found, events, canonical);
    return events;
}

/*!
 * Candidate pairs within contact distance plus a skin (a Verlet list).
 * Every overlapping pair is listed as long as, since the last build, no two
 * members have moved a combined distance of `skin` or more; stale() reports
 * when that can no longer be guaranteed.
 */
class VerletPairs
{
  public:
    explicit VerletPairs(double skin = 1.0) : skin_(skin)
    {
        if (!(skin > 0.0))
            throw std::invalid_argument("VerletPairs: skin must be positive");
    }

    double skin() const { return skin_; }
    bool built() const { return built_; }
    std::size_t size() const { return pairs_.size(); }
    std::span<std::pair<std::uint32_t, std::uint32_t> const> pairs() const { return pairs_; }

    //! Pairs among `indices`.
    void build_self(std::span<ParticleState const> particles,
                    std::span<std::uint32_t const> indices, int threads = 1,
                    bool canonical = true)
    {
        cross_ = false;
        remember(particles, indices, a_);
        b_.clear();
        pairs_.clear();
        if (indices.empty())
        {
            built_ = true;
            return;
        }
        double max_diameter = 0.0;
        for (auto i : indices)
            max_diameter = std::max(max_diameter, 2.0 * particles[i].radius);
        grid_.rebuild(particles, indices, max_diameter + skin_);
        threads = std::max(threads, 1);
        std::vector<std::vector<std::pair<std::uint32_t, std::uint32_t>>> found(threads);
        auto const cells = static_cast<std::int64_t>(grid_.cell_count());
#pragma omp parallel for num_threads(threads) schedule(static) if (threads > 1)
        for (std::int64_t c = 0; c < cells; ++c)
        {
            auto& out = found[detail::thread_index()];
            for (auto i : grid_.bucket(static_cast<std::size_t>(c)))
                grid_.for_each_neighbor(particles[i].position, [&](std::uint32_t j) {
                    if (i < j && near(particles, i, j))
                        out.emplace_back(i, j);
                });
        }
        merge(found, canonical);
    }

    //! Pairs between `queries` and `indexed`; the two sets must be disjoint.
    void build_cross(std::span<ParticleState const> particles,
                     std::span<std::uint32_t const> indexed,
                     std::span<std::uint32_t const> queries, int threads = 1,
                     bool canonical = true)
    {
        cross_ = true;
        remember(particles, indexed, a_);
        remember(particles, queries, b_);
        pairs_.clear();
        if (indexed.empty() || queries.empty())
        {
            built_ = true;
            return;
        }
        double max_query = 0.0;
        for (auto q : queries)
            max_query = std::max(max_query, particles[q].radius);
        grid_.rebuild_for_queries(particles, indexed, max_query + skin_);
        threads = std::max(threads, 1);
        std::vector<std::vector<std::pair<std::uint32_t, std::uint32_t>>> found(threads);
        auto const n = static_cast<std::int64_t>(queries.size());
#pragma omp parallel for num_threads(threads) schedule(static) if (threads > 1)
        for (std::int64_t k = 0; k < n; ++k)
        {
            auto& out = found[detail::thread_index()];
            auto const q = queries[static_cast<std::size_t>(k)];
            grid_.for_each_neighbor(particles[q].position, [&](std::uint32_t j) {
                if (near(particles, q, j))
                    out.emplace_back(std::min(q, j), std::max(q, j));
            });
        }
        merge(found, canonical);
    }

    //! True when a pair may have come into contact without being listed.
    bool stale(std::span<ParticleState const> particles) const
    {
        if (!built_)
            return true;
        double const da = max_displacement(particles, a_);
        double const db = cross_ ? max_displacement(particles, b_) : da;
        return da + db >= skin_;
    }

    //! Listed pairs that overlap now, in list order; pairs with a member that
    //! is no longer free are skipped.
    void collect(std::span<ParticleState const> particles,
                 std::vector<CollisionEvent>& out) const
    {
        for (auto const& [i, j] : pairs_)
        {
            if (particles[i].status != ParticleStatus::free
                || particles[j].status != ParticleStatus::free)
                continue;
            CollisionEvent e;
            if (detail::make_event(particles, i, j, e))
                out.push_back(e);
        }
    }

  private:
    struct Member
    {
        std::uint32_t index;
        Vec3 reference;
    };

    bool near(std::span<ParticleState const> particles, std::uint32_t i, std::uint32_t j) const
    {
        Vec3 const d = particles[j].position - particles[i].position;
        double const reach = particles[i].radius + particles[j].radius + skin_;
        return dot(d, d) < reach * reach;
    }

    static void remember(std::span<ParticleState const> particles,
                         std::span<std::uint32_t const> indices, std::vector<Member>& into)
    {
        into.clear();
        into.reserve(indices.size());
        for (auto i : indices)
            into.push_back({i, particles[i].position});
    }

    static double max_displacement(std::span<ParticleState const> particles,
                                   std::vector<Member> const& members)
    {
        double m2 = 0.0;
        for (auto const& m : members)
        {
            auto const& p = particles[m.index];
            if (p.status != ParticleStatus::free)
                continue;
            Vec3 const d = p.position - m.reference;
            m2 = std::max(m2, dot(d, d));
        }
        return std::sqrt(m2);
    }

    void merge(std::vector<std::vector<std::pair<std::uint32_t, std::uint32_t>>>& found,
               bool canonical)
    {
        for (auto& v : found)
            pairs_.insert(pairs_.end(), v.begin(), v.end());
        if (canonical)
            std::sort(pairs_.begin(), pairs_.end());
        built_ = true;
    }

    double skin_;
    bool cross_ = false;
    bool built_ = false;
    std::vector<Member> a_, b_;
    std::vector<std::pair<std::uint32_t, std::uint32_t>> pairs_;
    SpatialGrid grid_;
};

/*!
 * Push an overlapping pair apart along the line of centers until their
 * distance is a_i + a_j + eps. The displacement is split in inverse
 * proportion to the radius cubed (mass proxy). The overlap is recomputed
 * from current positions, so events may be resolved sequentially after
 * earlier events moved the same particles.
 *
 * Returns false if the pair no longer overlaps.
 */
inline bool resolve_collision(CollisionEvent const& event,
                              std::span<ParticleState> particles,
                              double eps = contact_epsilon)
{
    CollisionEvent now;
    if (!detail::make_event(particles, event.i, event.j, now))
        return false;
    auto& pi = particles[event.i];
    auto& pj = particles[event.j];
    double const mi = pi.radius * pi.radius * pi.radius;
    double const mj = pj.radius * pj.radius * pj.radius;
    double const separation = now.overlap + eps;
    double const wi = mj / (mi + mj);
    double const wj = mi / (mi + mj);
    pi.position -= now.normal * (separation * wi);
    pj.position += now.normal * (separation * wj);
    return true;
}

//! Mirror a centre that lies beyond radial distance `limit` back inside.
inline void mirror_inside_wall(Vec3& p, double limit)
{
    double const r = radial_distance(p);
    if (!(r > limit))
        return;
    double mirrored = 2.0 * limit - r;
    if (mirrored < 0.0)
        mirrored = std::min(-mirrored, limit);
    double const scale = mirrored / r;
    p.x *= scale;
    p.y *= scale;
    // Rounding in the scale can leave the point a few ulps outside.
    double const after = radial_distance(p);
    if (after > limit)
    {
        p.x *= limit / after;
        p.y *= limit / after;
    }
}

/*!
 * Mirror a particle that penetrated the wall back inside,
 * r' = 2 (R - a) - r with phi and z unchanged, and mark particles beyond
 * either end of the vessel as exited.
 */
inline ParticleState reflect_at_wall(ParticleState p, VesselGeometry const& g)
{
    if (p.status != ParticleStatus::free)
        return p;
    mirror_inside_wall(p.position, g.radius - p.radius);
    if (p.position.z < 0.0 || p.position.z > g.length)
        p.status = ParticleStatus::exited;
    return p;
}

}  // namespace vesselcomm
