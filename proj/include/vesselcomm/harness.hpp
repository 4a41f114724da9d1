//! \file vesselcomm/harness.hpp
//! Experiment driver: impulse-response maps, windowed count traces, (P, Th)
//! sweeps replayed over stored assimilation logs, and full frame
//! transmissions, plus the CSV and manifest writers.
#pragma once

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "config.hpp"
#include "core_model.hpp"
#include "reception.hpp"
#include "txrx.hpp"
#include "world.hpp"

#ifndef VESSELCOMM_VERSION
#    define VESSELCOMM_VERSION "unknown"
#endif

namespace vesselcomm {

//---------------------------------------------------------------------------//
// Experiment specification
//---------------------------------------------------------------------------//
enum class ExperimentKind
{
    impulse,
    trace,
    sweep,
    frame
};

inline char const* to_string(ExperimentKind k)
{
    switch (k)
    {
        case ExperimentKind::impulse:
            return "impulse";
        case ExperimentKind::trace:
            return "trace";
        case ExperimentKind::sweep:
            return "sweep";
        case ExperimentKind::frame:
            return "frame";
    }
    return "?";
}

inline ExperimentKind parse_experiment_kind(std::string_view s)
{
    for (auto k : {ExperimentKind::impulse, ExperimentKind::trace, ExperimentKind::sweep,
                   ExperimentKind::frame})
        if (s == to_string(k))
            return k;
    throw ConfigError(ConfigError::Kind::validation,
                      "experiment must be one of impulse, trace, sweep, frame");
}

struct CellRef
{
    int ring = 0;
    int position = 0;

    friend bool operator==(CellRef const&, CellRef const&) = default;
};

struct ExperimentSpec
{
    ExperimentKind kind = ExperimentKind::impulse;
    SimulationConfig simulation = default_config();
    EncoderConfig encoder;
    ReceiverChainConfig chain;
    std::vector<int> sweep_delay_lines = {0, 1, 2, 4, 8, 12, 16, 24, 33, 48, 64, 96, 128, 264, 528};
    std::vector<std::int64_t> sweep_thresholds = {1, 2, 3, 4, 5, 6};
    std::optional<double> horizon;  // us; defaults to the duration
    int replicates = 1;
    std::vector<CellRef> trace_cells;  // empty: the delta_phi = 0 column
    Bits bits;                         // frame experiments
    std::string event_log;             // sweep: replay this stored log instead of simulating
    bool audit_conservation = false;

    double effective_horizon() const { return horizon.value_or(simulation.duration); }
};

inline void validate(ExperimentSpec const& s)
{
    validate(s.simulation);
    auto fail = [](std::string const& m) {
        throw ConfigError(ConfigError::Kind::validation, m);
    };
    try
    {
        validate(s.encoder);
        validate(s.chain);
    }
    catch (std::invalid_argument const& e)
    {
        fail(e.what());
    }
    if (s.replicates < 1)
        fail("replicate count must be at least 1");
    if (!(s.effective_horizon() >= 0.0) || s.effective_horizon() > s.simulation.duration)
        fail("horizon must lie in [0, duration]");
    if (s.kind == ExperimentKind::sweep)
    {
        if (s.sweep_delay_lines.empty() || s.sweep_thresholds.empty())
            fail("sweep lists must be non-empty");
        for (int p : s.sweep_delay_lines)
            if (p < 0)
                fail("sweep delay-line values must be >= 0");
        for (auto th : s.sweep_thresholds)
            if (th < 1)
                fail("sweep thresholds must be >= 1");
    }
    if (s.kind == ExperimentKind::frame
        && s.bits.size() != static_cast<std::size_t>(s.encoder.frame_bits))
        fail("frame bits must have the encoder frame length");
}

/*!
 * Parse an experiment document: the simulation sections understood by
 * load_config() plus optional encoder, receiver_chain and experiment
 * sections.
 */
inline ExperimentSpec load_experiment(std::string_view text)
{
    using detail::check_keys;
    using detail::read;
    ExperimentSpec spec;
    spec.simulation = load_config(text);
    auto const doc = detail::parse_document(text);

    if (auto it = doc.find("encoder"); it != doc.end())
    {
        check_keys(*it, "encoder", {"burst_size", "frame_bits", "pulse_period_us"});
        read(*it, "burst_size", spec.encoder.burst_size, "encoder");
        read(*it, "frame_bits", spec.encoder.frame_bits, "encoder");
        read(*it, "pulse_period_us", spec.encoder.pulse_period, "encoder");
    }
    if (auto it = doc.find("receiver_chain"); it != doc.end())
    {
        check_keys(*it, "receiver_chain", {"window_us", "delay_lines", "threshold", "frame_bits"});
        read(*it, "window_us", spec.chain.window, "receiver_chain");
        read(*it, "delay_lines", spec.chain.delay_lines, "receiver_chain");
        read(*it, "threshold", spec.chain.threshold, "receiver_chain");
        read(*it, "frame_bits", spec.chain.frame_bits, "receiver_chain");
    }
    if (auto it = doc.find("experiment"); it != doc.end())
    {
        auto const& e = *it;
        check_keys(e, "experiment",
                   {"kind", "horizon_us", "sweep_delay_lines", "sweep_thresholds",
                    "replicates", "trace_cells", "bits", "event_log", "audit_conservation"});
        if (auto k = e.find("kind"); k != e.end())
        {
            if (!k->is_string())
                throw ConfigError(ConfigError::Kind::validation,
                                  "key 'kind' in section 'experiment' has the wrong type");
            spec.kind = parse_experiment_kind(k->get<std::string>());
        }
        if (e.contains("horizon_us"))
        {
            double h = 0.0;
            read(e, "horizon_us", h, "experiment");
            spec.horizon = h;
        }
        read(e, "sweep_delay_lines", spec.sweep_delay_lines, "experiment");
        read(e, "sweep_thresholds", spec.sweep_thresholds, "experiment");
        read(e, "replicates", spec.replicates, "experiment");
        read(e, "event_log", spec.event_log, "experiment");
        read(e, "audit_conservation", spec.audit_conservation, "experiment");
        if (auto b = e.find("bits"); b != e.end())
        {
            try
            {
                spec.bits = parse_bits(b->get<std::string>());
            }
            catch (std::exception const& ex)
            {
                throw ConfigError(ConfigError::Kind::validation,
                                  std::string("experiment bits: ") + ex.what());
            }
            spec.encoder.frame_bits = static_cast<int>(spec.bits.size());
        }
        if (auto t = e.find("trace_cells"); t != e.end())
        {
            std::vector<std::vector<int>> pairs;
            read(e, "trace_cells", pairs, "experiment");
            for (auto const& p : pairs)
            {
                if (p.size() != 2)
                    throw ConfigError(ConfigError::Kind::validation,
                                      "trace_cells entries must be [ring, position]");
                spec.trace_cells.push_back({p[0], p[1]});
            }
        }
    }
    validate(spec);
    return spec;
}

//---------------------------------------------------------------------------//
// Results
//---------------------------------------------------------------------------//
struct TraceSeries
{
    std::size_t cell = 0;
    std::vector<ChainTraceRow> rows;
};

struct FrameOutcome
{
    std::size_t cell = 0;
    bool synchronized = false;
    Bits decoded;      // first complete frame, empty if none
    int hamming = -1;  // distance to the transmitted bits; -1 without a frame
};

struct SweepEntry
{
    int delay_lines = 0;
    std::int64_t threshold = 0;
    std::vector<std::int64_t> decoded_pulses;  // per cell

    std::int64_t cells_with_at_least(std::int64_t k) const
    {
        return std::count_if(decoded_pulses.begin(), decoded_pulses.end(),
                             [k](auto v) { return v >= k; });
    }
    std::int64_t cells_with_exactly(std::int64_t k) const
    {
        return std::count(decoded_pulses.begin(), decoded_pulses.end(), k);
    }
    std::int64_t max_decoded() const
    {
        return decoded_pulses.empty()
                   ? 0
                   : *std::max_element(decoded_pulses.begin(), decoded_pulses.end());
    }
};

struct SweepResult
{
    double horizon = 0.0;
    double window = 0.0;  // counter window T, us
    std::vector<SweepEntry> entries;

    SweepEntry const* find(int delay_lines, std::int64_t threshold) const
    {
        for (auto const& e : entries)
            if (e.delay_lines == delay_lines && e.threshold == threshold)
                return &e;
        return nullptr;
    }

    /*!
     * The pair that lets the most cells decode the single pulse exactly
     * once; ties go to the shorter window, then the lower threshold.
     */
    SweepEntry const* optimum() const
    {
        SweepEntry const* best = nullptr;
        for (auto const& e : entries)
        {
            if (best == nullptr)
            {
                best = &e;
                continue;
            }
            auto const a = e.cells_with_exactly(1), b = best->cells_with_exactly(1);
            if (a > b || (a == b && (e.delay_lines < best->delay_lines
                                     || (e.delay_lines == best->delay_lines
                                         && e.threshold < best->threshold))))
                best = &e;
        }
        return best;
    }
};

struct ReplicateRun
{
    std::uint64_t replicate = 0;
    double horizon = 0.0;
    std::vector<ReceiverCell> cells;  // geometry and assimilation logs
    ReceptionMap map;
    std::vector<TraceSeries> traces;
    ConservationLedger ledger;
    WorldDiagnostics diagnostics;
    std::vector<StatusEvent> status_log;
    bool simulated = true;  // false when the logs were loaded from a file
    std::optional<SweepResult> sweep;
    std::vector<FrameOutcome> frames;
};

struct ExperimentResult
{
    ExperimentSpec spec;
    std::vector<ReplicateRun> runs;
    double wall_clock_s = 0.0;
};

//---------------------------------------------------------------------------//
// Building blocks
//---------------------------------------------------------------------------//
inline std::vector<double> event_times(ReceiverCell const& cell, double horizon)
{
    std::vector<double> t;
    t.reserve(cell.log.size());
    for (auto const& e : cell.log)
        if (e.time <= horizon)
            t.push_back(e.time);
    return t;
}

//! Cells of the delta_phi = 0 column, ordered by ring.
inline std::vector<std::size_t> aligned_column(std::vector<ReceiverCell> const& cells)
{
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < cells.size(); ++i)
        if (cells[i].ring_position == 0)
            out.push_back(i);
    return out;
}

inline std::vector<std::size_t> resolve_trace_cells(ExperimentSpec const& spec,
                                                    std::vector<ReceiverCell> const& cells)
{
    if (spec.trace_cells.empty())
        return aligned_column(cells);
    std::vector<std::size_t> out;
    for (auto const& ref : spec.trace_cells)
    {
        auto it = std::find_if(cells.begin(), cells.end(), [&](ReceiverCell const& c) {
            return c.ring == ref.ring && c.ring_position == ref.position;
        });
        if (it == cells.end())
            throw ConfigError(ConfigError::Kind::validation,
                              "trace cell (" + std::to_string(ref.ring) + ", "
                                  + std::to_string(ref.position) + ") does not exist");
        out.push_back(static_cast<std::size_t>(it - cells.begin()));
    }
    return out;
}

//! Counter -> FIR -> STD trace of one cell, replayed from its log.
inline std::vector<ChainTraceRow> replay_trace(ReceiverCell const& cell,
                                               ReceiverChainConfig const& cfg, double horizon)
{
    ReceiverChain chain(cfg, true);
    for (double t : event_times(cell, horizon))
        chain.ingest(t);
    chain.advance_to(horizon);
    return chain.trace();
}

/*!
 * Replay stored logs through the receiver chain for every (P, Th) pair,
 * with the STD in pulse-detector mode (no data bits), and count the pulses
 * each cell decodes before the horizon.
 */
inline SweepResult sweep_logs(std::vector<ReceiverCell> const& cells,
                              std::vector<int> const& delay_lines,
                              std::vector<std::int64_t> const& thresholds, double window,
                              double horizon)
{
    SweepResult result;
    result.horizon = horizon;
    result.window = window;
    std::vector<std::vector<double>> times;
    times.reserve(cells.size());
    for (auto const& c : cells)
        times.push_back(event_times(c, horizon));
    for (int p : delay_lines)
        for (auto th : thresholds)
        {
            ReceiverChainConfig cfg;
            cfg.window = window;
            cfg.delay_lines = p;
            cfg.threshold = th;
            cfg.frame_bits = 0;
            SweepEntry entry{p, th, {}};
            entry.decoded_pulses.reserve(cells.size());
            for (auto const& t : times)
            {
                if (static_cast<std::int64_t>(t.size()) < th)
                {
                    entry.decoded_pulses.push_back(0);  // f never reaches Th
                    continue;
                }
                entry.decoded_pulses.push_back(decode_frame(t, cfg, horizon).decoded_pulses);
            }
            result.entries.push_back(std::move(entry));
        }
    return result;
}

inline int hamming_distance(Bits const& a, Bits const& b)
{
    if (a.size() != b.size())
        return -1;
    int d = 0;
    for (std::size_t i = 0; i < a.size(); ++i)
        d += a[i] != b[i];
    return d;
}

/*!
 * One physics run of the configured world with the given release schedule,
 * up to the horizon.
 */
inline ReplicateRun simulate(ExperimentSpec const& spec, std::vector<PulseRelease> schedule,
                             std::uint64_t replicate)
{
    WorldOptions options;
    options.log_status = true;
    options.audit_conservation = spec.audit_conservation;
    options.replicate = replicate;
    World world(spec.simulation, std::move(schedule), options);
    double const horizon = spec.effective_horizon();
    world.run_until(horizon);
    if (world.diagnostics().conservation_failures > 0)
        throw std::runtime_error("particle conservation violated during the run (replicate "
                                 + std::to_string(replicate) + ")");

    ReplicateRun run;
    run.replicate = replicate;
    run.horizon = horizon;
    run.cells = world.receivers().cells();
    run.map = reception_map(run.cells, horizon);
    run.ledger = world.ledger();
    run.diagnostics = world.diagnostics();
    run.status_log = world.status_log();
    return run;
}

inline std::vector<PulseRelease> impulse_schedule(EncoderConfig const& enc)
{
    return {{0.0, enc.burst_size}};
}

inline void attach_traces(ExperimentSpec const& spec, ReplicateRun& run)
{
    for (auto idx : resolve_trace_cells(spec, run.cells))
        run.traces.push_back({idx, replay_trace(run.cells[idx], spec.chain, run.horizon)});
}

//---------------------------------------------------------------------------//
// Experiments
//---------------------------------------------------------------------------//
namespace detail {

template<class F>
ExperimentResult timed(ExperimentSpec const& spec, F&& body)
{
    validate(spec);
    auto const t0 = std::chrono::steady_clock::now();
    ExperimentResult result;
    result.spec = spec;
    for (int k = 0; k < spec.replicates; ++k)
        result.runs.push_back(body(static_cast<std::uint64_t>(k)));
    result.wall_clock_s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return result;
}

}  // namespace detail

//! Single burst at t = 0: reception map plus c_n traces of the trace cells.
inline ExperimentResult run_impulse(ExperimentSpec const& spec)
{
    return detail::timed(spec, [&](std::uint64_t k) {
        auto run = simulate(spec, impulse_schedule(spec.encoder), k);
        attach_traces(spec, run);
        return run;
    });
}

//! Same physics as the impulse experiment; the traces are the main output.
inline ExperimentResult run_trace(ExperimentSpec const& spec)
{
    return run_impulse(spec);
}

std::vector<ReceiverCell> load_event_log(std::filesystem::path const& path,
                                         SimulationConfig const& config);

/*!
 * (P, Th) sweep. Uses the stored event log named in the spec when there is
 * one, otherwise simulates an impulse first; every pair sees the same logs.
 */
inline ExperimentResult run_sweep(ExperimentSpec const& spec)
{
    return detail::timed(spec, [&](std::uint64_t k) {
        ReplicateRun run;
        if (!spec.event_log.empty())
        {
            run.replicate = k;
            run.horizon = spec.effective_horizon();
            run.cells = load_event_log(spec.event_log, spec.simulation);
            run.map = reception_map(run.cells, run.horizon);
            run.simulated = false;
        }
        else
        {
            run = simulate(spec, impulse_schedule(spec.encoder), k);
        }
        run.sweep = sweep_logs(run.cells, spec.sweep_delay_lines, spec.sweep_thresholds,
                               spec.chain.window, run.horizon);
        return run;
    });
}

//! OOK frame through the full physics; every cell decodes its own log.
inline ExperimentResult run_frame(ExperimentSpec const& spec)
{
    return detail::timed(spec, [&](std::uint64_t k) {
        auto const train = encode_ook(spec.bits, spec.encoder);
        auto run = simulate(spec, train.releases, k);
        auto cfg = spec.chain;
        cfg.frame_bits = spec.encoder.frame_bits;
        for (std::size_t i = 0; i < run.cells.size(); ++i)
        {
            auto const res = decode_frame(event_times(run.cells[i], run.horizon), cfg, run.horizon);
            FrameOutcome out;
            out.cell = i;
            out.synchronized = res.synchronizations > 0;
            if (!res.frames.empty())
            {
                out.decoded = res.frames.front();
                out.hamming = hamming_distance(out.decoded, spec.bits);
            }
            run.frames.push_back(std::move(out));
        }
        return run;
    });
}

inline ExperimentResult run_experiment(ExperimentSpec const& spec)
{
    switch (spec.kind)
    {
        case ExperimentKind::impulse:
            return run_impulse(spec);
        case ExperimentKind::trace:
            return run_trace(spec);
        case ExperimentKind::sweep:
            return run_sweep(spec);
        case ExperimentKind::frame:
            return run_frame(spec);
    }
    throw std::logic_error("unknown experiment kind");
}

//---------------------------------------------------------------------------//
// Measured summary values
//---------------------------------------------------------------------------//
struct MeasuredValues
{
    std::int64_t max_assimilated_per_cell = 0;
    std::optional<std::pair<int, std::int64_t>> sweep_optimum;  // (P, Th)
    std::optional<double> wall_arrival_speed;                   // um/us
};

/*!
 * Downstream arrival speed along the aligned column: least-squares slope
 * through the origin of delta_L against the mean arrival time of each cell
 * lying entirely downstream of the release point.
 */
inline std::optional<double> wall_arrival_speed(std::vector<ReceiverCell> const& cells,
                                                double horizon)
{
    double sxy = 0.0, sxx = 0.0;
    for (auto idx : aligned_column(cells))
    {
        auto const& c = cells[idx];
        if (c.delta_L - 0.5 * c.side <= 0.0)
            continue;
        auto const t = event_times(c, horizon);
        if (t.empty())
            continue;
        double mean = 0.0;
        for (double v : t)
            mean += v;
        mean /= static_cast<double>(t.size());
        sxy += c.delta_L * mean;
        sxx += mean * mean;
    }
    if (!(sxx > 0.0))
        return std::nullopt;
    return sxy / sxx;
}

inline MeasuredValues measure(ReplicateRun const& run)
{
    MeasuredValues m;
    for (auto const& e : run.map.entries)
        m.max_assimilated_per_cell = std::max(m.max_assimilated_per_cell, e.count);
    if (run.sweep)
        if (auto const* best = run.sweep->optimum())
            m.sweep_optimum = std::make_pair(best->delay_lines, best->threshold);
    m.wall_arrival_speed = wall_arrival_speed(run.cells, run.horizon);
    return m;
}

//---------------------------------------------------------------------------//
// Output
//---------------------------------------------------------------------------//
namespace detail {

//! Shortest text that reads back to the same double.
inline std::string num(double v)
{
    char buf[64];
    auto const r = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, r.ptr);
}

class CsvFile
{
  public:
    CsvFile(std::filesystem::path path, std::string_view header) : path_(std::move(path))
    {
        out_.open(path_, std::ios::binary | std::ios::trunc);
        if (!out_)
            throw std::runtime_error("cannot open '" + path_.string() + "' for writing");
        out_ << header << '\n';
    }

    std::ostream& row() { return out_; }

    void close()
    {
        out_.close();
        if (!out_)
            throw std::runtime_error("error writing '" + path_.string() + "'");
    }

  private:
    std::filesystem::path path_;
    std::ofstream out_;
};

inline std::string utc_now()
{
    auto const now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    std::ostringstream s;
    s << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
    return s.str();
}

}  // namespace detail

inline void write_reception_map(ReceptionMap const& map, std::filesystem::path const& path)
{
    detail::CsvFile f(path, "ring_index,ring_position,delta_phi_rad,delta_L_um,count");
    for (auto const& e : map.entries)
        f.row() << e.ring << ',' << e.ring_position << ',' << detail::num(e.delta_phi) << ','
                << detail::num(e.delta_L) << ',' << e.count << '\n';
    f.close();
}

//! All assimilations ordered by time, then cell, then carrier.
inline void write_event_log(std::vector<ReceiverCell> const& cells,
                            std::filesystem::path const& path)
{
    struct Row
    {
        double time;
        std::size_t cell;
        std::uint64_t carrier;
    };
    std::vector<Row> rows;
    for (std::size_t i = 0; i < cells.size(); ++i)
        for (auto const& e : cells[i].log)
            rows.push_back({e.time, i, e.carrier_id});
    std::sort(rows.begin(), rows.end(), [](Row const& a, Row const& b) {
        if (a.time != b.time)
            return a.time < b.time;
        if (a.cell != b.cell)
            return a.cell < b.cell;
        return a.carrier < b.carrier;
    });
    detail::CsvFile f(path, "time_us,cell_ring,cell_pos,carrier_id");
    for (auto const& r : rows)
        f.row() << detail::num(r.time) << ',' << cells[r.cell].ring << ','
                << cells[r.cell].ring_position << ',' << r.carrier << '\n';
    f.close();
}

/*!
 * Read an event log written by write_event_log() back into the receiver
 * tiling of the given configuration.
 */
inline std::vector<ReceiverCell> load_event_log(std::filesystem::path const& path,
                                                SimulationConfig const& config)
{
    ReceiverArray array(config.geometry, config.receivers, config.transmitter.position);
    auto cells = array.cells();
    std::ifstream in(path);
    if (!in)
        throw std::runtime_error("cannot open event log '" + path.string() + "'");
    std::string line;
    std::getline(in, line);
    if (line != "time_us,cell_ring,cell_pos,carrier_id")
        throw std::runtime_error("'" + path.string() + "' is not an event log");
    std::size_t lineno = 1;
    while (std::getline(in, line))
    {
        ++lineno;
        if (line.empty())
            continue;
        std::istringstream s(line);
        std::string tok[4];
        for (auto& t : tok)
            std::getline(s, t, ',');
        AssimilationEvent e;
        int ring = 0, pos = 0;
        try
        {
            e.time = std::stod(tok[0]);
            ring = std::stoi(tok[1]);
            pos = std::stoi(tok[2]);
            e.carrier_id = std::stoull(tok[3]);
        }
        catch (std::exception const&)
        {
            throw std::runtime_error(path.string() + ":" + std::to_string(lineno)
                                     + ": malformed event row");
        }
        if (ring < 0 || ring >= array.rings() || pos < 0 || pos >= array.per_ring())
            throw std::runtime_error(path.string() + ":" + std::to_string(lineno)
                                     + ": cell outside the configured tiling");
        auto& log = cells[array.index(ring, pos)].log;
        if (!log.empty() && e.time < log.back().time)
            throw std::runtime_error(path.string() + ":" + std::to_string(lineno)
                                     + ": events are not in time order");
        log.push_back(e);
    }
    return cells;
}

inline void write_chain_trace(std::vector<ChainTraceRow> const& rows,
                              std::filesystem::path const& path)
{
    detail::CsvFile f(path, "window_index,t_n_us,c_n,f_n,std_mode,emitted_bit_or_blank");
    for (auto const& r : rows)
    {
        f.row() << r.window_index << ',' << detail::num(r.t_n) << ',' << r.c_n << ',' << r.f_n
                << ',' << to_string(r.mode) << ',';
        if (r.bit)
            f.row() << static_cast<int>(*r.bit);
        f.row() << '\n';
    }
    f.close();
}

inline void write_status_log(std::vector<StatusEvent> const& log,
                             std::filesystem::path const& path)
{
    detail::CsvFile f(path, "step,time_us,particle,event,cell");
    for (auto const& e : log)
    {
        f.row() << e.step << ',' << detail::num(e.time) << ',' << e.particle << ','
                << to_string(e.kind) << ',';
        if (e.cell >= 0)
            f.row() << e.cell;
        f.row() << '\n';
    }
    f.close();
}

inline void write_sweep(SweepResult const& sweep, std::vector<ReceiverCell> const& cells,
                        std::filesystem::path const& dir)
{
    detail::CsvFile full(dir / "sweep.csv",
                         "delay_lines,threshold,ring_index,ring_position,delta_phi_rad,"
                         "delta_L_um,decoded_pulses");
    for (auto const& e : sweep.entries)
        for (std::size_t i = 0; i < cells.size(); ++i)
            full.row() << e.delay_lines << ',' << e.threshold << ',' << cells[i].ring << ','
                       << cells[i].ring_position << ',' << detail::num(cells[i].delta_phi)
                       << ',' << detail::num(cells[i].delta_L) << ',' << e.decoded_pulses[i]
                       << '\n';
    full.close();

    detail::CsvFile summary(dir / "sweep_summary.csv",
                            "delay_lines,threshold,fir_span_us,cells_decoding,"
                            "cells_decoding_once,cells_decoding_twice_or_more,max_decoded");
    for (auto const& e : sweep.entries)
        summary.row() << e.delay_lines << ',' << e.threshold << ','
                      << detail::num((e.delay_lines + 1) * sweep.window) << ','
                      << e.cells_with_at_least(1) << ',' << e.cells_with_exactly(1) << ','
                      << e.cells_with_at_least(2) << ',' << e.max_decoded() << '\n';
    summary.close();
}

inline void write_frames(std::vector<FrameOutcome> const& frames,
                         std::vector<ReceiverCell> const& cells,
                         std::filesystem::path const& path)
{
    detail::CsvFile f(path,
                      "ring_index,ring_position,delta_phi_rad,delta_L_um,synchronized,"
                      "decoded_bits,hamming_distance");
    for (auto const& o : frames)
    {
        auto const& c = cells[o.cell];
        f.row() << c.ring << ',' << c.ring_position << ',' << detail::num(c.delta_phi) << ','
                << detail::num(c.delta_L) << ',' << (o.synchronized ? 1 : 0) << ','
                << format_bits(o.decoded) << ',';
        if (o.hamming >= 0)
            f.row() << o.hamming;
        f.row() << '\n';
    }
    f.close();
}

/*!
 * Plain-text run manifest: version, experiment, seeds, wall-clock time,
 * measured summary values next to their reference values, and the full
 * configuration snapshot.
 */
inline void write_manifest(ExperimentResult const& result, std::filesystem::path const& path)
{
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out)
        throw std::runtime_error("cannot open '" + path.string() + "' for writing");
    auto const& spec = result.spec;
    auto const& sim = spec.simulation;
    out << "vesselcomm run manifest\n";
    out << "version = " << VESSELCOMM_VERSION << '\n';
    out << "written_utc = " << detail::utc_now() << '\n';
    out << "wall_clock_s = " << detail::num(result.wall_clock_s) << '\n';
    out << "experiment = " << to_string(spec.kind) << '\n';
    out << "seed = " << sim.seed << '\n';
    out << "replicates = " << spec.replicates << '\n';
    out << "threads = " << sim.threads << '\n';
    out << "deterministic = " << (sim.deterministic ? "true" : "false") << '\n';
    out << "horizon_us = " << detail::num(spec.effective_horizon()) << '\n';
    out << "burst_size = " << spec.encoder.burst_size << '\n';
    out << "chain = T " << detail::num(spec.chain.window) << " us, P " << spec.chain.delay_lines
        << ", Th " << spec.chain.threshold << '\n';
    if (spec.kind == ExperimentKind::frame)
        out << "bits = " << format_bits(spec.bits) << '\n';
    if (!spec.event_log.empty())
        out << "event_log = " << spec.event_log << '\n';

    for (auto const& run : result.runs)
    {
        out << "\n[replicate " << run.replicate << "]\n";
        out << "stream_seed = " << replicate_seed(sim.seed, run.replicate) << '\n';
        if (run.simulated)
        {
            auto const& l = run.ledger;
            out << "particles = initial " << l.initial << ", released " << l.released
                << ", free " << l.free << ", assimilated " << l.assimilated << ", exited "
                << l.exited << '\n';
            auto const& d = run.diagnostics;
            out << "diagnostics = placement_overlaps " << d.placement_overlaps
                << ", residual_pairs " << d.residual_pairs << ", max_residual_ratio "
                << detail::num(d.max_residual_ratio) << ", nonconverged_steps "
                << d.nonconverged_steps << ", dropped_releases " << d.dropped_releases << '\n';
        }
        out << "assimilated_in_map = " << run.map.total() << '\n';
        auto const m = measure(run);
        out << "measured.max_assimilated_per_cell = " << m.max_assimilated_per_cell
            << "  (reference: 5)\n";
        if (m.sweep_optimum)
            out << "measured.sweep_optimum = P " << m.sweep_optimum->first << ", Th "
                << m.sweep_optimum->second << "  (reference: P 33, Th 2)\n";
        if (m.wall_arrival_speed)
            out << "measured.wall_arrival_speed_mm_per_s = "
                << detail::num(*m.wall_arrival_speed / units::mm_per_s)
                << "  (reference: about half the mean flow velocity, "
                << detail::num(0.5 * sim.fluid.mean_velocity / units::mm_per_s) << ")\n";
        else
            out << "measured.wall_arrival_speed_mm_per_s = n/a\n";
        if (!run.frames.empty())
        {
            int synced = 0, exact = 0;
            for (auto const& f : run.frames)
            {
                synced += f.synchronized;
                exact += f.hamming == 0;
            }
            out << "frame.cells_synchronized = " << synced << '\n';
            out << "frame.cells_decoding_exactly = " << exact << '\n';
        }
    }
    out << "\n[config]\n" << serialize_config(sim) << '\n';
    out.close();
    if (!out)
        throw std::runtime_error("error writing '" + path.string() + "'");
}

/*!
 * Write every output of an experiment into `directory` (created if
 * needed). With several replicates each one gets a replicate_<k>
 * subdirectory. CSVs are byte-identical across reruns with the same seed in
 * deterministic mode; only the manifest carries timestamps.
 */
inline void emit_outputs(ExperimentResult const& result, std::filesystem::path const& directory)
{
    std::error_code ec;
    std::filesystem::create_directories(directory, ec);
    if (ec)
        throw std::runtime_error("cannot create output directory '" + directory.string()
                                 + "': " + ec.message());
    for (auto const& run : result.runs)
    {
        auto dir = directory;
        if (result.runs.size() > 1)
        {
            dir /= "replicate_" + std::to_string(run.replicate);
            std::filesystem::create_directories(dir, ec);
            if (ec)
                throw std::runtime_error("cannot create '" + dir.string() + "': " + ec.message());
        }
        write_reception_map(run.map, dir / "reception_map.csv");
        if (run.simulated)
        {
            write_event_log(run.cells, dir / "events.csv");
            write_status_log(run.status_log, dir / "status.csv");
        }
        for (auto const& tr : run.traces)
        {
            auto const& c = run.cells[tr.cell];
            write_chain_trace(tr.rows, dir
                                           / ("trace_ring" + std::to_string(c.ring) + "_pos"
                                              + std::to_string(c.ring_position) + ".csv"));
        }
        if (run.sweep)
            write_sweep(*run.sweep, run.cells, dir);
        if (!run.frames.empty())
            write_frames(run.frames, run.cells, dir / "frame.csv");
    }
    write_manifest(result, directory / "manifest.txt");
}

}  // namespace vesselcomm
