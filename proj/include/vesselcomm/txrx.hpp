//! \file vesselcomm/txrx.hpp
//! The digital chain: on-off keying pulse trains at the transmitter and, at
//! each receiver cell, a windowed assimilation counter feeding a moving-sum
//! FIR filter feeding the synchronization-and-threshold detector (STD).
#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace vesselcomm {

using Bits = std::vector<std::uint8_t>;

inline Bits parse_bits(std::string_view text)
{
    Bits bits;
    for (char ch : text)
    {
        if (ch != '0' && ch != '1')
            throw std::invalid_argument("bit string may contain only '0' and '1'");
        bits.push_back(static_cast<std::uint8_t>(ch - '0'));
    }
    return bits;
}

inline std::string format_bits(std::span<std::uint8_t const> bits)
{
    std::string s;
    for (auto b : bits)
        s.push_back(b ? '1' : '0');
    return s;
}

//---------------------------------------------------------------------------//
// Transmitter
//---------------------------------------------------------------------------//
struct EncoderConfig
{
    std::int64_t burst_size = 3000;
    int frame_bits = 1;
    double pulse_period = 25500.0;  // us
    // Reserved for spreading codes (K pulses carrying M bits); must stay 0.
    int spreading_pulses = 0;
    int spreading_bits = 0;

    friend bool operator==(EncoderConfig const&, EncoderConfig const&) = default;
};

inline void validate(EncoderConfig const& c)
{
    if (c.burst_size < 0)
        throw std::invalid_argument("burst size must be >= 0");
    if (c.frame_bits < 1)
        throw std::invalid_argument("frame length must be >= 1");
    if (!(c.pulse_period > 0.0))
        throw std::invalid_argument("pulse period must be positive");
    if (c.spreading_pulses != 0 || c.spreading_bits != 0)
        throw std::invalid_argument("spreading codes are not supported");
}

struct PulseRelease
{
    double time = 0.0;
    std::int64_t count = 0;

    friend bool operator==(PulseRelease const&, PulseRelease const&) = default;
};

struct PulseTrain
{
    std::vector<PulseRelease> releases;
    Bits bits;
};

/*!
 * OOK schedule: the synchronization burst at t = 0, then for bit k
 * (1-based) a burst at k * tau when the bit is 1 and nothing when it is 0.
 */
inline PulseTrain encode_ook(std::span<std::uint8_t const> bits, EncoderConfig const& cfg)
{
    validate(cfg);
    if (bits.size() != static_cast<std::size_t>(cfg.frame_bits))
        throw std::invalid_argument("encode_ook: bit count differs from frame length");
    PulseTrain train;
    train.bits.assign(bits.begin(), bits.end());
    train.releases.push_back({0.0, cfg.burst_size});
    for (std::size_t k = 0; k < bits.size(); ++k)
        if (bits[k])
            train.releases.push_back({static_cast<double>(k + 1) * cfg.pulse_period,
                                      cfg.burst_size});
    return train;
}

//---------------------------------------------------------------------------//
// Receiver
//---------------------------------------------------------------------------//
struct ReceiverChainConfig
{
    double window = 750.0;  // T, us
    int delay_lines = 33;   // P
    std::int64_t threshold = 2;
    // Bits read after each synchronization. 0 turns the STD into a pure
    // pulse detector (sync, guard, idle), which is how impulse sweeps count.
    int frame_bits = 1;

    //! Sampling period tau = (P + 1) T.
    double tau() const { return (delay_lines + 1) * window; }

    friend bool operator==(ReceiverChainConfig const&, ReceiverChainConfig const&) = default;
};

inline void validate(ReceiverChainConfig const& c)
{
    if (!(c.window > 0.0))
        throw std::invalid_argument("counter window must be positive");
    if (c.delay_lines < 0)
        throw std::invalid_argument("delay-line count must be >= 0");
    if (c.threshold < 1)
        throw std::invalid_argument("threshold must be >= 1");
    if (c.frame_bits < 0)
        throw std::invalid_argument("frame length must be >= 0");
}

class OrderingError : public std::runtime_error
{
  public:
    using std::runtime_error::runtime_error;
};

/*!
 * Counts events in contiguous windows [(n-1) T, n T) anchored at t = 0.
 * Windows are 1-based.
 */
class WindowCounter
{
  public:
    explicit WindowCounter(double window) : window_(window) {}

    std::int64_t index() const { return index_; }
    double window_start() const { return (index_ - 1) * window_; }
    double window_end() const { return index_ * window_; }
    std::int64_t pending() const { return count_; }

    void ingest(double t)
    {
        if (t < window_start())
            throw OrderingError("event at t=" + std::to_string(t)
                                + " precedes the current counter window");
        if (t >= window_end())
            throw OrderingError("event at t=" + std::to_string(t)
                                + " lies beyond the open counter window");
        ++count_;
    }

    //! Close the open window and return c_n; the counter resets.
    std::int64_t close_window()
    {
        auto const c = count_;
        count_ = 0;
        ++index_;
        return c;
    }

  private:
    double window_;
    std::int64_t index_ = 1;
    std::int64_t count_ = 0;
};

//! Moving sum of the last P + 1 counter readings.
class FirAccumulator
{
  public:
    explicit FirAccumulator(int delay_lines)
        : taps_(static_cast<std::size_t>(delay_lines) + 1, 0)
    {
    }

    std::int64_t update(std::int64_t c)
    {
        sum_ += c - taps_[head_];
        taps_[head_] = c;
        head_ = (head_ + 1) % taps_.size();
        return sum_;
    }

    std::int64_t value() const { return sum_; }
    std::span<std::int64_t const> taps() const { return taps_; }

  private:
    std::vector<std::int64_t> taps_;
    std::size_t head_ = 0;
    std::int64_t sum_ = 0;
};

enum class StdMode
{
    idle,
    receiving,
    guard
};

inline char const* to_string(StdMode m)
{
    switch (m)
    {
        case StdMode::idle:
            return "idle";
        case StdMode::receiving:
            return "receiving";
        case StdMode::guard:
            return "guard";
    }
    return "?";
}

struct StdOutput
{
    bool synchronized = false;
    std::optional<std::uint8_t> bit;
    bool frame_complete = false;
};

/*!
 * Synchronization and threshold detection, driven once per counter window.
 *
 * Idle: checks f every window and synchronizes on f >= Th. Receiving: reads
 * f every P + 1 windows, the first read P + 1 windows after
 * synchronization, and emits 1 when f >= Th. After N bits it waits one more
 * P + 1 windows (guard) and then resumes the idle check in that same window.
 */
class SyncThresholdDetector
{
  public:
    explicit SyncThresholdDetector(ReceiverChainConfig const& cfg) : cfg_(cfg)
    {
        validate(cfg_);
    }

    StdMode mode() const { return mode_; }
    int bit_index() const { return static_cast<int>(current_.size()) + 1; }
    std::vector<Bits> const& frames() const { return frames_; }
    Bits const& partial_frame() const { return current_; }
    std::int64_t synchronizations() const { return syncs_; }
    std::int64_t ones() const { return ones_; }
    //! Pulses recognised: every synchronization plus every decoded 1.
    std::int64_t decoded_pulses() const { return syncs_ + ones_; }

    StdOutput on_window(std::int64_t f)
    {
        StdOutput out;
        std::int64_t const period = cfg_.delay_lines + 1;
        switch (mode_)
        {
            case StdMode::guard:
                if (--countdown_ > 0)
                    break;
                mode_ = StdMode::idle;
                [[fallthrough]];
            case StdMode::idle:
                if (f >= cfg_.threshold)
                {
                    out.synchronized = true;
                    ++syncs_;
                    countdown_ = period;
                    mode_ = StdMode::receiving;
                    if (cfg_.frame_bits == 0)
                        complete_frame(out);
                }
                break;
            case StdMode::receiving:
                if (--countdown_ > 0)
                    break;
                {
                    std::uint8_t const b = f >= cfg_.threshold ? 1 : 0;
                    out.bit = b;
                    ones_ += b;
                    current_.push_back(b);
                    countdown_ = period;
                    if (current_.size() == static_cast<std::size_t>(cfg_.frame_bits))
                        complete_frame(out);
                }
                break;
        }
        return out;
    }

  private:
    void complete_frame(StdOutput& out)
    {
        frames_.push_back(std::move(current_));
        current_.clear();
        out.frame_complete = true;
        mode_ = StdMode::guard;
    }

    ReceiverChainConfig cfg_;
    StdMode mode_ = StdMode::idle;
    std::int64_t countdown_ = 0;
    Bits current_;
    std::vector<Bits> frames_;
    std::int64_t syncs_ = 0;
    std::int64_t ones_ = 0;
};

struct ChainTraceRow
{
    std::int64_t window_index = 0;
    double t_n = 0.0;
    std::int64_t c_n = 0;
    std::int64_t f_n = 0;
    StdMode mode = StdMode::idle;  // after the window was processed
    std::optional<std::uint8_t> bit;
};

//! Counter -> FIR -> STD for one receiver cell, fed with event times.
class ReceiverChain
{
  public:
    explicit ReceiverChain(ReceiverChainConfig const& cfg, bool record_trace = false)
        : cfg_(cfg)
        , counter_(cfg.window)
        , fir_(cfg.delay_lines)
        , std_(cfg)
        , record_(record_trace)
    {
    }

    ReceiverChainConfig const& config() const { return cfg_; }
    SyncThresholdDetector const& detector() const { return std_; }
    std::vector<ChainTraceRow> const& trace() const { return trace_; }
    std::int64_t windows_closed() const { return counter_.index() - 1; }

    //! Close every window whose end is at or before t.
    void advance_to(double t)
    {
        while (counter_.window_end() <= t)
            close_one();
    }

    void ingest(double t)
    {
        advance_to(t);
        counter_.ingest(t);
    }

  private:
    void close_one()
    {
        ChainTraceRow row;
        row.window_index = counter_.index();
        row.t_n = counter_.window_end();
        row.c_n = counter_.close_window();
        row.f_n = fir_.update(row.c_n);
        auto const out = std_.on_window(row.f_n);
        row.mode = std_.mode();
        row.bit = out.bit;
        if (record_)
            trace_.push_back(row);
    }

    ReceiverChainConfig cfg_;
    WindowCounter counter_;
    FirAccumulator fir_;
    SyncThresholdDetector std_;
    bool record_;
    std::vector<ChainTraceRow> trace_;
};

struct DecodeResult
{
    std::vector<Bits> frames;
    Bits partial;
    StdMode final_mode = StdMode::idle;
    std::int64_t synchronizations = 0;
    std::int64_t decoded_pulses = 0;
    std::int64_t windows = 0;
};

/*!
 * Run a complete, time-ordered event log through the chain, closing every
 * window that ends at or before the horizon.
 */
inline DecodeResult decode_frame(std::span<double const> event_times,
                                 ReceiverChainConfig const& cfg, double horizon)
{
    ReceiverChain chain(cfg);
    for (double t : event_times)
    {
        if (t > horizon)
            break;
        chain.ingest(t);
    }
    chain.advance_to(horizon);
    auto const& d = chain.detector();
    return {d.frames(), d.partial_frame(), d.mode(), d.synchronizations(),
            d.decoded_pulses(), chain.windows_closed()};
}

}  // namespace vesselcomm
