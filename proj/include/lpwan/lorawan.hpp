#pragma once

// LoRaWAN uplink/downlink model (EU868): time on air, payload caps,
// fragmentation, duty-cycle scheduling, per-state energy, ADR, and
// device-class downlink latency.

#include "lpwan/errors.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace lpwan::lora {

inline constexpr int kMinSpreadingFactor = 7;
inline constexpr int kMaxSpreadingFactor = 12;
/// MAC header + MIC carried by every frame (and therefore by every fragment).
inline constexpr int kMacOverheadBytes = 13;
inline constexpr double kMaxTxPowerDbm = 14.0;
inline constexpr double kMinTxPowerDbm = 2.0;
/// ADR: SNR margin consumed per SF or power step, and margin kept in reserve.
inline constexpr double kAdrStepDb = 3.0;
inline constexpr double kAdrInstallationMarginDb = 3.0;
inline constexpr double kRx1DelayS = 1.0;

struct RadioConfig {
    int spreading_factor = 12;
    int bandwidth_hz = 125000;
    /// Coding rate 4/(4+coding_rate), coding_rate in 1..4.
    int coding_rate = 1;
    int preamble_symbols = 8;
    bool explicit_header = true;
    bool crc_enabled = true;
    bool low_datarate_optimize = true;
    double tx_power_dbm = kMaxTxPowerDbm;

    bool operator==(const RadioConfig&) const = default;
};

inline bool is_allowed_bandwidth(int bw) { return bw == 125000 || bw == 250000 || bw == 500000; }

inline double symbol_time_s(int spreading_factor, int bandwidth_hz) {
    return std::ldexp(1.0, spreading_factor) / static_cast<double>(bandwidth_hz);
}

inline double symbol_time_s(const RadioConfig& cfg) { return symbol_time_s(cfg.spreading_factor, cfg.bandwidth_hz); }

/// Low data-rate optimisation is mandatory once a symbol lasts 16 ms or more.
inline bool requires_low_datarate_optimize(int spreading_factor, int bandwidth_hz) {
    return symbol_time_s(spreading_factor, bandwidth_hz) >= 0.016;
}

inline void validate(const RadioConfig& cfg) {
    if (cfg.spreading_factor < kMinSpreadingFactor || cfg.spreading_factor > kMaxSpreadingFactor)
        throw InvalidConfig("spreading factor " + std::to_string(cfg.spreading_factor) + " outside 7..12");
    if (!is_allowed_bandwidth(cfg.bandwidth_hz))
        throw InvalidConfig("bandwidth " + std::to_string(cfg.bandwidth_hz) + " Hz not in {125k, 250k, 500k}");
    if (cfg.coding_rate < 1 || cfg.coding_rate > 4)
        throw InvalidConfig("coding rate must be 4/5..4/8");
    if (cfg.preamble_symbols <= 0) throw InvalidConfig("preamble length must be positive");
    if (!std::isfinite(cfg.tx_power_dbm)) throw InvalidConfig("tx power must be finite");
    if (requires_low_datarate_optimize(cfg.spreading_factor, cfg.bandwidth_hz) && !cfg.low_datarate_optimize)
        throw InvalidConfig("low data-rate optimisation required for symbol durations >= 16 ms");
}

/// Same radio settings at another SF, with LDRO following the SF/BW rule.
inline RadioConfig with_spreading_factor(RadioConfig cfg, int spreading_factor) {
    cfg.spreading_factor = spreading_factor;
    cfg.low_datarate_optimize = requires_low_datarate_optimize(spreading_factor, cfg.bandwidth_hz);
    return cfg;
}

/// EU868 maximum application payload per data rate.
inline int max_app_payload(int spreading_factor) {
    static constexpr std::array<int, 6> table{242, 242, 115, 51, 51, 51};
    if (spreading_factor < kMinSpreadingFactor || spreading_factor > kMaxSpreadingFactor)
        throw InvalidConfig("spreading factor " + std::to_string(spreading_factor) + " outside 7..12");
    return table[static_cast<std::size_t>(spreading_factor - kMinSpreadingFactor)];
}

inline int max_frame_bytes(int spreading_factor) { return max_app_payload(spreading_factor) + kMacOverheadBytes; }

/// Number of payload symbols (including the 8 fixed ones) for a frame of `frame_bytes`.
inline int payload_symbols(const RadioConfig& cfg, int frame_bytes) {
    const int sf = cfg.spreading_factor;
    const int de = cfg.low_datarate_optimize ? 1 : 0;
    const int ih = cfg.explicit_header ? 0 : 1;
    const int crc = cfg.crc_enabled ? 1 : 0;
    const int numerator = 8 * frame_bytes - 4 * sf + 28 + 16 * crc - 20 * ih;
    const int denominator = 4 * (sf - 2 * de);
    const int blocks = numerator > 0 ? (numerator + denominator - 1) / denominator : 0;
    return 8 + blocks * (cfg.coding_rate + 4);
}

/// Airtime of one frame carrying `frame_bytes` on air (MAC header included).
inline double time_on_air(const RadioConfig& cfg, int frame_bytes) {
    validate(cfg);
    if (frame_bytes < 0) throw InvalidConfig("negative frame size");
    const int limit = max_frame_bytes(cfg.spreading_factor);
    if (frame_bytes > limit) throw FragmentationRequired(frame_bytes, limit);
    const double ts = symbol_time_s(cfg);
    const double preamble = (cfg.preamble_symbols + 4.25) * ts;
    return preamble + payload_symbols(cfg, frame_bytes) * ts;
}

/// Splits an application payload into cap-sized fragments; only the last may be short.
inline std::vector<int> fragment_payload(int total_bytes, int spreading_factor) {
    if (total_bytes < 1) throw InvalidConfig("payload must be at least 1 B");
    const int cap = max_app_payload(spreading_factor);
    const int count = (total_bytes + cap - 1) / cap;
    std::vector<int> fragments(static_cast<std::size_t>(count), cap);
    fragments.back() = total_bytes - cap * (count - 1);
    return fragments;
}

// ---------------------------------------------------------------------------
// Energy

/// Per-state power of the five-state uplink sequence: transmit, processing,
/// RX1, processing, RX2. Receive windows default to `rx_window_symbols`
/// symbols at the configured SF when no explicit duration is set.
struct EnergyProfile {
    double p_transmit_w = 0.15;
    double p_process_w = 0.016;
    double p_receive_w = 0.04;
    double t_process1_s = 1.0;
    double t_process2_s = 1.0;
    std::optional<double> t_rx1_s;
    std::optional<double> t_rx2_s;
    int rx_window_symbols = 8;
    double p_sleep_w = 5e-6;

    bool operator==(const EnergyProfile&) const = default;
};

inline void validate(const EnergyProfile& p) {
    auto check = [](double v, const char* name, bool strictly_positive) {
        if (!std::isfinite(v) || v < 0.0 || (strictly_positive && v == 0.0))
            throw InvalidConfig(std::string(name) + " must be finite and " + (strictly_positive ? "> 0" : ">= 0"));
    };
    check(p.p_transmit_w, "p_transmit_w", true);
    check(p.p_process_w, "p_process_w", false);
    check(p.p_receive_w, "p_receive_w", true);
    check(p.t_process1_s, "t_process1_s", false);
    check(p.t_process2_s, "t_process2_s", false);
    if (p.t_rx1_s) check(*p.t_rx1_s, "t_rx1_s", false);
    if (p.t_rx2_s) check(*p.t_rx2_s, "t_rx2_s", false);
    check(p.p_sleep_w, "p_sleep_w", false);
    if (p.rx_window_symbols < 0) throw InvalidConfig("rx_window_symbols must be >= 0");
}

inline double rx1_duration_s(const EnergyProfile& p, const RadioConfig& cfg) {
    return p.t_rx1_s.value_or(p.rx_window_symbols * symbol_time_s(cfg));
}

inline double rx2_duration_s(const EnergyProfile& p, const RadioConfig& cfg) {
    return p.t_rx2_s.value_or(p.rx_window_symbols * symbol_time_s(cfg));
}

struct UplinkEnergy {
    double transmit_j = 0.0;
    double process_j = 0.0;
    double receive_j = 0.0;
    double airtime_s = 0.0;
    /// Wall time from transmit start to the end of RX2.
    double active_s = 0.0;

    double total_j() const { return transmit_j + process_j + receive_j; }
};

inline UplinkEnergy uplink_energy_breakdown(const RadioConfig& cfg, const EnergyProfile& profile, int frame_bytes) {
    validate(profile);
    UplinkEnergy e;
    e.airtime_s = time_on_air(cfg, frame_bytes);
    const double rx = rx1_duration_s(profile, cfg) + rx2_duration_s(profile, cfg);
    const double proc = profile.t_process1_s + profile.t_process2_s;
    e.transmit_j = profile.p_transmit_w * e.airtime_s;
    e.process_j = profile.p_process_w * proc;
    e.receive_j = profile.p_receive_w * rx;
    e.active_s = e.airtime_s + proc + rx;
    return e;
}

/// Energy of one uplink frame of `frame_bytes` (MAC header included).
inline double uplink_energy(const RadioConfig& cfg, const EnergyProfile& profile, int frame_bytes) {
    return uplink_energy_breakdown(cfg, profile, frame_bytes).total_j();
}

/// Energy of an application payload sent as MAC-framed fragments.
inline double payload_energy(const RadioConfig& cfg, const EnergyProfile& profile, int payload_bytes) {
    double total = 0.0;
    for (int f : fragment_payload(payload_bytes, cfg.spreading_factor))
        total += uplink_energy(cfg, profile, f + kMacOverheadBytes);
    return total;
}

// ---------------------------------------------------------------------------
// Duty cycle

using Micros = std::int64_t;

inline Micros to_micros(double seconds) { return static_cast<Micros>(std::ceil(seconds * 1e6 - 1e-6)); }
inline double to_seconds(Micros us) { return static_cast<double>(us) * 1e-6; }

/// Per-transmission off-time bookkeeping for one sub-band.
///
/// After a transmission of airtime T the band is closed for T*(1/d - 1).
/// Value type: schedule functions take a ledger and hand back the updated copy.
class DutyCycleLedger {
  public:
    explicit DutyCycleLedger(double duty_fraction = 0.01) : duty_(duty_fraction) {
        if (!(duty_fraction > 0.0 && duty_fraction <= 1.0))
            throw InvalidConfig("duty fraction must be in (0, 1]");
    }

    double duty_fraction() const { return duty_; }
    Micros next_allowed_us() const { return next_allowed_; }
    Micros on_air_us() const { return on_air_; }
    std::optional<Micros> first_tx_us() const { return first_tx_; }
    bool audit_ok() const { return audit_ok_; }

    Micros off_time_us(Micros airtime_us) const {
        if (duty_ >= 1.0) return 0;
        return static_cast<Micros>(std::ceil(static_cast<double>(airtime_us) * (1.0 / duty_ - 1.0)));
    }

    Micros earliest_start(Micros now_us) const { return std::max(now_us, next_allowed_); }

    /// Books a transmission; throws if the band is still closed.
    void record(Micros start_us, Micros airtime_us) {
        if (start_us < next_allowed_)
            throw ProtocolViolation("transmission starts before the duty-cycle off-time has elapsed");
        if (!first_tx_) first_tx_ = start_us;
        // Everything booked so far, measured at this event boundary.
        const double elapsed = static_cast<double>(start_us - *first_tx_);
        if (static_cast<double>(on_air_) > duty_ * elapsed + 1.0) audit_ok_ = false;
        on_air_ += airtime_us;
        next_allowed_ = start_us + airtime_us + off_time_us(airtime_us);
    }

    /// Ratio of booked airtime to the span from first transmission to band reopening.
    double utilisation() const {
        if (!first_tx_ || next_allowed_ <= *first_tx_) return 0.0;
        return static_cast<double>(on_air_) / static_cast<double>(next_allowed_ - *first_tx_);
    }

  private:
    double duty_;
    Micros next_allowed_ = std::numeric_limits<Micros>::min();
    Micros on_air_ = 0;
    std::optional<Micros> first_tx_;
    bool audit_ok_ = true;
};

struct UplinkSchedule {
    std::vector<Micros> start_us;
    std::vector<Micros> airtime_us;
    /// From `now` to the end of the last fragment.
    double latency_s = 0.0;
    DutyCycleLedger ledger;
};

/// Plans the fragments back to back under the duty-cycle off-time rule.
inline UplinkSchedule schedule_uplink(std::span<const int> fragments, const RadioConfig& cfg,
                                      const DutyCycleLedger& ledger, Micros now_us = 0) {
    UplinkSchedule s{{}, {}, 0.0, ledger};
    Micros t = now_us;
    Micros end = now_us;
    for (int f : fragments) {
        const Micros airtime = to_micros(time_on_air(cfg, f + kMacOverheadBytes));
        const Micros start = s.ledger.earliest_start(t);
        s.ledger.record(start, airtime);
        s.start_us.push_back(start);
        s.airtime_us.push_back(airtime);
        end = start + airtime;
        t = end;
    }
    s.latency_s = to_seconds(end - now_us);
    return s;
}

/// Time from first transmission intent to the end of the last fragment.
inline double uplink_delivery_latency(std::span<const int> fragments, const RadioConfig& cfg,
                                      const DutyCycleLedger& ledger, Micros now_us = 0) {
    return schedule_uplink(fragments, cfg, ledger, now_us).latency_s;
}

// ---------------------------------------------------------------------------
// Downlink

enum class DeviceClassKind { A, B, C };

struct DeviceClass {
    DeviceClassKind kind = DeviceClassKind::A;
    std::optional<double> ping_slot_period_s;
};

struct DownlinkParams {
    /// Class A: time until the next scheduled uplink opens RX1/RX2.
    double next_uplink_in_s = 0.0;
    double processing_s = 0.0;
};

/// Worst-case wait before the device can hear a downlink.
///
/// For Class B, `elapsed_s` is the time since the last ping slot opened.
inline double downlink_latency_bound(const DeviceClass& cls, double elapsed_s, const DownlinkParams& params) {
    switch (cls.kind) {
    case DeviceClassKind::C:
        return params.processing_s;
    case DeviceClassKind::B: {
        if (!cls.ping_slot_period_s || !(*cls.ping_slot_period_s > 0.0))
            throw InvalidConfig("class B requires a positive ping slot period");
        const double period = *cls.ping_slot_period_s;
        const double phase = std::fmod(std::max(elapsed_s, 0.0), period);
        return (phase == 0.0 ? 0.0 : period - phase) + params.processing_s;
    }
    case DeviceClassKind::A:
        return std::max(params.next_uplink_in_s, 0.0) + kRx1DelayS + params.processing_s;
    }
    return 0.0;
}

// ---------------------------------------------------------------------------
// ADR

/// Number of 3 dB steps implied by an SNR margin; positive steps mean headroom.
inline int adr_steps(double snr_margin_db) {
    if (snr_margin_db > 0.0)
        return static_cast<int>(std::floor(std::max(0.0, snr_margin_db - kAdrInstallationMarginDb) / kAdrStepDb));
    if (snr_margin_db < 0.0) return -static_cast<int>(std::ceil(-snr_margin_db / kAdrStepDb));
    return 0;
}

/// Trades SNR headroom for a lower SF first, then lower power; a deficit
/// raises power first, then SF. Always returns a valid configuration.
inline RadioConfig adr_adjust(double snr_margin_db, const RadioConfig& current) {
    RadioConfig cfg = current;
    int steps = adr_steps(snr_margin_db);
    if (steps > 0) {
        while (steps > 0 && cfg.spreading_factor > kMinSpreadingFactor) {
            --cfg.spreading_factor;
            --steps;
        }
        cfg.tx_power_dbm = std::max(kMinTxPowerDbm, cfg.tx_power_dbm - kAdrStepDb * steps);
    } else if (steps < 0) {
        int deficit = -steps;
        while (deficit > 0 && cfg.tx_power_dbm < kMaxTxPowerDbm) {
            cfg.tx_power_dbm = std::min(kMaxTxPowerDbm, cfg.tx_power_dbm + kAdrStepDb);
            --deficit;
        }
        cfg.spreading_factor = std::min(kMaxSpreadingFactor, cfg.spreading_factor + deficit);
    }
    if (cfg.spreading_factor != current.spreading_factor)
        cfg.low_datarate_optimize = requires_low_datarate_optimize(cfg.spreading_factor, cfg.bandwidth_hz);
    return cfg;
}

} // namespace lpwan::lora
