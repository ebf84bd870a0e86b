#pragma once

// NB-IoT modem model: CE-level selection, per-state message energy,
// empirical uplink latency, eDRX/PSM downlink reachability and the
// join -> send -> cDRX -> eDRX -> PSM state machine.

#include "lpwan/errors.hpp"
#include "lpwan/random.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <optional>
#include <string>
#include <string_view>

namespace lpwan::nbiot {

inline constexpr int kMaxPayloadBytes = 1600;
/// IP/UDP + NAS overhead added to every message.
inline constexpr int kMessageOverheadBytes = 18;
inline constexpr double kMaxEdrxCycleS = 186.0 * 60.0;
inline constexpr double kUplinkRateBps = 180e3;
inline constexpr double kDownlinkRateBps = 200e3;

enum class CeLevel { ce0 = 0, ce1 = 1, ce2 = 2 };

inline constexpr std::array<CeLevel, 3> kAllCeLevels{CeLevel::ce0, CeLevel::ce1, CeLevel::ce2};

inline int index(CeLevel ce) { return static_cast<int>(ce); }

inline std::string_view to_string(CeLevel ce) {
    switch (ce) {
    case CeLevel::ce0: return "CE0";
    case CeLevel::ce1: return "CE1";
    case CeLevel::ce2: return "CE2";
    }
    return "?";
}

inline CeLevel ce_from_index(int i) {
    if (i < 0 || i > 2) throw InvalidConfig("CE level must be 0, 1 or 2");
    return static_cast<CeLevel>(i);
}

struct Config {
    double rsrp_threshold_01_dbm = -119.0;
    double rsrp_threshold_12_dbm = -125.0;
    double tx_power_dbm = 23.0;
    int max_payload_bytes = kMaxPayloadBytes;
    /// Transmission repetitions per CE level.
    std::array<int, 3> repetitions{1, 2, 4};
    double t_cdrx_s = 20.0;
    double edrx_cycle_s = 20.48;
    double ptw_s = 2.56;
    double psm_tau_s = 86400.0;
    bool include_join_energy = false;

    bool operator==(const Config&) const = default;
};

inline void validate(const Config& c) {
    if (!(c.rsrp_threshold_01_dbm > c.rsrp_threshold_12_dbm))
        throw InvalidConfig("RSRP thresholds must satisfy threshold_01 > threshold_12");
    if (c.max_payload_bytes < 1 || c.max_payload_bytes > kMaxPayloadBytes)
        throw InvalidConfig("max payload must be in 1..1600 B");
    for (std::size_t i = 0; i < c.repetitions.size(); ++i) {
        if (c.repetitions[i] < 1) throw InvalidConfig("repetition multipliers must be positive");
        if (i > 0 && c.repetitions[i] < c.repetitions[i - 1])
            throw InvalidConfig("repetition multipliers must be non-decreasing from CE0 to CE2");
    }
    for (double t : {c.t_cdrx_s, c.edrx_cycle_s, c.ptw_s, c.psm_tau_s})
        if (!std::isfinite(t) || t < 0.0) throw InvalidConfig("timers must be finite and >= 0");
    if (c.edrx_cycle_s > kMaxEdrxCycleS) throw InvalidConfig("eDRX cycle exceeds 186 minutes");
    if (c.ptw_s > c.edrx_cycle_s) throw InvalidConfig("paging window longer than the eDRX cycle");
}

inline int repetitions(CeLevel ce, const Config& c) { return c.repetitions[static_cast<std::size_t>(index(ce))]; }

/// Inclusive at the upper threshold: exactly threshold_01 is still CE0.
inline CeLevel select_ce_level(double rsrp_dbm, const Config& config) {
    if (rsrp_dbm >= config.rsrp_threshold_01_dbm) return CeLevel::ce0;
    if (rsrp_dbm >= config.rsrp_threshold_12_dbm) return CeLevel::ce1;
    return CeLevel::ce2;
}

// ---------------------------------------------------------------------------
// Energy

struct StateCost {
    double power_w = 0.0;
    double duration_s = 0.0;

    double energy_j() const { return power_w * duration_s; }
    bool operator==(const StateCost&) const = default;
};

/// Power and base duration of each modem state. Join and transmit durations
/// are multiplied by the CE repetition count; transmit also grows per byte.
struct EnergyProfile {
    StateCost search_join{0.35, 9.0};
    StateCost transmit{0.75, 0.15};
    double transmit_per_byte_s = 2e-4;
    StateCost cdrx{0.08, 20.0};
    StateCost edrx{0.009, 20.48};
    StateCost psm{1e-5, 0.0};
    /// Leaving PSM before an uplink.
    StateCost wake{0.1, 0.5};

    bool operator==(const EnergyProfile&) const = default;
};

inline void validate(const EnergyProfile& p) {
    const std::array<std::pair<const char*, const StateCost*>, 6> states{{{"search_join", &p.search_join},
                                                                         {"transmit", &p.transmit},
                                                                         {"cdrx", &p.cdrx},
                                                                         {"edrx", &p.edrx},
                                                                         {"psm", &p.psm},
                                                                         {"wake", &p.wake}}};
    for (const auto& [name, s] : states) {
        if (!std::isfinite(s->power_w) || s->power_w < 0.0 || !std::isfinite(s->duration_s) || s->duration_s < 0.0)
            throw InvalidConfig(std::string(name) + ": power and duration must be finite and >= 0");
    }
    if (!std::isfinite(p.transmit_per_byte_s) || p.transmit_per_byte_s < 0.0)
        throw InvalidConfig("transmit_per_byte_s must be finite and >= 0");
    for (const auto& [name, s] : states) {
        if (s->power_w < p.psm.power_w) throw InvalidConfig("PSM power must be the lowest state power");
    }
}

/// Time spent in the transmit state, repetitions included. Never shorter
/// than the bytes take at the peak uplink rate.
inline double transmit_duration_s(CeLevel ce, int payload_bytes, const EnergyProfile& p, const Config& c) {
    const int wire = payload_bytes + kMessageOverheadBytes;
    const double nominal = p.transmit.duration_s + p.transmit_per_byte_s * wire;
    const double floor = wire * 8.0 / kUplinkRateBps;
    return repetitions(ce, c) * std::max(nominal, floor);
}

inline double join_duration_s(CeLevel ce, const EnergyProfile& p, const Config& c) {
    return repetitions(ce, c) * p.search_join.duration_s;
}

struct MessageEnergy {
    double join_j = 0.0;
    double transmit_j = 0.0;
    double cdrx_j = 0.0;
    double edrx_j = 0.0;
    double join_s = 0.0;
    double transmit_s = 0.0;

    double total_j() const { return join_j + transmit_j + cdrx_j + edrx_j; }
};

inline MessageEnergy message_energy_breakdown(CeLevel ce, int payload_bytes, const EnergyProfile& profile,
                                              const Config& config) {
    if (payload_bytes < 0) throw InvalidConfig("negative payload");
    if (payload_bytes > config.max_payload_bytes) throw PayloadExceeded(payload_bytes, config.max_payload_bytes);
    MessageEnergy e;
    e.transmit_s = transmit_duration_s(ce, payload_bytes, profile, config);
    e.transmit_j = profile.transmit.power_w * e.transmit_s;
    e.cdrx_j = profile.cdrx.energy_j();
    e.edrx_j = profile.edrx.energy_j();
    if (config.include_join_energy) {
        e.join_s = join_duration_s(ce, profile, config);
        e.join_j = profile.search_join.power_w * e.join_s;
    }
    return e;
}

inline double message_energy(CeLevel ce, int payload_bytes, const EnergyProfile& profile, const Config& config) {
    return message_energy_breakdown(ce, payload_bytes, profile, config).total_j();
}

inline double energy_per_byte(CeLevel ce, int payload_bytes, const EnergyProfile& profile, const Config& config) {
    if (payload_bytes < 1) throw InvalidConfig("energy per byte needs at least 1 B");
    return message_energy(ce, payload_bytes, profile, config) / payload_bytes;
}

// ---------------------------------------------------------------------------
// Uplink latency

inline double standard_normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

/// Inverse of the standard normal CDF by bisection; p in (0, 1).
inline double standard_normal_quantile(double p) {
    double lo = -40.0, hi = 40.0;
    for (int i = 0; i < 200 && hi - lo > 1e-14; ++i) {
        const double mid = 0.5 * (lo + hi);
        (standard_normal_cdf(mid) < p ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
}

/// Log-normal body plus a log-uniform outlier tail, capped at `tail_cap_s`.
/// The body location is solved so that the mixture median equals `median_s`.
struct LatencyParams {
    double median_s = 1.0;
    double shape = 0.5;
    double tail_probability = 0.0;
    double tail_min_s = 1.0;
    double tail_cap_s = 10.0;

    bool operator==(const LatencyParams&) const = default;
};

inline void validate(const LatencyParams& p) {
    if (!(p.median_s > 0.0) || !std::isfinite(p.median_s)) throw InvalidConfig("latency median must be > 0");
    if (!(p.shape >= 0.0) || !std::isfinite(p.shape)) throw InvalidConfig("latency shape must be >= 0");
    if (!(p.tail_probability >= 0.0 && p.tail_probability < 0.5))
        throw InvalidConfig("tail probability must be in [0, 0.5)");
    if (!(p.tail_cap_s >= p.median_s)) throw InvalidConfig("tail cap below the median");
    if (p.tail_probability > 0.0 && !(p.tail_min_s >= p.median_s && p.tail_min_s <= p.tail_cap_s))
        throw InvalidConfig("tail must start at or above the median and end at the cap");
}

/// Location of the log-normal body.
inline double body_log_location(const LatencyParams& p) {
    if (p.shape == 0.0) return std::log(p.median_s);
    const double q = 0.5 / (1.0 - p.tail_probability);
    return std::log(p.median_s) - p.shape * standard_normal_quantile(q);
}

inline double latency_cdf(const LatencyParams& p, double x) {
    if (x <= 0.0) return 0.0;
    if (x >= p.tail_cap_s) return 1.0;
    double body = 0.0;
    if (p.shape == 0.0)
        body = x >= p.median_s ? 1.0 : 0.0;
    else
        body = standard_normal_cdf((std::log(x) - body_log_location(p)) / p.shape);
    double tail = 0.0;
    if (p.tail_probability > 0.0 && x > p.tail_min_s)
        tail = std::log(x / p.tail_min_s) / std::log(p.tail_cap_s / p.tail_min_s);
    return (1.0 - p.tail_probability) * body + p.tail_probability * std::min(tail, 1.0);
}

inline double latency_quantile(const LatencyParams& p, double q) {
    if (q <= 0.0) return 0.0;
    if (q >= 1.0) return p.tail_cap_s;
    double lo = 0.0, hi = p.tail_cap_s;
    for (int i = 0; i < 200 && hi - lo > 1e-12; ++i) {
        const double mid = 0.5 * (lo + hi);
        (latency_cdf(p, mid) < q ? lo : hi) = mid;
    }
    return hi;
}

struct LatencyModel {
    std::array<LatencyParams, 3> per_ce{
        LatencyParams{0.859, 0.58, 0.02, 2.0, 5.5},
        LatencyParams{1.117, 0.55, 0.02, 2.0, 9.7},
        LatencyParams{1.915, 0.16, 0.15, 3.0, 23.5},
    };

    const LatencyParams& operator[](CeLevel ce) const { return per_ce[static_cast<std::size_t>(index(ce))]; }
    LatencyParams& operator[](CeLevel ce) { return per_ce[static_cast<std::size_t>(index(ce))]; }
    bool operator==(const LatencyModel&) const = default;
};

inline void validate(const LatencyModel& m) {
    for (const auto& p : m.per_ce) validate(p);
}

inline double uplink_latency_sample(CeLevel ce, const LatencyModel& model, Rng& rng) {
    const LatencyParams& p = model[ce];
    if (p.tail_probability > 0.0 && rng.uniform() < p.tail_probability)
        return p.tail_min_s * std::pow(p.tail_cap_s / p.tail_min_s, rng.uniform());
    if (p.shape == 0.0) return p.median_s;
    return std::min(std::exp(body_log_location(p) + p.shape * rng.normal()), p.tail_cap_s);
}

inline double median_latency(CeLevel ce, const LatencyModel& model) { return model[ce].median_s; }

// ---------------------------------------------------------------------------
// Modem states

enum class ModemState { detached, search_join, send, cdrx, edrx, psm };

enum class ModemEvent { power_on, join_completed, message_sent, cdrx_expired, edrx_rounds_done, tau_fired, wake_interrupt };

inline std::string_view to_string(ModemState s) {
    switch (s) {
    case ModemState::detached: return "detached";
    case ModemState::search_join: return "search_join";
    case ModemState::send: return "send";
    case ModemState::cdrx: return "cdrx";
    case ModemState::edrx: return "edrx";
    case ModemState::psm: return "psm";
    }
    return "?";
}

inline std::string_view to_string(ModemEvent e) {
    switch (e) {
    case ModemEvent::power_on: return "power_on";
    case ModemEvent::join_completed: return "join_completed";
    case ModemEvent::message_sent: return "message_sent";
    case ModemEvent::cdrx_expired: return "cdrx_expired";
    case ModemEvent::edrx_rounds_done: return "edrx_rounds_done";
    case ModemEvent::tau_fired: return "tau_fired";
    case ModemEvent::wake_interrupt: return "wake_interrupt";
    }
    return "?";
}

/// Registration happens once per power cycle; PSM wakes straight into send.
inline ModemState advance_state(ModemState current, ModemEvent event) {
    using S = ModemState;
    using E = ModemEvent;
    switch (current) {
    case S::detached:
        if (event == E::power_on || event == E::wake_interrupt) return S::search_join;
        break;
    case S::search_join:
        if (event == E::join_completed) return S::send;
        break;
    case S::send:
        if (event == E::message_sent) return S::cdrx;
        break;
    case S::cdrx:
        if (event == E::cdrx_expired) return S::edrx;
        if (event == E::wake_interrupt) return S::send;
        break;
    case S::edrx:
        if (event == E::edrx_rounds_done) return S::psm;
        if (event == E::wake_interrupt) return S::send;
        break;
    case S::psm:
        if (event == E::tau_fired || event == E::wake_interrupt) return S::send;
        break;
    }
    throw ProtocolViolation("event " + std::string(to_string(event)) + " not valid in state " +
                            std::string(to_string(current)));
}

/// Checks that a recorded state trace only uses legal transitions and
/// never sends before registering.
inline bool state_trace_valid(const auto& trace) {
    bool joined = false;
    std::optional<ModemState> prev;
    for (ModemState s : trace) {
        if (s == ModemState::search_join) joined = true;
        if (s == ModemState::send && !joined) return false;
        if (prev) {
            bool legal = false;
            for (ModemEvent e : {ModemEvent::power_on, ModemEvent::join_completed, ModemEvent::message_sent,
                                 ModemEvent::cdrx_expired, ModemEvent::edrx_rounds_done, ModemEvent::tau_fired,
                                 ModemEvent::wake_interrupt}) {
                try {
                    if (advance_state(*prev, e) == s) legal = true;
                } catch (const ProtocolViolation&) {
                }
            }
            if (!legal) return false;
        }
        prev = s;
    }
    return true;
}

enum class ReachabilityState { connected_cdrx, edrx, psm };

/// Seconds until the modem can hear a downlink. `elapsed_s` counts from
/// entering the state (eDRX: from the start of a paging window).
inline double downlink_next_opportunity(ReachabilityState state, double elapsed_s, const Config& config) {
    elapsed_s = std::max(elapsed_s, 0.0);
    switch (state) {
    case ReachabilityState::connected_cdrx:
        return 0.0;
    case ReachabilityState::edrx: {
        if (config.edrx_cycle_s <= 0.0) return 0.0;
        const double phase = std::fmod(elapsed_s, config.edrx_cycle_s);
        return phase < config.ptw_s ? 0.0 : config.edrx_cycle_s - phase;
    }
    case ReachabilityState::psm:
        return std::max(0.0, config.psm_tau_s - elapsed_s);
    }
    return 0.0;
}

} // namespace lpwan::nbiot
