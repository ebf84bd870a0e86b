#pragma once

// Deterministic discrete-event simulation of one dual-radio node: traffic
// sources feed the policy engine, both radio models account energy and
// latency, and a set of audits is evaluated when the run ends.

#include "lpwan/link.hpp"
#include "lpwan/lorawan.hpp"
#include "lpwan/nbiot.hpp"
#include "lpwan/policy.hpp"
#include "lpwan/profile.hpp"
#include "lpwan/random.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <queue>
#include <string>
#include <tuple>
#include <vector>

namespace lpwan::sim {

inline constexpr double kSecondsPerWeek = 7.0 * 24.0 * 3600.0;
inline constexpr double kWeeksPerYear = 52.18;

using lora::Micros;

enum class TrafficKind { periodic, event };

struct TrafficSource {
    std::string name;
    TrafficKind kind = TrafficKind::periodic;
    double interval_s = 3600.0;
    double offset_s = 0.0;
    /// Event-driven sources emit round(rate * weeks) messages at seeded uniform times.
    double rate_per_week = 0.0;
    int payload_bytes = 1;
    std::optional<double> deadline_s;
    policy::QosClass qos = policy::QosClass::best_effort;
    std::optional<int> lora_spreading_factor;
};

struct Scenario {
    std::string name = "scenario";
    double duration_s = kSecondsPerWeek;
    std::vector<TrafficSource> traffic;
    std::optional<link::EnvironmentClass> environment;
    link::LinkState link;
    ProfileSet profiles;
    double battery_j = 0.0;
    policy::PolicyMode mode = policy::PolicyMode::multirat;
    std::optional<double> latency_quantile;
    std::uint64_t seed = 1;
};

inline double battery_joules(double capacity_mah, double nominal_voltage_v) {
    return capacity_mah * 1e-3 * 3600.0 * nominal_voltage_v;
}

inline void validate(const Scenario& s) {
    if (!(s.duration_s > 0.0) || !std::isfinite(s.duration_s)) throw InvalidConfig("duration must be > 0");
    if (s.traffic.empty()) throw InvalidConfig("scenario needs at least one traffic source");
    if (!(s.battery_j >= 0.0)) throw InvalidConfig("battery energy must be >= 0");
    for (const auto& t : s.traffic) {
        if (t.payload_bytes < 1) throw InvalidConfig("traffic '" + t.name + "': payload must be >= 1 B");
        if (t.kind == TrafficKind::periodic && !(t.interval_s > 0.0))
            throw InvalidConfig("traffic '" + t.name + "': interval must be > 0");
        if (t.kind == TrafficKind::event && !(t.rate_per_week >= 0.0))
            throw InvalidConfig("traffic '" + t.name + "': rate must be >= 0");
        if (t.deadline_s && !(*t.deadline_s > 0.0)) throw InvalidConfig("traffic '" + t.name + "': deadline must be > 0");
        if (t.lora_spreading_factor) lora::max_app_payload(*t.lora_spreading_factor);
    }
    if (s.environment) link::validate(*s.environment);
    validate(s.profiles);
    if (s.latency_quantile && !(*s.latency_quantile > 0.0 && *s.latency_quantile < 1.0))
        throw InvalidConfig("latency quantile must be in (0, 1)");
}

// ---------------------------------------------------------------------------
// Report

struct EnergyByState {
    double lora_transmit_j = 0.0;
    double lora_process_j = 0.0;
    double lora_receive_j = 0.0;
    double lora_sleep_j = 0.0;
    double nbiot_join_j = 0.0;
    double nbiot_wake_j = 0.0;
    double nbiot_transmit_j = 0.0;
    double nbiot_cdrx_j = 0.0;
    double nbiot_edrx_j = 0.0;
    double nbiot_psm_j = 0.0;

    double sum() const {
        return lora_transmit_j + lora_process_j + lora_receive_j + lora_sleep_j + nbiot_join_j + nbiot_wake_j +
               nbiot_transmit_j + nbiot_cdrx_j + nbiot_edrx_j + nbiot_psm_j;
    }
};

struct MessageRecord {
    std::uint64_t id = 0;
    std::string source;
    double created_at_s = 0.0;
    bool delivered = false;
    policy::Technology technology = policy::Technology::lorawan;
    int parameter = 0;
    int fragments = 0;
    int payload_bytes = 0;
    double energy_j = 0.0;
    double latency_s = 0.0;
    double predicted_latency_s = 0.0;
    bool deadline_met = true;
    std::vector<std::pair<policy::Technology, std::vector<policy::Infeasibility>>> rejections;
};

struct LatencyStats {
    std::size_t count = 0;
    double p50_s = 0.0;
    double p90_s = 0.0;
    double p99_s = 0.0;
    double max_s = 0.0;
};

struct Audits {
    bool duty_cycle = true;
    bool state_order = true;
    bool energy_conservation = true;
    bool nbiot_payload = true;
    bool lora_fragments = true;
    bool nbiot_never_delayed = true;

    bool all() const {
        return duty_cycle && state_order && energy_conservation && nbiot_payload && lora_fragments &&
               nbiot_never_delayed;
    }
};

/// One LoRa frame on air, in simulation microseconds.
struct LoraTransmission {
    lora::Micros start_us = 0;
    lora::Micros airtime_us = 0;
};

struct SimReport {
    std::string scenario;
    policy::PolicyMode mode = policy::PolicyMode::multirat;
    std::uint64_t seed = 0;
    double duration_s = 0.0;
    /// Duration plus any tail needed to finish messages created before the end.
    double simulated_span_s = 0.0;

    double total_energy_j = 0.0;
    double transmit_energy_j = 0.0;
    double idle_energy_j = 0.0;
    double message_energy_j = 0.0;
    double weekly_transmit_energy_j = 0.0;
    double weekly_total_energy_j = 0.0;
    double energy_lorawan_j = 0.0;
    double energy_nbiot_j = 0.0;
    EnergyByState by_state;

    std::size_t messages_lorawan = 0;
    std::size_t messages_nbiot = 0;
    std::size_t messages_undelivered = 0;
    std::size_t deadline_misses = 0;

    std::map<std::string, LatencyStats> latency;
    double lora_on_air_s = 0.0;
    /// Airtime over the span from the first frame to the band reopening after the last.
    double duty_cycle_utilisation = 0.0;
    std::vector<LoraTransmission> lora_transmissions;
    double battery_j = 0.0;
    double battery_lifetime_years = 0.0;
    double battery_lifetime_with_idle_years = 0.0;

    std::vector<nbiot::ModemState> modem_trace;
    std::vector<MessageRecord> messages;
    Audits audits;
};

/// Ideal lifetime on transmit energy only. Zero weekly energy gives +inf.
inline double battery_lifetime(double weekly_energy_j, double battery_j) {
    if (battery_j <= 0.0) return 0.0;
    if (weekly_energy_j <= 0.0) return std::numeric_limits<double>::infinity();
    return battery_j / weekly_energy_j / kWeeksPerYear;
}

inline double battery_lifetime(const SimReport& report, double battery_j) {
    return battery_lifetime(report.weekly_transmit_energy_j, battery_j);
}

// ---------------------------------------------------------------------------
// Engine

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline Rng stream(std::uint64_t seed, std::uint64_t id) { return Rng(splitmix64(seed ^ splitmix64(id + 1))); }

struct Arrival {
    Micros at_us;
    std::size_t source;
    std::uint64_t seq;
};

inline std::vector<Arrival> generate_arrivals(const Scenario& s, std::uint64_t seed) {
    std::vector<Arrival> out;
    const Micros end = lora::to_micros(s.duration_s);
    for (std::size_t i = 0; i < s.traffic.size(); ++i) {
        const auto& src = s.traffic[i];
        std::uint64_t seq = 0;
        if (src.kind == TrafficKind::periodic) {
            for (double t = src.offset_s; lora::to_micros(t) < end; t += src.interval_s)
                out.push_back({lora::to_micros(t), i, seq++});
        } else {
            Rng rng = stream(seed, 1000 + i);
            const auto n = static_cast<std::int64_t>(std::llround(src.rate_per_week * s.duration_s / kSecondsPerWeek));
            std::vector<Micros> times;
            for (std::int64_t k = 0; k < n; ++k)
                times.push_back(std::min(end - 1, static_cast<Micros>(rng.uniform() * static_cast<double>(end))));
            std::sort(times.begin(), times.end());
            for (Micros t : times) out.push_back({t, i, seq++});
        }
    }
    std::sort(out.begin(), out.end(), [](const Arrival& a, const Arrival& b) {
        return std::tie(a.at_us, a.source, a.seq) < std::tie(b.at_us, b.source, b.seq);
    });
    return out;
}

/// Union length of activity intervals, accumulated in time order.
class BusyTracker {
  public:
    void add(Micros start, Micros end) {
        if (end <= start) return;
        const Micros from = std::max(start, until_);
        if (end > from) busy_ += end - from;
        until_ = std::max(until_, end);
    }
    Micros busy() const { return busy_; }
    Micros until() const { return until_; }

  private:
    Micros busy_ = 0;
    Micros until_ = std::numeric_limits<Micros>::min();
};

inline LatencyStats summarise(std::vector<double> values) {
    LatencyStats s;
    s.count = values.size();
    if (values.empty()) return s;
    std::sort(values.begin(), values.end());
    auto rank = [&](double q) {
        const auto idx = static_cast<std::size_t>(std::ceil(q * static_cast<double>(values.size()))) - 1;
        return values[std::min(idx, values.size() - 1)];
    };
    s.p50_s = rank(0.50);
    s.p90_s = rank(0.90);
    s.p99_s = rank(0.99);
    s.max_s = values.back();
    return s;
}

} // namespace detail

inline SimReport run(const Scenario& scenario, std::optional<std::uint64_t> seed_override = std::nullopt) {
    validate(scenario);
    using namespace policy;
    const std::uint64_t seed = seed_override.value_or(scenario.seed);
    const ProfileSet& prof = scenario.profiles;
    const auto& nb = prof.nbiot_energy;

    SimReport r;
    r.scenario = scenario.name;
    r.mode = scenario.mode;
    r.seed = seed;
    r.duration_s = scenario.duration_s;
    r.battery_j = scenario.battery_j;

    NodeState node{lora::DutyCycleLedger(prof.lora_duty_fraction), nbiot::ModemState::detached, scenario.link,
                   scenario.battery_j, std::nullopt};
    PolicyOptions options{scenario.mode, scenario.latency_quantile};

    Rng env_rng = detail::stream(seed, 1);
    Rng latency_rng = detail::stream(seed, 2);

    detail::BusyTracker lora_busy;
    detail::BusyTracker nb_busy;
    Micros last_activity = 0;

    // Modem timers: (time, kind, generation). Stale generations are ignored.
    enum class TimerKind { cdrx_expired, edrx_done };
    struct Timer {
        Micros at;
        TimerKind kind;
        std::uint64_t generation;
        bool operator>(const Timer& o) const { return std::tie(at, generation) > std::tie(o.at, o.generation); }
    };
    std::priority_queue<Timer, std::vector<Timer>, std::greater<>> timers;
    std::uint64_t generation = 0;

    auto transition = [&](nbiot::ModemEvent e) {
        node.modem = nbiot::advance_state(node.modem, e);
        r.modem_trace.push_back(node.modem);
    };
    auto fire_timers_until = [&](Micros t) {
        while (!timers.empty() && timers.top().at <= t) {
            const Timer tm = timers.top();
            timers.pop();
            if (tm.generation != generation) continue;
            transition(tm.kind == TimerKind::cdrx_expired ? nbiot::ModemEvent::cdrx_expired
                                                          : nbiot::ModemEvent::edrx_rounds_done);
        }
    };

    std::map<std::string, std::vector<double>> latencies;
    std::uint64_t next_id = 1;

    for (const auto& arrival : detail::generate_arrivals(scenario, seed)) {
        const auto& src = scenario.traffic[arrival.source];
        fire_timers_until(arrival.at_us);

        MessageRequest msg{next_id++, src.payload_bytes, src.deadline_s, src.qos, lora::to_seconds(arrival.at_us),
                           src.lora_spreading_factor};
        node.ce_override.reset();
        if (scenario.environment) node.ce_override = link::sample_environment(*scenario.environment, env_rng);

        auto selection = select_plan(enumerate_candidates(msg, node, prof, options));
        MessageRecord rec;
        rec.id = msg.id;
        rec.source = src.name;
        rec.created_at_s = msg.created_at_s;
        rec.payload_bytes = msg.payload_bytes;
        for (const auto& c : selection.candidates)
            if (!c.feasible()) rec.rejections.emplace_back(c.technology, c.reasons);

        if (!selection) {
            ++r.messages_undelivered;
            r.messages.push_back(std::move(rec));
            continue;
        }
        const TransmissionPlan& plan = *selection.chosen;
        rec.delivered = true;
        rec.technology = plan.technology;
        rec.parameter = plan.parameter;
        rec.fragments = static_cast<int>(plan.fragments.size());
        rec.predicted_latency_s = plan.predicted_latency_s;

        if (plan.technology == Technology::lorawan) {
            const auto schedule = lora::schedule_uplink(plan.fragments, plan.lora_config, node.ledger, arrival.at_us);
            node.ledger = schedule.ledger;
            double energy = 0.0;
            for (std::size_t i = 0; i < plan.fragments.size(); ++i) {
                const int frame = plan.fragments[i] + lora::kMacOverheadBytes;
                if (plan.fragments[i] > lora::max_app_payload(plan.parameter)) r.audits.lora_fragments = false;
                const auto e = lora::uplink_energy_breakdown(plan.lora_config, prof.lora_energy, frame);
                r.by_state.lora_transmit_j += e.transmit_j;
                r.by_state.lora_process_j += e.process_j;
                r.by_state.lora_receive_j += e.receive_j;
                energy += e.total_j();
                const Micros end = schedule.start_us[i] + lora::to_micros(e.active_s);
                lora_busy.add(schedule.start_us[i], end);
                r.lora_transmissions.push_back({schedule.start_us[i], schedule.airtime_us[i]});
                last_activity = std::max(last_activity, end);
            }
            double latency = schedule.latency_s;
            if (plan.confirmed) {
                const auto ack = confirmed_ack_cost(plan.lora_config, prof.lora_energy);
                const double extra = ack.energy_j * static_cast<double>(plan.fragments.size());
                r.by_state.lora_receive_j += extra;
                energy += extra;
                latency += ack.latency_s;
            }
            rec.energy_j = energy;
            rec.latency_s = latency;
            r.energy_lorawan_j += energy;
            ++r.messages_lorawan;
        } else {
            const auto ce = nbiot::ce_from_index(plan.parameter);
            if (msg.payload_bytes > nbiot::kMaxPayloadBytes) r.audits.nbiot_payload = false;
            Micros t = arrival.at_us;
            double setup_s = 0.0;
            if (node.modem == nbiot::ModemState::detached) {
                transition(nbiot::ModemEvent::power_on);
                const double join_s = nbiot::join_duration_s(ce, nb, prof.nbiot_config);
                const double join_j = nb.search_join.power_w * join_s;
                r.by_state.nbiot_join_j += join_j;
                r.energy_nbiot_j += join_j;
                setup_s += join_s;
                transition(nbiot::ModemEvent::join_completed);
            } else {
                double wake_j = 0.0;
                if (node.modem == nbiot::ModemState::psm) {
                    wake_j = nb.wake.energy_j();
                    setup_s += nb.wake.duration_s;
                }
                r.by_state.nbiot_wake_j += wake_j;
                rec.energy_j += wake_j;
                transition(nbiot::ModemEvent::wake_interrupt);
            }
            nbiot::Config steady = prof.nbiot_config;
            steady.include_join_energy = false;
            const auto e = nbiot::message_energy_breakdown(ce, msg.payload_bytes, nb, steady);
            r.by_state.nbiot_transmit_j += e.transmit_j;
            r.by_state.nbiot_cdrx_j += e.cdrx_j;
            r.by_state.nbiot_edrx_j += e.edrx_j;
            rec.energy_j += e.total_j();
            r.energy_nbiot_j += rec.energy_j;

            const Micros send_end = t + lora::to_micros(setup_s + e.transmit_s);
            transition(nbiot::ModemEvent::message_sent);
            ++generation;
            const Micros cdrx_end = send_end + lora::to_micros(nb.cdrx.duration_s);
            const Micros edrx_end = cdrx_end + lora::to_micros(nb.edrx.duration_s);
            timers.push({cdrx_end, TimerKind::cdrx_expired, generation});
            timers.push({edrx_end, TimerKind::edrx_done, generation});
            nb_busy.add(t, edrx_end);
            last_activity = std::max(last_activity, edrx_end);

            // Any wait before the send is modem setup, never a duty-cycle hold-off.
            if (t != arrival.at_us) r.audits.nbiot_never_delayed = false;
            rec.latency_s = setup_s + nbiot::uplink_latency_sample(ce, prof.nbiot_latency, latency_rng);
            ++r.messages_nbiot;
        }
        r.message_energy_j += rec.energy_j;
        if (msg.deadline_s && rec.latency_s > *msg.deadline_s) {
            rec.deadline_met = false;
            ++r.deadline_misses;
        }
        latencies[src.name].push_back(rec.latency_s);
        r.messages.push_back(std::move(rec));
    }
    fire_timers_until(std::numeric_limits<Micros>::max());

    const Micros duration_us = lora::to_micros(scenario.duration_s);
    const Micros span_us = std::max(duration_us, last_activity);
    r.simulated_span_s = lora::to_seconds(span_us);

    const bool has_lora = scenario.mode != PolicyMode::nbiot_only;
    const bool has_nb = scenario.mode != PolicyMode::lora_only;
    if (has_lora)
        r.by_state.lora_sleep_j = prof.lora_energy.p_sleep_w * lora::to_seconds(span_us - lora_busy.busy());
    if (has_nb) r.by_state.nbiot_psm_j = nb.psm.power_w * lora::to_seconds(span_us - nb_busy.busy());

    r.idle_energy_j = r.by_state.lora_sleep_j + r.by_state.nbiot_psm_j;
    r.transmit_energy_j = r.message_energy_j + r.by_state.nbiot_join_j;
    r.total_energy_j = r.transmit_energy_j + r.idle_energy_j;

    const double weeks = scenario.duration_s / kSecondsPerWeek;
    r.weekly_transmit_energy_j = r.transmit_energy_j / weeks;
    r.weekly_total_energy_j = r.total_energy_j / weeks;
    r.battery_lifetime_years = battery_lifetime(r.weekly_transmit_energy_j, scenario.battery_j);
    r.battery_lifetime_with_idle_years = battery_lifetime(r.weekly_total_energy_j, scenario.battery_j);

    for (auto& [name, values] : latencies) r.latency[name] = detail::summarise(std::move(values));

    r.lora_on_air_s = lora::to_seconds(node.ledger.on_air_us());
    r.duty_cycle_utilisation = node.ledger.utilisation();
    r.audits.duty_cycle = node.ledger.audit_ok() && r.duty_cycle_utilisation <= prof.lora_duty_fraction;
    r.audits.state_order = nbiot::state_trace_valid(r.modem_trace);

    double per_message = 0.0;
    for (const auto& m : r.messages) per_message += m.energy_j;
    const double by_state = r.by_state.sum();
    const double tol = 1e-9 * std::max(1.0, r.total_energy_j);
    r.audits.energy_conservation = std::abs(per_message - r.message_energy_j) <= tol &&
                                   std::abs(by_state - r.total_energy_j) <= tol &&
                                   std::abs(r.energy_lorawan_j + r.energy_nbiot_j - r.transmit_energy_j) <= tol;
    return r;
}

// ---------------------------------------------------------------------------
// Energy-per-byte sweep

struct SweepRow {
    int payload_bytes = 0;
    std::array<double, 6> lora_per_byte_j{};  // SF7..SF12
    std::array<double, 3> nbiot_per_byte_j{}; // CE0..CE2, NaN above the NB-IoT cap
};

inline double lora_energy_per_byte(const ProfileSet& p, int spreading_factor, int payload_bytes) {
    const auto cfg = lora::with_spreading_factor(p.lora_radio, spreading_factor);
    return lora::payload_energy(cfg, p.lora_energy, payload_bytes) / payload_bytes;
}

inline SweepRow sweep_row(const ProfileSet& p, int payload_bytes) {
    SweepRow row;
    row.payload_bytes = payload_bytes;
    for (int sf = lora::kMinSpreadingFactor; sf <= lora::kMaxSpreadingFactor; ++sf)
        row.lora_per_byte_j[static_cast<std::size_t>(sf - lora::kMinSpreadingFactor)] =
            lora_energy_per_byte(p, sf, payload_bytes);
    for (auto ce : nbiot::kAllCeLevels)
        row.nbiot_per_byte_j[static_cast<std::size_t>(nbiot::index(ce))] =
            payload_bytes <= p.nbiot_config.max_payload_bytes
                ? nbiot::energy_per_byte(ce, payload_bytes, p.nbiot_energy, p.nbiot_config)
                : std::numeric_limits<double>::quiet_NaN();
    return row;
}

inline std::vector<SweepRow> sweep_energy_per_byte(int min_bytes, int max_bytes, int step, const ProfileSet& p) {
    if (min_bytes < 1 || max_bytes < min_bytes || step < 1) throw InvalidConfig("sweep needs 1 <= min <= max, step >= 1");
    std::vector<SweepRow> rows;
    for (int n = min_bytes; n <= max_bytes; n += step) rows.push_back(sweep_row(p, n));
    return rows;
}

/// Smallest payload from which NB-IoT at `ce` stays at or below LoRa at `sf`
/// in energy per byte for every larger payload up to the NB-IoT cap.
inline std::optional<int> crossover_payload(const ProfileSet& p, int spreading_factor = 12,
                                            nbiot::CeLevel ce = nbiot::CeLevel::ce2) {
    const auto cfg = lora::with_spreading_factor(p.lora_radio, spreading_factor);
    std::optional<int> crossing;
    for (int n = p.nbiot_config.max_payload_bytes; n >= 1; --n) {
        const double nb = nbiot::message_energy(ce, n, p.nbiot_energy, p.nbiot_config);
        const double lo = lora::payload_energy(cfg, p.lora_energy, n);
        if (nb <= lo)
            crossing = n;
        else
            break;
    }
    return crossing;
}

} // namespace lpwan::sim
