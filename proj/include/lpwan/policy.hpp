#pragma once

// Per-message radio selection: build one candidate plan per technology,
// mark the ones that break a constraint, keep the cheapest of the rest.

#include "lpwan/link.hpp"
#include "lpwan/lorawan.hpp"
#include "lpwan/nbiot.hpp"
#include "lpwan/profile.hpp"

#include <algorithm>
#include <cstdint>
#include <limits>
#include <optional>
#include <string_view>
#include <vector>

namespace lpwan::policy {

enum class Technology { lorawan, nbiot };
enum class PolicyMode { multirat, lora_only, nbiot_only };
enum class QosClass { best_effort, assured };
enum class Infeasibility { radio_disabled, coverage, payload, deadline, qos };

inline std::string_view to_string(Technology t) { return t == Technology::lorawan ? "lorawan" : "nbiot"; }

inline std::string_view to_string(PolicyMode m) {
    switch (m) {
    case PolicyMode::multirat: return "multirat";
    case PolicyMode::lora_only: return "lora_only";
    case PolicyMode::nbiot_only: return "nbiot_only";
    }
    return "?";
}

inline std::string_view to_string(QosClass q) { return q == QosClass::assured ? "assured" : "best_effort"; }

inline std::string_view to_string(Infeasibility r) {
    switch (r) {
    case Infeasibility::radio_disabled: return "radio_disabled";
    case Infeasibility::coverage: return "coverage";
    case Infeasibility::payload: return "payload";
    case Infeasibility::deadline: return "deadline";
    case Infeasibility::qos: return "qos";
    }
    return "?";
}

struct MessageRequest {
    std::uint64_t id = 0;
    int payload_bytes = 1;
    std::optional<double> deadline_s;
    QosClass qos = QosClass::best_effort;
    double created_at_s = 0.0;
    /// Application-pinned data rate; ADR decides when unset.
    std::optional<int> lora_spreading_factor;
};

inline void validate(const MessageRequest& m) {
    if (m.payload_bytes < 1) throw InvalidConfig("message payload must be >= 1 B");
    if (m.deadline_s && !(*m.deadline_s > 0.0)) throw InvalidConfig("deadline must be positive");
    if (m.lora_spreading_factor) lora::max_app_payload(*m.lora_spreading_factor);
}

struct NodeState {
    lora::DutyCycleLedger ledger;
    nbiot::ModemState modem = nbiot::ModemState::detached;
    link::LinkState link;
    double battery_j = 0.0;
    /// CE level imposed by the network (e.g. drawn from an environment class).
    std::optional<nbiot::CeLevel> ce_override;
};

struct PolicyOptions {
    PolicyMode mode = PolicyMode::multirat;
    /// Conservative mode: compare deadlines against this NB-IoT latency quantile instead of the median.
    std::optional<double> latency_quantile;
};

struct TransmissionPlan {
    Technology technology = Technology::lorawan;
    /// Spreading factor for LoRaWAN, CE level index for NB-IoT.
    int parameter = 0;
    lora::RadioConfig lora_config;
    std::vector<int> fragments;
    double predicted_energy_j = 0.0;
    double predicted_latency_s = 0.0;
    bool confirmed = false;
    bool qos_met = true;
    std::vector<Infeasibility> reasons;

    bool feasible() const { return reasons.empty(); }
};

/// Assured traffic needs NB-IoT or a confirmed LoRa uplink.
inline bool qos_gate(const MessageRequest& msg, const TransmissionPlan& plan) {
    if (msg.qos == QosClass::best_effort) return true;
    return plan.technology == Technology::nbiot || plan.confirmed;
}

/// Extra receive energy and latency of waiting for a LoRa ACK in RX1.
struct AckCost {
    double energy_j = 0.0;
    double latency_s = 0.0;
};

inline AckCost confirmed_ack_cost(const lora::RadioConfig& cfg, const lora::EnergyProfile& profile) {
    const double ack_airtime = lora::time_on_air(cfg, lora::kMacOverheadBytes);
    const double extra_rx = std::max(0.0, ack_airtime - lora::rx1_duration_s(profile, cfg));
    return {profile.p_receive_w * extra_rx, lora::kRx1DelayS + ack_airtime};
}

inline lora::RadioConfig lora_config_for(const MessageRequest& msg, const NodeState& state, const ProfileSet& profiles) {
    lora::RadioConfig cfg = lora::adr_adjust(state.link.lora_snr_margin_db, profiles.lora_radio);
    if (msg.lora_spreading_factor) cfg = lora::with_spreading_factor(cfg, *msg.lora_spreading_factor);
    return cfg;
}

inline nbiot::CeLevel ce_level_for(const NodeState& state, const ProfileSet& profiles) {
    return state.ce_override.value_or(nbiot::select_ce_level(state.link.rsrp_dbm, profiles.nbiot_config));
}

inline TransmissionPlan lora_candidate(const MessageRequest& msg, const NodeState& state, const ProfileSet& profiles,
                                       const PolicyOptions& options) {
    TransmissionPlan plan;
    plan.technology = Technology::lorawan;
    plan.lora_config = lora_config_for(msg, state, profiles);
    plan.parameter = plan.lora_config.spreading_factor;
    plan.fragments = lora::fragment_payload(msg.payload_bytes, plan.parameter);
    plan.confirmed = profiles.lora_confirmed_uplink;

    const lora::Micros now = lora::to_micros(msg.created_at_s);
    const auto schedule = lora::schedule_uplink(plan.fragments, plan.lora_config, state.ledger, now);
    double energy = 0.0;
    for (int f : plan.fragments)
        energy += lora::uplink_energy(plan.lora_config, profiles.lora_energy, f + lora::kMacOverheadBytes);
    double latency = schedule.latency_s;
    if (plan.confirmed) {
        const AckCost ack = confirmed_ack_cost(plan.lora_config, profiles.lora_energy);
        energy += ack.energy_j * static_cast<double>(plan.fragments.size());
        latency += ack.latency_s;
    }
    plan.predicted_energy_j = energy;
    plan.predicted_latency_s = latency;
    plan.qos_met = qos_gate(msg, plan);

    if (options.mode == PolicyMode::nbiot_only) plan.reasons.push_back(Infeasibility::radio_disabled);
    if (!link::lora_reachable(state.link, plan.lora_config)) plan.reasons.push_back(Infeasibility::coverage);
    if (msg.deadline_s && plan.predicted_latency_s > *msg.deadline_s) plan.reasons.push_back(Infeasibility::deadline);
    if (!plan.qos_met) plan.reasons.push_back(Infeasibility::qos);
    return plan;
}

inline TransmissionPlan nbiot_candidate(const MessageRequest& msg, const NodeState& state, const ProfileSet& profiles,
                                        const PolicyOptions& options) {
    TransmissionPlan plan;
    plan.technology = Technology::nbiot;
    const nbiot::CeLevel ce = ce_level_for(state, profiles);
    plan.parameter = nbiot::index(ce);
    plan.fragments = {msg.payload_bytes};

    nbiot::Config steady = profiles.nbiot_config;
    steady.include_join_energy = false;
    const auto& energy = profiles.nbiot_energy;
    const bool payload_ok = msg.payload_bytes <= steady.max_payload_bytes;
    if (payload_ok) {
        plan.predicted_energy_j = nbiot::message_energy(ce, msg.payload_bytes, energy, steady);
        if (state.modem == nbiot::ModemState::psm) plan.predicted_energy_j += energy.wake.energy_j();
    } else {
        plan.predicted_energy_j = std::numeric_limits<double>::infinity();
    }

    double latency = options.latency_quantile
                         ? nbiot::latency_quantile(profiles.nbiot_latency[ce], *options.latency_quantile)
                         : nbiot::median_latency(ce, profiles.nbiot_latency);
    if (state.modem == nbiot::ModemState::psm) latency += energy.wake.duration_s;
    if (state.modem == nbiot::ModemState::detached) latency += nbiot::join_duration_s(ce, energy, steady);
    plan.predicted_latency_s = latency;
    plan.qos_met = qos_gate(msg, plan);

    if (options.mode == PolicyMode::lora_only) plan.reasons.push_back(Infeasibility::radio_disabled);
    if (!link::nbiot_reachable(state.link)) plan.reasons.push_back(Infeasibility::coverage);
    if (!payload_ok) plan.reasons.push_back(Infeasibility::payload);
    if (msg.deadline_s && plan.predicted_latency_s > *msg.deadline_s) plan.reasons.push_back(Infeasibility::deadline);
    if (!plan.qos_met) plan.reasons.push_back(Infeasibility::qos);
    return plan;
}

/// One LoRa plan (ADR-selected SF) and one NB-IoT plan (RSRP-selected CE);
/// infeasible plans stay in the list with their reasons.
inline std::vector<TransmissionPlan> enumerate_candidates(const MessageRequest& msg, const NodeState& state,
                                                          const ProfileSet& profiles,
                                                          const PolicyOptions& options = {}) {
    validate(msg);
    return {lora_candidate(msg, state, profiles, options), nbiot_candidate(msg, state, profiles, options)};
}

struct Selection {
    std::optional<TransmissionPlan> chosen;
    std::vector<TransmissionPlan> candidates;

    explicit operator bool() const { return chosen.has_value(); }
};

/// Strict ordering used for selection: energy, then latency, then LoRaWAN first.
inline bool better_plan(const TransmissionPlan& a, const TransmissionPlan& b) {
    if (a.predicted_energy_j != b.predicted_energy_j) return a.predicted_energy_j < b.predicted_energy_j;
    if (a.predicted_latency_s != b.predicted_latency_s) return a.predicted_latency_s < b.predicted_latency_s;
    return a.technology == Technology::lorawan && b.technology == Technology::nbiot;
}

inline Selection select_plan(std::vector<TransmissionPlan> candidates) {
    Selection s;
    for (const auto& c : candidates) {
        if (!c.feasible()) continue;
        if (!s.chosen || better_plan(c, *s.chosen)) s.chosen = c;
    }
    s.candidates = std::move(candidates);
    return s;
}

} // namespace lpwan::policy
