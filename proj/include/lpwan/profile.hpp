#pragma once

#include "lpwan/link.hpp"
#include "lpwan/lorawan.hpp"
#include "lpwan/nbiot.hpp"

namespace lpwan {

inline constexpr int kProfileSchemaVersion = 1;

/// Everything the models need about one dual-radio device.
struct ProfileSet {
    lora::RadioConfig lora_radio;
    lora::EnergyProfile lora_energy;
    double lora_duty_fraction = 0.01;
    /// Confirmed uplinks make LoRa eligible for assured-QoS traffic.
    bool lora_confirmed_uplink = false;
    nbiot::Config nbiot_config;
    nbiot::EnergyProfile nbiot_energy;
    nbiot::LatencyModel nbiot_latency;
    double rsrp_reference_dbm = link::kDefaultRsrpReferenceDbm;

    bool operator==(const ProfileSet&) const = default;
};

inline void validate(const ProfileSet& p) {
    lora::validate(p.lora_radio);
    lora::validate(p.lora_energy);
    if (!(p.lora_duty_fraction > 0.0 && p.lora_duty_fraction <= 1.0))
        throw InvalidConfig("duty fraction must be in (0, 1]");
    nbiot::validate(p.nbiot_config);
    nbiot::validate(p.nbiot_energy);
    nbiot::validate(p.nbiot_latency);
}

/// Multiplies every power constant of both radios by `factor`; durations untouched.
inline ProfileSet scale_powers(ProfileSet p, double factor) {
    auto& l = p.lora_energy;
    l.p_transmit_w *= factor;
    l.p_process_w *= factor;
    l.p_receive_w *= factor;
    l.p_sleep_w *= factor;
    auto& n = p.nbiot_energy;
    for (nbiot::StateCost* s : {&n.search_join, &n.transmit, &n.cdrx, &n.edrx, &n.psm, &n.wake}) s->power_w *= factor;
    return p;
}

} // namespace lpwan
