#pragma once

// Coverage model: per-technology reachability from path loss, RSRP
// derivation and environment classes for drawing CE levels.

#include "lpwan/errors.hpp"
#include "lpwan/lorawan.hpp"
#include "lpwan/nbiot.hpp"
#include "lpwan/random.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <string>

namespace lpwan::link {

/// LoRa link budget at SF12, 125 kHz, full power.
inline constexpr double kLoraBudgetSf12Db = 156.0;
/// NB-IoT maximum coupling loss.
inline constexpr double kNbiotMclDb = 164.0;
/// Reference such that 164 dB of path loss reads as -141 dBm RSRP.
inline constexpr double kDefaultRsrpReferenceDbm = 23.0;

/// Demodulation SNR floor per SF (SX127x datasheet), indexed SF7..SF12.
inline constexpr std::array<double, 6> kDemodulationFloorDb{-7.5, -10.0, -12.5, -15.0, -17.5, -20.0};

inline double demodulation_floor_db(int spreading_factor) {
    if (spreading_factor < lora::kMinSpreadingFactor || spreading_factor > lora::kMaxSpreadingFactor)
        throw InvalidConfig("spreading factor outside 7..12");
    return kDemodulationFloorDb[static_cast<std::size_t>(spreading_factor - lora::kMinSpreadingFactor)];
}

struct LinkState {
    double path_loss_db = 0.0;
    double rsrp_dbm = kDefaultRsrpReferenceDbm;
    double lora_snr_margin_db = 0.0;

    static LinkState from_path_loss(double path_loss_db, double lora_snr_margin_db = 0.0,
                                    double rsrp_reference_dbm = kDefaultRsrpReferenceDbm) {
        return {path_loss_db, rsrp_reference_dbm - path_loss_db, lora_snr_margin_db};
    }

    static LinkState from_rsrp(double rsrp_dbm, double lora_snr_margin_db = 0.0,
                               double rsrp_reference_dbm = kDefaultRsrpReferenceDbm) {
        return {rsrp_reference_dbm - rsrp_dbm, rsrp_dbm, lora_snr_margin_db};
    }
};

inline double lora_link_budget_db(const lora::RadioConfig& cfg) {
    const double sf_gap = demodulation_floor_db(cfg.spreading_factor) - demodulation_floor_db(12);
    const double power_backoff = lora::kMaxTxPowerDbm - cfg.tx_power_dbm;
    return kLoraBudgetSf12Db - sf_gap - power_backoff;
}

inline bool lora_reachable(const LinkState& link, const lora::RadioConfig& cfg) {
    return link.path_loss_db <= lora_link_budget_db(cfg);
}

inline bool nbiot_reachable(const LinkState& link) { return link.path_loss_db <= kNbiotMclDb; }

inline bool multirat_reachable(const LinkState& link, const lora::RadioConfig& cfg) {
    return lora_reachable(link, cfg) || nbiot_reachable(link);
}

/// Scenario-authoring helper only: log-distance path loss.
inline double log_distance_path_loss_db(double distance_m, double reference_loss_db = 40.0,
                                        double exponent = 3.5, double reference_distance_m = 1.0) {
    return reference_loss_db + 10.0 * exponent * std::log10(std::max(distance_m, reference_distance_m) /
                                                            reference_distance_m);
}

// ---------------------------------------------------------------------------
// Environments

struct EnvironmentClass {
    std::string name;
    std::array<double, 3> ce_probabilities{1.0, 0.0, 0.0};

    static EnvironmentClass outdoor() { return {"outdoor", {0.93, 0.035, 0.035}}; }
    static EnvironmentClass indoor() { return {"indoor", {0.735, 0.1525, 0.1125}}; }
    static EnvironmentClass subterranean() { return {"subterranean", {0.54, 0.27, 0.19}}; }

    bool operator==(const EnvironmentClass&) const = default;
};

inline void validate(const EnvironmentClass& env) {
    double sum = 0.0;
    for (double p : env.ce_probabilities) {
        if (!(p >= 0.0) || !std::isfinite(p)) throw InvalidConfig("CE probabilities must be >= 0");
        sum += p;
    }
    if (std::abs(sum - 1.0) > 1e-9) throw InvalidConfig("CE probabilities must sum to 1");
}

inline EnvironmentClass environment_by_name(const std::string& name) {
    if (name == "outdoor") return EnvironmentClass::outdoor();
    if (name == "indoor") return EnvironmentClass::indoor();
    if (name == "subterranean") return EnvironmentClass::subterranean();
    throw InvalidConfig("unknown environment class '" + name + "'");
}

inline nbiot::CeLevel sample_environment(const EnvironmentClass& env, Rng& rng) {
    const double u = rng.uniform();
    double acc = 0.0;
    for (std::size_t i = 0; i < env.ce_probabilities.size(); ++i) {
        acc += env.ce_probabilities[i];
        if (u < acc) return nbiot::ce_from_index(static_cast<int>(i));
    }
    // Rounding can leave u just above the accumulated sum: use the last level with mass.
    for (std::size_t i = env.ce_probabilities.size(); i-- > 0;)
        if (env.ce_probabilities[i] > 0.0) return nbiot::ce_from_index(static_cast<int>(i));
    return nbiot::CeLevel::ce0;
}

} // namespace lpwan::link
