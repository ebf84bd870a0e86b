#pragma once

// JSON profile/scenario files, report emission and CSV helpers.
// Parsing is strict: unknown keys and wrong types are rejected with the
// dotted path of the offending field.

#include "lpwan/errors.hpp"
#include "lpwan/policy.hpp"
#include "lpwan/profile.hpp"
#include "lpwan/simulator.hpp"

#include <json.hpp>

#include <charconv>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <system_error>

namespace lpwan::io {

using nlohmann::json;
using nlohmann::ordered_json;

inline constexpr const char* kProfileEnvVar = "LPWAN_PROFILE";

// ---------------------------------------------------------------------------
// Strict reader

namespace detail {

inline void read_value(const json& j, const std::string& path, double& out) {
    if (!j.is_number()) throw SchemaError(path, "expected a number");
    out = j.get<double>();
    if (!std::isfinite(out)) throw SchemaError(path, "expected a finite number");
}

inline void read_value(const json& j, const std::string& path, int& out) {
    if (!j.is_number_integer()) throw SchemaError(path, "expected an integer");
    const auto v = j.get<std::int64_t>();
    if (v < std::numeric_limits<int>::min() || v > std::numeric_limits<int>::max())
        throw SchemaError(path, "integer out of range");
    out = static_cast<int>(v);
}

inline void read_value(const json& j, const std::string& path, std::uint64_t& out) {
    if (!j.is_number_unsigned()) throw SchemaError(path, "expected a non-negative integer");
    out = j.get<std::uint64_t>();
}

inline void read_value(const json& j, const std::string& path, bool& out) {
    if (!j.is_boolean()) throw SchemaError(path, "expected true or false");
    out = j.get<bool>();
}

inline void read_value(const json& j, const std::string& path, std::string& out) {
    if (!j.is_string()) throw SchemaError(path, "expected a string");
    out = j.get<std::string>();
}

template <typename T>
void read_value(const json& j, const std::string& path, std::optional<T>& out) {
    if (j.is_null()) {
        out.reset();
        return;
    }
    T v{};
    read_value(j, path, v);
    out = v;
}

template <typename T, std::size_t N>
void read_value(const json& j, const std::string& path, std::array<T, N>& out) {
    if (!j.is_array() || j.size() != N) throw SchemaError(path, "expected an array of " + std::to_string(N));
    for (std::size_t i = 0; i < N; ++i) read_value(j[i], path + "[" + std::to_string(i) + "]", out[i]);
}

class ObjectReader {
  public:
    ObjectReader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) throw SchemaError(path_.empty() ? "<root>" : path_, "expected an object");
    }

    std::string path_of(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

    bool has(const std::string& key) const { return j_.contains(key); }

    const json& raw(const std::string& key) {
        seen_.insert(key);
        return j_.at(key);
    }

    template <typename T>
    void optional(const std::string& key, T& out) {
        if (!has(key)) return;
        read_value(raw(key), path_of(key), out);
    }

    template <typename T>
    void required(const std::string& key, T& out) {
        if (!has(key)) throw SchemaError(path_of(key), "missing required field");
        read_value(raw(key), path_of(key), out);
    }

    std::optional<ObjectReader> child(const std::string& key) {
        if (!has(key)) return std::nullopt;
        return ObjectReader(raw(key), path_of(key));
    }

    /// Call once every known key has been read.
    void finish() const {
        for (const auto& item : j_.items())
            if (!seen_.count(item.key())) throw SchemaError(path_of(item.key()), "unknown field");
    }

  private:
    const json& j_;
    std::string path_;
    std::set<std::string> seen_;
};

inline void read_state_cost(ObjectReader& parent, const std::string& key, nbiot::StateCost& out) {
    auto r = parent.child(key);
    if (!r) return;
    r->optional("power_w", out.power_w);
    r->optional("duration_s", out.duration_s);
    r->finish();
}

inline void check_schema_version(ObjectReader& r) {
    int version = 0;
    r.required("schema_version", version);
    if (version != kProfileSchemaVersion)
        throw SchemaError(r.path_of("schema_version"),
                          "unsupported version " + std::to_string(version) + " (expected " +
                              std::to_string(kProfileSchemaVersion) + ")");
}

template <typename F>
auto wrap_validation(const std::string& path, F&& f) {
    try {
        return f();
    } catch (const SchemaError&) {
        throw;
    } catch (const Error& e) {
        throw SchemaError(path, e.what());
    }
}

inline json parse_text(const std::string& text, const std::string& origin) {
    try {
        return json::parse(text);
    } catch (const json::parse_error& e) {
        throw SchemaError(origin, std::string("malformed JSON: ") + e.what());
    }
}

} // namespace detail

inline std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InvalidConfig("cannot open '" + path.string() + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void write_file(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InvalidConfig("cannot write '" + path.string() + "'");
    out << text;
}

// ---------------------------------------------------------------------------
// Profiles

inline ProfileSet profile_from_json(const json& j) {
    using detail::ObjectReader;
    ProfileSet p;
    ObjectReader root(j, "");
    detail::check_schema_version(root);

    if (auto lw = root.child("lorawan")) {
        if (auto r = lw->child("radio")) {
            auto& c = p.lora_radio;
            r->optional("spreading_factor", c.spreading_factor);
            r->optional("bandwidth_hz", c.bandwidth_hz);
            r->optional("coding_rate", c.coding_rate);
            r->optional("preamble_symbols", c.preamble_symbols);
            r->optional("explicit_header", c.explicit_header);
            r->optional("crc_enabled", c.crc_enabled);
            r->optional("low_datarate_optimize", c.low_datarate_optimize);
            r->optional("tx_power_dbm", c.tx_power_dbm);
            r->finish();
        }
        if (auto r = lw->child("energy")) {
            auto& e = p.lora_energy;
            r->optional("p_transmit_w", e.p_transmit_w);
            r->optional("p_process_w", e.p_process_w);
            r->optional("p_receive_w", e.p_receive_w);
            r->optional("t_process1_s", e.t_process1_s);
            r->optional("t_process2_s", e.t_process2_s);
            r->optional("t_rx1_s", e.t_rx1_s);
            r->optional("t_rx2_s", e.t_rx2_s);
            r->optional("rx_window_symbols", e.rx_window_symbols);
            r->optional("p_sleep_w", e.p_sleep_w);
            r->finish();
        }
        lw->optional("duty_fraction", p.lora_duty_fraction);
        lw->optional("confirmed_uplink", p.lora_confirmed_uplink);
        lw->finish();
    }

    if (auto nb = root.child("nbiot")) {
        if (auto r = nb->child("config")) {
            auto& c = p.nbiot_config;
            r->optional("rsrp_threshold_01_dbm", c.rsrp_threshold_01_dbm);
            r->optional("rsrp_threshold_12_dbm", c.rsrp_threshold_12_dbm);
            r->optional("tx_power_dbm", c.tx_power_dbm);
            r->optional("max_payload_bytes", c.max_payload_bytes);
            r->optional("repetitions", c.repetitions);
            r->optional("t_cdrx_s", c.t_cdrx_s);
            r->optional("edrx_cycle_s", c.edrx_cycle_s);
            r->optional("ptw_s", c.ptw_s);
            r->optional("psm_tau_s", c.psm_tau_s);
            r->optional("include_join_energy", c.include_join_energy);
            r->finish();
        }
        if (auto r = nb->child("energy")) {
            auto& e = p.nbiot_energy;
            detail::read_state_cost(*r, "search_join", e.search_join);
            detail::read_state_cost(*r, "transmit", e.transmit);
            r->optional("transmit_per_byte_s", e.transmit_per_byte_s);
            detail::read_state_cost(*r, "cdrx", e.cdrx);
            detail::read_state_cost(*r, "edrx", e.edrx);
            detail::read_state_cost(*r, "psm", e.psm);
            detail::read_state_cost(*r, "wake", e.wake);
            r->finish();
        }
        if (auto r = nb->child("latency")) {
            for (auto ce : nbiot::kAllCeLevels) {
                auto l = r->child(std::string(nbiot::to_string(ce)));
                if (!l) continue;
                auto& lp = p.nbiot_latency[ce];
                l->optional("median_s", lp.median_s);
                l->optional("shape", lp.shape);
                l->optional("tail_probability", lp.tail_probability);
                l->optional("tail_min_s", lp.tail_min_s);
                l->optional("tail_cap_s", lp.tail_cap_s);
                l->finish();
            }
            r->finish();
        }
        nb->finish();
    }
    root.optional("rsrp_reference_dbm", p.rsrp_reference_dbm);
    root.finish();

    detail::wrap_validation("", [&] { validate(p); });
    return p;
}

inline ordered_json profile_to_json(const ProfileSet& p) {
    auto cost = [](const nbiot::StateCost& s) { return ordered_json{{"power_w", s.power_w}, {"duration_s", s.duration_s}}; };
    auto opt = [](const std::optional<double>& v) { return v ? ordered_json(*v) : ordered_json(nullptr); };

    ordered_json j;
    j["schema_version"] = kProfileSchemaVersion;
    const auto& r = p.lora_radio;
    const auto& le = p.lora_energy;
    j["lorawan"] = {
        {"radio",
         {{"spreading_factor", r.spreading_factor},
          {"bandwidth_hz", r.bandwidth_hz},
          {"coding_rate", r.coding_rate},
          {"preamble_symbols", r.preamble_symbols},
          {"explicit_header", r.explicit_header},
          {"crc_enabled", r.crc_enabled},
          {"low_datarate_optimize", r.low_datarate_optimize},
          {"tx_power_dbm", r.tx_power_dbm}}},
        {"energy",
         {{"p_transmit_w", le.p_transmit_w},
          {"p_process_w", le.p_process_w},
          {"p_receive_w", le.p_receive_w},
          {"t_process1_s", le.t_process1_s},
          {"t_process2_s", le.t_process2_s},
          {"t_rx1_s", opt(le.t_rx1_s)},
          {"t_rx2_s", opt(le.t_rx2_s)},
          {"rx_window_symbols", le.rx_window_symbols},
          {"p_sleep_w", le.p_sleep_w}}},
        {"duty_fraction", p.lora_duty_fraction},
        {"confirmed_uplink", p.lora_confirmed_uplink},
    };
    const auto& c = p.nbiot_config;
    const auto& ne = p.nbiot_energy;
    ordered_json latency;
    for (auto ce : nbiot::kAllCeLevels) {
        const auto& lp = p.nbiot_latency[ce];
        latency[std::string(nbiot::to_string(ce))] = {{"median_s", lp.median_s},
                                                      {"shape", lp.shape},
                                                      {"tail_probability", lp.tail_probability},
                                                      {"tail_min_s", lp.tail_min_s},
                                                      {"tail_cap_s", lp.tail_cap_s}};
    }
    j["nbiot"] = {
        {"config",
         {{"rsrp_threshold_01_dbm", c.rsrp_threshold_01_dbm},
          {"rsrp_threshold_12_dbm", c.rsrp_threshold_12_dbm},
          {"tx_power_dbm", c.tx_power_dbm},
          {"max_payload_bytes", c.max_payload_bytes},
          {"repetitions", c.repetitions},
          {"t_cdrx_s", c.t_cdrx_s},
          {"edrx_cycle_s", c.edrx_cycle_s},
          {"ptw_s", c.ptw_s},
          {"psm_tau_s", c.psm_tau_s},
          {"include_join_energy", c.include_join_energy}}},
        {"energy",
         {{"search_join", cost(ne.search_join)},
          {"transmit", cost(ne.transmit)},
          {"transmit_per_byte_s", ne.transmit_per_byte_s},
          {"cdrx", cost(ne.cdrx)},
          {"edrx", cost(ne.edrx)},
          {"psm", cost(ne.psm)},
          {"wake", cost(ne.wake)}}},
        {"latency", latency},
    };
    j["rsrp_reference_dbm"] = p.rsrp_reference_dbm;
    return j;
}

inline ProfileSet parse_profile(const std::string& text, const std::string& origin = "<profile>") {
    return profile_from_json(detail::parse_text(text, origin));
}

inline ProfileSet load_profile(const std::filesystem::path& path) { return parse_profile(read_file(path), path.string()); }

inline std::string dump_profile(const ProfileSet& p) { return profile_to_json(p).dump(2) + "\n"; }

/// Explicit path, else $LPWAN_PROFILE, else `fallback`.
inline std::filesystem::path resolve_profile_path(const std::string& explicit_path, const std::filesystem::path& fallback) {
    if (!explicit_path.empty()) return explicit_path;
    if (const char* env = std::getenv(kProfileEnvVar); env && *env) return env;
    return fallback;
}

// ---------------------------------------------------------------------------
// Scenarios

inline policy::PolicyMode parse_mode(const std::string& s, const std::string& path = "mode") {
    if (s == "multirat") return policy::PolicyMode::multirat;
    if (s == "lora_only") return policy::PolicyMode::lora_only;
    if (s == "nbiot_only") return policy::PolicyMode::nbiot_only;
    throw SchemaError(path, "unknown policy mode '" + s + "'");
}

inline policy::QosClass parse_qos(const std::string& s, const std::string& path = "qos") {
    if (s == "best_effort") return policy::QosClass::best_effort;
    if (s == "assured") return policy::QosClass::assured;
    throw SchemaError(path, "unknown qos class '" + s + "'");
}

/// `base_dir` resolves a relative "profile" path; `fallback` is used when the scenario names none.
inline sim::Scenario scenario_from_json(const json& j, const ProfileSet& fallback,
                                        const std::filesystem::path& base_dir = ".") {
    using detail::ObjectReader;
    sim::Scenario s;
    ObjectReader root(j, "");
    detail::check_schema_version(root);
    root.optional("name", s.name);
    root.required("duration_s", s.duration_s);
    root.optional("seed", s.seed);

    std::string mode = "multirat";
    root.optional("mode", mode);
    s.mode = parse_mode(mode, root.path_of("mode"));
    root.optional("latency_quantile", s.latency_quantile);

    s.profiles = fallback;
    if (root.has("profile")) {
        const json& pj = root.raw("profile");
        if (pj.is_string()) {
            const std::filesystem::path rel = pj.get<std::string>();
            s.profiles = load_profile(rel.is_absolute() ? rel : base_dir / rel);
        } else if (pj.is_object()) {
            try {
                s.profiles = profile_from_json(pj);
            } catch (const SchemaError& e) {
                throw SchemaError(e.path.empty() ? "profile" : "profile." + e.path, e.what());
            }
        } else {
            throw SchemaError("profile", "expected a file path or an inline profile object");
        }
    }

    if (auto b = root.child("battery")) {
        double mah = 0.0, volts = 0.0;
        b->required("capacity_mah", mah);
        b->required("voltage_v", volts);
        b->finish();
        s.battery_j = sim::battery_joules(mah, volts);
    }
    if (root.has("battery_j")) {
        if (root.has("battery")) throw SchemaError("battery_j", "give either battery or battery_j, not both");
        root.optional("battery_j", s.battery_j);
    }

    if (root.has("environment")) {
        const json& ej = root.raw("environment");
        if (ej.is_string()) {
            s.environment = detail::wrap_validation("environment", [&] { return link::environment_by_name(ej.get<std::string>()); });
        } else {
            ObjectReader er(ej, "environment");
            link::EnvironmentClass env;
            er.required("name", env.name);
            er.required("ce_probabilities", env.ce_probabilities);
            er.finish();
            detail::wrap_validation("environment.ce_probabilities", [&] { link::validate(env); });
            s.environment = env;
        }
    }

    if (auto l = root.child("link")) {
        std::optional<double> path_loss, rsrp;
        double margin = 0.0;
        l->optional("path_loss_db", path_loss);
        l->optional("rsrp_dbm", rsrp);
        l->optional("lora_snr_margin_db", margin);
        l->finish();
        if (path_loss.has_value() == rsrp.has_value())
            throw SchemaError(l->path_of("path_loss_db"), "give exactly one of path_loss_db or rsrp_dbm");
        s.link = path_loss ? link::LinkState::from_path_loss(*path_loss, margin, s.profiles.rsrp_reference_dbm)
                           : link::LinkState::from_rsrp(*rsrp, margin, s.profiles.rsrp_reference_dbm);
    } else {
        throw SchemaError("link", "missing required field");
    }

    if (!root.has("traffic")) throw SchemaError("traffic", "missing required field");
    const json& tj = root.raw("traffic");
    if (!tj.is_array()) throw SchemaError("traffic", "expected an array");
    for (std::size_t i = 0; i < tj.size(); ++i) {
        ObjectReader tr(tj[i], "traffic[" + std::to_string(i) + "]");
        sim::TrafficSource t;
        t.name = "source" + std::to_string(i);
        tr.optional("name", t.name);
        std::string kind;
        tr.required("kind", kind);
        if (kind == "periodic") {
            t.kind = sim::TrafficKind::periodic;
            tr.required("interval_s", t.interval_s);
            tr.optional("offset_s", t.offset_s);
        } else if (kind == "event") {
            t.kind = sim::TrafficKind::event;
            tr.required("rate_per_week", t.rate_per_week);
        } else {
            throw SchemaError(tr.path_of("kind"), "expected 'periodic' or 'event'");
        }
        tr.required("payload_bytes", t.payload_bytes);
        tr.optional("deadline_s", t.deadline_s);
        std::string qos = "best_effort";
        tr.optional("qos", qos);
        t.qos = parse_qos(qos, tr.path_of("qos"));
        tr.optional("lora_spreading_factor", t.lora_spreading_factor);
        tr.finish();
        s.traffic.push_back(std::move(t));
    }
    root.finish();

    detail::wrap_validation("", [&] { sim::validate(s); });
    return s;
}

inline sim::Scenario load_scenario(const std::filesystem::path& path, const ProfileSet& fallback) {
    const json j = detail::parse_text(read_file(path), path.string());
    return scenario_from_json(j, fallback, path.parent_path());
}

// ---------------------------------------------------------------------------
// Output

/// Shortest round-trip decimal, independent of the global locale.
inline std::string format_number(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

inline ordered_json finite_or_null(double v) { return std::isfinite(v) ? ordered_json(v) : ordered_json(nullptr); }

inline ordered_json report_to_json(const sim::SimReport& r) {
    ordered_json j;
    j["scenario"] = r.scenario;
    j["mode"] = std::string(policy::to_string(r.mode));
    j["seed"] = r.seed;
    j["duration_s"] = r.duration_s;
    j["simulated_span_s"] = r.simulated_span_s;
    j["energy"] = {
        {"total_j", r.total_energy_j},
        {"transmit_j", r.transmit_energy_j},
        {"idle_j", r.idle_energy_j},
        {"messages_j", r.message_energy_j},
        {"weekly_transmit_j", r.weekly_transmit_energy_j},
        {"weekly_total_j", r.weekly_total_energy_j},
        {"by_technology", {{"lorawan_j", r.energy_lorawan_j}, {"nbiot_j", r.energy_nbiot_j}}},
        {"by_state",
         {{"lorawan_transmit_j", r.by_state.lora_transmit_j},
          {"lorawan_process_j", r.by_state.lora_process_j},
          {"lorawan_receive_j", r.by_state.lora_receive_j},
          {"lorawan_sleep_j", r.by_state.lora_sleep_j},
          {"nbiot_search_join_j", r.by_state.nbiot_join_j},
          {"nbiot_wake_j", r.by_state.nbiot_wake_j},
          {"nbiot_send_j", r.by_state.nbiot_transmit_j},
          {"nbiot_cdrx_j", r.by_state.nbiot_cdrx_j},
          {"nbiot_edrx_j", r.by_state.nbiot_edrx_j},
          {"nbiot_psm_j", r.by_state.nbiot_psm_j}}},
    };
    j["messages"] = {{"lorawan", r.messages_lorawan},
                     {"nbiot", r.messages_nbiot},
                     {"undelivered", r.messages_undelivered},
                     {"deadline_misses", r.deadline_misses}};
    ordered_json lat = ordered_json::object();
    for (const auto& [name, s] : r.latency)
        lat[name] = {{"count", s.count}, {"p50_s", s.p50_s}, {"p90_s", s.p90_s}, {"p99_s", s.p99_s}, {"max_s", s.max_s}};
    j["latency"] = lat;
    j["duty_cycle"] = {{"lorawan_on_air_s", r.lora_on_air_s}, {"utilisation", r.duty_cycle_utilisation}};
    j["battery"] = {{"battery_j", r.battery_j},
                    {"lifetime_years", finite_or_null(r.battery_lifetime_years)},
                    {"lifetime_with_idle_years", finite_or_null(r.battery_lifetime_with_idle_years)}};

    ordered_json undelivered = ordered_json::array();
    for (const auto& m : r.messages) {
        if (m.delivered) continue;
        ordered_json reasons = ordered_json::object();
        for (const auto& [tech, why] : m.rejections) {
            ordered_json list = ordered_json::array();
            for (auto w : why) list.push_back(std::string(policy::to_string(w)));
            reasons[std::string(policy::to_string(tech))] = list;
        }
        undelivered.push_back({{"message_id", m.id}, {"source", m.source}, {"t_s", m.created_at_s}, {"reasons", reasons}});
    }
    j["undelivered"] = undelivered;
    j["audits"] = {{"duty_cycle", r.audits.duty_cycle},
                   {"state_order", r.audits.state_order},
                   {"energy_conservation", r.audits.energy_conservation},
                   {"nbiot_payload", r.audits.nbiot_payload},
                   {"lorawan_fragments", r.audits.lora_fragments},
                   {"nbiot_never_delayed", r.audits.nbiot_never_delayed}};
    return j;
}

inline std::string dump_report(const sim::SimReport& r) { return report_to_json(r).dump(2) + "\n"; }

inline std::string trace_csv(const sim::SimReport& r) {
    std::string out = "message_id,t_s,technology,parameter,fragments,energy_j,latency_s,delivered\n";
    for (const auto& m : r.messages) {
        out += std::to_string(m.id) + ',' + format_number(m.created_at_s) + ',';
        if (m.delivered) {
            out += std::string(policy::to_string(m.technology)) + ',';
            out += (m.technology == policy::Technology::lorawan ? "SF" : "CE") + std::to_string(m.parameter) + ',';
            out += std::to_string(m.fragments) + ',' + format_number(m.energy_j) + ',' + format_number(m.latency_s);
            out += ",true\n";
        } else {
            out += ",,0,0,,false\n";
        }
    }
    return out;
}

inline std::string sweep_csv(const std::vector<sim::SweepRow>& rows, std::optional<int> crossover) {
    std::string out = "payload_bytes";
    for (int sf = lora::kMinSpreadingFactor; sf <= lora::kMaxSpreadingFactor; ++sf)
        out += ",lorawan_sf" + std::to_string(sf) + "_j_per_byte";
    for (auto ce : nbiot::kAllCeLevels) out += ",nbiot_" + std::string(nbiot::to_string(ce)) + "_j_per_byte";
    out += '\n';
    for (const auto& row : rows) {
        out += std::to_string(row.payload_bytes);
        for (double v : row.lora_per_byte_j) out += ',' + format_number(v);
        for (double v : row.nbiot_per_byte_j) out += ',' + (std::isnan(v) ? std::string() : format_number(v));
        out += '\n';
    }
    out += "# crossover_lorawan_sf12_nbiot_ce2_bytes=" + (crossover ? std::to_string(*crossover) : std::string("none")) + "\n";
    return out;
}

} // namespace lpwan::io
