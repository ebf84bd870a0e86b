#include "lpwan/io.hpp"

#include <gtest/gtest.h>

#include <clocale>

using namespace lpwan;

namespace {

const std::string kData = LPWAN_DATA_DIR;

std::string path_of_error(const std::string& text) {
    try {
        io::parse_profile(text);
    } catch (const SchemaError& e) {
        return e.path;
    }
    return "<no error>";
}

std::string scenario_error(const std::string& text) {
    try {
        io::scenario_from_json(io::json::parse(text), ProfileSet{});
    } catch (const SchemaError& e) {
        return e.path;
    }
    return "<no error>";
}

} // namespace

TEST(Profile, RoundTrip) {
    ProfileSet p;
    p.lora_energy.p_transmit_w = 0.123456789;
    p.lora_energy.t_rx1_s = 0.05;
    p.nbiot_latency[nbiot::CeLevel::ce2].median_s = 2.0;
    EXPECT_EQ(io::parse_profile(io::dump_profile(p)), p);
}

TEST(Profile, ShippedFilesLoad) {
    const auto initial = io::load_profile(kData + "/initial_profile.json");
    EXPECT_EQ(initial, ProfileSet{});
    const auto shipped = io::load_profile(kData + "/default_profile.json");
    EXPECT_NE(shipped.lora_energy.p_transmit_w, initial.lora_energy.p_transmit_w);
}

TEST(Profile, PartialDocumentKeepsDefaults) {
    const auto p = io::parse_profile(R"({"schema_version": 1, "lorawan": {"duty_fraction": 0.1}})");
    EXPECT_DOUBLE_EQ(p.lora_duty_fraction, 0.1);
    EXPECT_EQ(p.nbiot_energy, nbiot::EnergyProfile{});
}

TEST(Profile, StrictSchema) {
    EXPECT_EQ(path_of_error(R"({"lorawan": {}})"), "schema_version");
    EXPECT_EQ(path_of_error(R"({"schema_version": 2})"), "schema_version");
    EXPECT_EQ(path_of_error(R"({"schema_version": 1, "extra": 1})"), "extra");
    EXPECT_EQ(path_of_error(R"({"schema_version": 1, "nbiot": {"energy": {"cdrx": {"power": 1}}}})"),
              "nbiot.energy.cdrx.power");
    EXPECT_EQ(path_of_error(R"({"schema_version": 1, "lorawan": {"radio": {"spreading_factor": "12"}}})"),
              "lorawan.radio.spreading_factor");
    EXPECT_EQ(path_of_error(R"({"schema_version": 1, "nbiot": {"config": {"repetitions": [1, 2]}}})"),
              "nbiot.config.repetitions");
    EXPECT_EQ(path_of_error("{not json"), "<profile>");
    // semantic validation surfaces as a schema error too
    EXPECT_NE(path_of_error(R"({"schema_version": 1, "lorawan": {"radio": {"spreading_factor": 13}}})"), "<no error>");
}

TEST(Profile, EnvOverride) {
    ::setenv(io::kProfileEnvVar, "/tmp/from_env.json", 1);
    EXPECT_EQ(io::resolve_profile_path("", "fallback.json"), "/tmp/from_env.json");
    EXPECT_EQ(io::resolve_profile_path("explicit.json", "fallback.json"), "explicit.json");
    ::unsetenv(io::kProfileEnvVar);
    EXPECT_EQ(io::resolve_profile_path("", "fallback.json"), "fallback.json");
}

TEST(Scenario, SmartCityFile) {
    const auto s = io::load_scenario(kData + "/scenarios/smart_city.json", ProfileSet{});
    EXPECT_EQ(s.traffic.size(), 2u);
    EXPECT_DOUBLE_EQ(s.battery_j, 33300.0);
    EXPECT_DOUBLE_EQ(s.duration_s, 604800.0);
    ASSERT_TRUE(s.environment);
    EXPECT_EQ(s.environment->name, "outdoor");
    EXPECT_EQ(s.traffic[1].kind, sim::TrafficKind::event);
    EXPECT_EQ(s.traffic[1].lora_spreading_factor, 12);
}

TEST(Scenario, FieldPathsInErrors) {
    const std::string base = R"("schema_version": 1, "duration_s": 100, "link": {"path_loss_db": 100})";
    EXPECT_EQ(scenario_error("{" + base + "}"), "traffic");
    EXPECT_EQ(scenario_error("{" + base + R"(, "traffic": [{"kind": "periodic", "interval_s": 10}]})"),
              "traffic[0].payload_bytes");
    EXPECT_EQ(scenario_error("{" + base + R"(, "traffic": [{"kind": "burst", "payload_bytes": 1}]})"),
              "traffic[0].kind");
    EXPECT_EQ(scenario_error("{" + base +
                             R"(, "traffic": [{"kind": "event", "rate_per_week": 1, "payload_bytes": 1, "colour": 1}]})"),
              "traffic[0].colour");
    EXPECT_EQ(scenario_error("{" + base + R"(, "mode": "both", "traffic": []})"), "mode");
    EXPECT_EQ(scenario_error(R"({"schema_version": 1, "duration_s": 100, "link": {}, "traffic": []})"),
              "link.path_loss_db");
    EXPECT_EQ(scenario_error("{" + base + R"(, "profile": {"schema_version": 1, "oops": 0}, "traffic": []})"),
              "profile.oops");
    EXPECT_EQ(scenario_error("{" + base + R"(, "traffic": []})"), "");
}

TEST(Output, NumbersIgnoreLocale) {
    const char* prev = std::setlocale(LC_NUMERIC, nullptr);
    const std::string saved = prev ? prev : "C";
    if (std::setlocale(LC_NUMERIC, "de_DE.UTF-8") == nullptr) std::setlocale(LC_NUMERIC, "C");
    EXPECT_EQ(io::format_number(0.5), "0.5");
    EXPECT_EQ(io::format_number(1234.125), "1234.125");
    std::setlocale(LC_NUMERIC, saved.c_str());
}

TEST(Output, TraceColumns) {
    auto s = io::load_scenario(kData + "/scenarios/smart_city.json", io::load_profile(kData + "/default_profile.json"));
    const auto csv = io::trace_csv(sim::run(s));
    EXPECT_EQ(csv.substr(0, csv.find('\n')), "message_id,t_s,technology,parameter,fragments,energy_j,latency_s,delivered");
    EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 174);
    EXPECT_NE(csv.find(",lorawan,SF7,1,"), std::string::npos);
    EXPECT_NE(csv.find(",nbiot,CE"), std::string::npos);
}

TEST(Output, ReportHasAllSections) {
    auto s = io::load_scenario(kData + "/scenarios/smart_city.json", io::load_profile(kData + "/default_profile.json"));
    const auto j = io::json::parse(io::dump_report(sim::run(s)));
    for (const char* key : {"energy", "messages", "latency", "duty_cycle", "battery", "undelivered", "audits"})
        EXPECT_TRUE(j.contains(key)) << key;
    EXPECT_TRUE(j["energy"]["by_state"].contains("nbiot_psm_j"));
    EXPECT_TRUE(j["energy"]["by_technology"].contains("lorawan_j"));
}
