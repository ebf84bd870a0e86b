#include "lpwan/calibration.hpp"
#include "lpwan/io.hpp"
#include "lpwan/nbiot.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <random>

using namespace lpwan;
using namespace lpwan::nbiot;

namespace {

const std::string kData = LPWAN_DATA_DIR;

ProfileSet shipped() { return io::load_profile(kData + "/default_profile.json"); }

double empirical_median(std::vector<double> v) {
    std::nth_element(v.begin(), v.begin() + static_cast<long>(v.size() / 2), v.end());
    return v[v.size() / 2];
}

} // namespace

TEST(CeSelection, Thresholds) {
    const Config c;
    EXPECT_EQ(select_ce_level(-80, c), CeLevel::ce0);
    EXPECT_EQ(select_ce_level(c.rsrp_threshold_01_dbm, c), CeLevel::ce0);
    EXPECT_EQ(select_ce_level(-122, c), CeLevel::ce1);
    EXPECT_EQ(select_ce_level(c.rsrp_threshold_12_dbm, c), CeLevel::ce1);
    EXPECT_EQ(select_ce_level(-131, c), CeLevel::ce2);
}

TEST(CeSelection, Monotone) {
    const Config c;
    for (double r = -150; r < -60; r += 0.25) ASSERT_GE(index(select_ce_level(r, c)), index(select_ce_level(r + 0.25, c)));
}

TEST(CeSelection, Fig4PointsWithinOneLevel) {
    const auto samples = calib::parse_samples_csv(io::read_file(kData + "/fig4_nbiot_energy.csv"));
    ASSERT_EQ(samples.size(), 125u);
    const Config c;
    for (const auto& s : samples)
        EXPECT_LE(std::abs(index(select_ce_level(s.rsrp_dbm, c)) - *s.ce_level), 1) << s.rsrp_dbm;
}

TEST(Config, Validation) {
    Config c;
    c.rsrp_threshold_12_dbm = c.rsrp_threshold_01_dbm;
    EXPECT_THROW(validate(c), InvalidConfig);
    c = Config{};
    c.edrx_cycle_s = 11161;
    EXPECT_THROW(validate(c), InvalidConfig);
    c = Config{};
    c.repetitions = {2, 1, 4};
    EXPECT_THROW(validate(c), InvalidConfig);
    EnergyProfile p;
    p.psm.power_w = 1.0;
    EXPECT_THROW(validate(p), InvalidConfig);
}

TEST(MessageEnergy, SingleTermSum) {
    EnergyProfile p;
    for (StateCost* s : {&p.search_join, &p.transmit, &p.cdrx, &p.edrx, &p.psm, &p.wake}) *s = {0.0, 0.0};
    p.transmit = {1.0, 1.0};
    p.transmit_per_byte_s = 0.0;
    EXPECT_DOUBLE_EQ(message_energy(CeLevel::ce0, 5, p, Config{}), 1.0);
}

TEST(MessageEnergy, HandSummedStates) {
    const EnergyProfile p;
    Config c;
    c.include_join_energy = true;
    // CE1: two repetitions of join and transmit; 5 B + 18 B on the wire
    const double oracle = p.search_join.power_w * 2 * p.search_join.duration_s +
                          p.transmit.power_w * 2 * (p.transmit.duration_s + 23 * p.transmit_per_byte_s) +
                          p.cdrx.power_w * p.cdrx.duration_s + p.edrx.power_w * p.edrx.duration_s;
    EXPECT_NEAR(message_energy(CeLevel::ce1, 5, p, c), oracle, 1e-12);
    c.include_join_energy = false;
    EXPECT_NEAR(message_energy(CeLevel::ce1, 5, p, c), oracle - p.search_join.power_w * 2 * p.search_join.duration_s,
                1e-12);
}

TEST(MessageEnergy, RateFloorApplies) {
    EnergyProfile p;
    p.transmit = {1.0, 0.0};
    p.transmit_per_byte_s = 0.0;
    const Config c;
    EXPECT_DOUBLE_EQ(transmit_duration_s(CeLevel::ce0, 1600, p, c), 1618 * 8 / 180e3);
}

TEST(MessageEnergy, PayloadCap) {
    EXPECT_THROW(message_energy(CeLevel::ce0, 1601, EnergyProfile{}, Config{}), PayloadExceeded);
    EXPECT_NO_THROW(message_energy(CeLevel::ce0, 1600, EnergyProfile{}, Config{}));
}

TEST(MessageEnergy, Fig4BandsWithShippedProfile) {
    auto p = shipped();
    p.nbiot_config.include_join_energy = true;
    const double ce0 = message_energy(CeLevel::ce0, 5, p.nbiot_energy, p.nbiot_config);
    const double ce2 = message_energy(CeLevel::ce2, 5, p.nbiot_energy, p.nbiot_config);
    EXPECT_GE(ce0, 4.2);
    EXPECT_LE(ce0, 8.2);
    EXPECT_GE(ce2, 7.9);
    EXPECT_LE(ce2, 20.2);
    EXPECT_LE(ce2, 4 * ce0);
}

TEST(MessageEnergy, MonotoneSweep) {
    std::mt19937 gen(11);
    std::uniform_real_distribution<double> pw(0.001, 1.0), dur(0.0, 30.0);
    std::uniform_int_distribution<int> bytes(0, 1599);
    for (int i = 0; i < 1000; ++i) {
        EnergyProfile p;
        for (StateCost* s : {&p.search_join, &p.transmit, &p.cdrx, &p.edrx}) *s = {pw(gen), dur(gen)};
        p.psm = {0.0, 0.0};
        p.transmit_per_byte_s = pw(gen) * 1e-3;
        Config c;
        c.include_join_energy = i % 2 == 0;
        const int n = bytes(gen);
        for (auto ce : kAllCeLevels) {
            const double e = message_energy(ce, n, p, c);
            ASSERT_LE(e, message_energy(ce, n + 1, p, c));
            if (ce != CeLevel::ce2) { ASSERT_LE(e, message_energy(ce_from_index(index(ce) + 1), n, p, c)); }
            for (auto member : {&EnergyProfile::search_join, &EnergyProfile::transmit, &EnergyProfile::cdrx,
                                &EnergyProfile::edrx}) {
                EnergyProfile q = p;
                (q.*member).power_w *= 1.5;
                ASSERT_LE(e, message_energy(ce, n, q, c));
            }
        }
    }
}

TEST(EnergyPerByte, DefinitionAndTrend) {
    const EnergyProfile p;
    const Config c;
    for (auto ce : kAllCeLevels) {
        EXPECT_LT(energy_per_byte(ce, 1600, p, c), energy_per_byte(ce, 5, p, c));
        for (int n : {1, 7, 240, 1600}) EXPECT_NEAR(energy_per_byte(ce, n, p, c) * n, message_energy(ce, n, p, c), 1e-12);
        for (int n = 1; n < 1600; ++n) ASSERT_GE(energy_per_byte(ce, n, p, c), energy_per_byte(ce, n + 1, p, c));
    }
    EXPECT_THROW(energy_per_byte(CeLevel::ce0, 0, p, c), InvalidConfig);
}

TEST(Latency, SampledMediansMatch) {
    const LatencyModel m;
    const std::array<double, 3> medians{0.859, 1.117, 1.915};
    for (auto ce : kAllCeLevels) {
        Rng rng(1234 + static_cast<std::uint64_t>(index(ce)));
        std::vector<double> v(100000);
        for (auto& x : v) x = uplink_latency_sample(ce, m, rng);
        const double med = empirical_median(v);
        EXPECT_NEAR(med, medians[static_cast<std::size_t>(index(ce))], 0.05 * medians[static_cast<std::size_t>(index(ce))]);
        EXPECT_GT(*std::min_element(v.begin(), v.end()), 0.0);
        const double under10 = static_cast<double>(std::count_if(v.begin(), v.end(), [](double x) { return x <= 10.0; })) / 1e5;
        if (ce != CeLevel::ce2) { EXPECT_GE(under10, 0.99); }
        if (ce == CeLevel::ce2) {
            const double mx = *std::max_element(v.begin(), v.end());
            EXPECT_GE(mx, 18.0);
            EXPECT_LE(mx, 24.0);
        }
    }
}

TEST(Latency, AnalyticMedianAndQuantiles) {
    const LatencyModel m;
    for (auto ce : kAllCeLevels) {
        EXPECT_NEAR(latency_cdf(m[ce], m[ce].median_s), 0.5, 1e-9);
        EXPECT_NEAR(latency_quantile(m[ce], 0.5), m[ce].median_s, 1e-9);
        for (double q : {0.1, 0.25, 0.75, 0.9, 0.99}) EXPECT_NEAR(latency_cdf(m[ce], latency_quantile(m[ce], q)), q, 1e-9);
    }
}

TEST(Latency, PointMassModel) {
    LatencyModel m;
    m[CeLevel::ce1] = {2.5, 0.0, 0.0, 2.5, 2.5};
    Rng rng(3);
    for (int i = 0; i < 100; ++i) EXPECT_DOUBLE_EQ(uplink_latency_sample(CeLevel::ce1, m, rng), 2.5);
}

TEST(Latency, SeedReproducible) {
    const LatencyModel m;
    Rng a(99), b(99);
    for (int i = 0; i < 1000; ++i) ASSERT_EQ(uplink_latency_sample(CeLevel::ce2, m, a), uplink_latency_sample(CeLevel::ce2, m, b));
}

TEST(Downlink, Reachability) {
    Config c;
    c.psm_tau_s = 3600;
    EXPECT_DOUBLE_EQ(downlink_next_opportunity(ReachabilityState::psm, 600, c), 3000);
    EXPECT_DOUBLE_EQ(downlink_next_opportunity(ReachabilityState::connected_cdrx, 600, c), 0);
    c.edrx_cycle_s = 600;
    c.ptw_s = 10;
    EXPECT_DOUBLE_EQ(downlink_next_opportunity(ReachabilityState::edrx, 5, c), 0);
    c.edrx_cycle_s = kMaxEdrxCycleS;
    c.ptw_s = 2.56;
    EXPECT_NEAR(downlink_next_opportunity(ReachabilityState::edrx, 2.57, c), 11160, 3);
}

TEST(StateMachine, Transitions) {
    EXPECT_EQ(advance_state(ModemState::send, ModemEvent::message_sent), ModemState::cdrx);
    EXPECT_EQ(advance_state(ModemState::psm, ModemEvent::wake_interrupt), ModemState::send);
    EXPECT_EQ(advance_state(ModemState::psm, ModemEvent::tau_fired), ModemState::send);
    EXPECT_THROW(advance_state(ModemState::cdrx, ModemEvent::tau_fired), ProtocolViolation);
    EXPECT_THROW(advance_state(ModemState::detached, ModemEvent::message_sent), ProtocolViolation);
}

TEST(StateMachine, RandomWalksKeepOrder) {
    // Every legal walk from power-on passes the trace audit.
    const std::array events{ModemEvent::power_on,         ModemEvent::join_completed, ModemEvent::message_sent,
                            ModemEvent::cdrx_expired,     ModemEvent::edrx_rounds_done, ModemEvent::tau_fired,
                            ModemEvent::wake_interrupt};
    std::mt19937 gen(5);
    for (int walk = 0; walk < 500; ++walk) {
        std::vector<ModemState> trace{ModemState::detached};
        ModemState s = ModemState::detached;
        for (int step = 0; step < 50; ++step) {
            std::vector<ModemState> next;
            for (auto e : events) {
                try {
                    next.push_back(advance_state(s, e));
                } catch (const ProtocolViolation&) {
                }
            }
            ASSERT_FALSE(next.empty());
            s = next[gen() % next.size()];
            trace.push_back(s);
        }
        ASSERT_TRUE(state_trace_valid(trace));
        // search_join only right after detached
        for (std::size_t i = 1; i < trace.size(); ++i)
            if (trace[i] == ModemState::search_join) { ASSERT_EQ(trace[i - 1], ModemState::detached); }
    }
    EXPECT_FALSE(state_trace_valid(std::vector{ModemState::send}));
    EXPECT_FALSE(state_trace_valid(std::vector{ModemState::detached, ModemState::search_join, ModemState::cdrx}));
}
