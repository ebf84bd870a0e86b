#include "lpwan/calibration.hpp"
#include "lpwan/io.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace lpwan;
using namespace lpwan::calib;

namespace {

const std::string kData = LPWAN_DATA_DIR;

std::vector<CalibrationSample> fig4() { return parse_samples_csv(io::read_file(kData + "/fig4_nbiot_energy.csv")); }

// Exhaustive NNLS: best least-squares solution over every support set that
// stays non-negative. Exponential, fine for a handful of columns.
Eigen::VectorXd brute_force_nnls(const Eigen::MatrixXd& A, const Eigen::VectorXd& b) {
    const auto n = A.cols();
    Eigen::VectorXd best = Eigen::VectorXd::Zero(n);
    double best_res = b.squaredNorm();
    for (unsigned mask = 1; mask < (1u << n); ++mask) {
        std::vector<Eigen::Index> idx;
        for (Eigen::Index j = 0; j < n; ++j)
            if (mask & (1u << j)) idx.push_back(j);
        Eigen::MatrixXd As(A.rows(), static_cast<Eigen::Index>(idx.size()));
        for (std::size_t k = 0; k < idx.size(); ++k) As.col(static_cast<Eigen::Index>(k)) = A.col(idx[k]);
        const Eigen::VectorXd z = As.householderQr().solve(b);
        if ((z.array() < 0).any()) continue;
        Eigen::VectorXd x = Eigen::VectorXd::Zero(n);
        for (std::size_t k = 0; k < idx.size(); ++k) x(idx[k]) = z(static_cast<Eigen::Index>(k));
        const double res = (A * x - b).squaredNorm();
        if (res < best_res) {
            best_res = res;
            best = x;
        }
    }
    return best;
}

std::vector<CalibrationSample> varied_layout() {
    std::vector<CalibrationSample> out;
    for (int ce = 0; ce < 3; ++ce)
        for (int bytes : {5, 50, 200, 800, 1600})
            for (bool join : {false, true}) out.push_back({-100.0 - 10 * ce, bytes, 1.0, ce, join});
    return out;
}

} // namespace

TEST(Nnls, MatchesBruteForce) {
    std::mt19937 gen(21);
    std::normal_distribution<double> nd;
    for (int trial = 0; trial < 200; ++trial) {
        const int m = 8, n = 1 + trial % 5;
        Eigen::MatrixXd A(m, n);
        Eigen::VectorXd b(m);
        for (int i = 0; i < m; ++i) {
            b(i) = nd(gen);
            for (int j = 0; j < n; ++j) A(i, j) = nd(gen);
        }
        const auto r = nnls(A, b);
        ASSERT_TRUE(r.converged);
        ASSERT_TRUE((r.x.array() >= 0).all());
        const Eigen::VectorXd oracle = brute_force_nnls(A, b);
        ASSERT_NEAR((A * r.x - b).squaredNorm(), (A * oracle - b).squaredNorm(), 1e-9) << "trial " << trial;
    }
}

TEST(Nnls, UnconstrainedOptimumWhenPositive) {
    Eigen::MatrixXd A(3, 2);
    A << 1, 0, 0, 1, 1, 1;
    Eigen::VectorXd b(3);
    b << 1, 2, 3;
    EXPECT_NEAR(nnls(A, b).x(0), 1.0, 1e-12);
    EXPECT_NEAR(nnls(A, b).x(1), 2.0, 1e-12);
}

TEST(Fit, RoundTripRecoversConstants) {
    nbiot::EnergyProfile truth;
    truth.search_join.power_w = 0.41;
    truth.transmit.power_w = 0.63;
    truth.cdrx.power_w = 0.071;
    const nbiot::Config cfg;
    const auto samples = synthesize(varied_layout(), truth, cfg);
    const auto r = fit(samples, nbiot::EnergyProfile{}, cfg, {Constant::search_join, Constant::transmit, Constant::cdrx});
    EXPECT_NEAR(r.profile.search_join.power_w, 0.41, 0.01 * 0.41);
    EXPECT_NEAR(r.profile.transmit.power_w, 0.63, 0.01 * 0.63);
    EXPECT_NEAR(r.profile.cdrx.power_w, 0.071, 0.01 * 0.071);
    EXPECT_LT(r.rms_residual_j, 1e-9);
    // regenerate from the fit and compare sample by sample
    const auto again = synthesize(samples, r.profile, cfg);
    for (std::size_t i = 0; i < samples.size(); ++i)
        EXPECT_NEAR(again[i].measured_energy_j, samples[i].measured_energy_j, 1e-9);
}

TEST(Fit, IdenticalSamplesFitPerfectly) {
    const nbiot::Config cfg;
    std::vector<CalibrationSample> same(6, CalibrationSample{-90, 5, 6.0, 0, true});
    const auto r = fit(same, nbiot::EnergyProfile{}, cfg, {Constant::search_join});
    EXPECT_NEAR(r.rms_residual_j, 0.0, 1e-12);
    EXPECT_NEAR(predict_energy(same[0], r.profile, cfg), 6.0, 1e-12);
}

TEST(Fit, RankDeficiencyNamesConstants) {
    const nbiot::Config cfg;
    const auto samples = synthesize(varied_layout(), nbiot::EnergyProfile{}, cfg);
    try {
        fit(samples, nbiot::EnergyProfile{}, cfg, {Constant::search_join, Constant::cdrx, Constant::edrx});
        FAIL() << "expected rank deficiency";
    } catch (const RankDeficiency& e) {
        EXPECT_EQ(e.unresolvable, (std::vector<std::string>{"nbiot.energy.cdrx.power_w", "nbiot.energy.edrx.power_w"}));
    }
    // Fig. 4 has one payload: join and transmit scale together
    try {
        fit(fig4(), nbiot::EnergyProfile{}, cfg, {Constant::search_join, Constant::transmit});
        FAIL() << "expected rank deficiency";
    } catch (const RankDeficiency& e) {
        EXPECT_EQ(e.unresolvable.size(), 2u);
    }
}

TEST(Fit, TooFewSamplesPerLevel) {
    std::vector<CalibrationSample> s{{-90, 5, 5.0, 0, true}, {-90, 5, 5.0, 0, true}, {-90, 5, 5.0, 0, true},
                                     {-130, 5, 15.0, 2, true}};
    EXPECT_THROW(fit(s, nbiot::EnergyProfile{}, nbiot::Config{}, {Constant::search_join}), InvalidConfig);
}

TEST(Fit, Fig4MeansInsideBands) {
    const nbiot::Config cfg;
    const auto r = fit(fig4(), nbiot::EnergyProfile{}, cfg, {Constant::search_join});
    ASSERT_EQ(r.residuals.size(), 3u);
    for (const auto& lvl : r.residuals) {
        EXPECT_GE(lvl.predicted_mean_j, lvl.measured_min_j) << "CE" << lvl.ce_level;
        EXPECT_LE(lvl.predicted_mean_j, lvl.measured_max_j) << "CE" << lvl.ce_level;
    }
    EXPECT_EQ(r.residuals[0].count, 42u);
    EXPECT_EQ(r.residuals[1].count, 42u);
    EXPECT_EQ(r.residuals[2].count, 41u);
    const double ratio = r.residuals[2].predicted_median_j / r.residuals[0].predicted_median_j;
    EXPECT_GT(ratio, 1.0);
    EXPECT_LE(ratio, 4.0);
}

TEST(Csv, ParseAndEmit) {
    const auto s = parse_samples_csv("rsrp_dbm,payload_bytes,measured_energy_j\n-100,5,6.5\n\n-120.5,10,9\n");
    ASSERT_EQ(s.size(), 2u);
    EXPECT_FALSE(s[0].ce_level);
    EXPECT_EQ(sample_ce(s[1], nbiot::Config{}), nbiot::CeLevel::ce1);
    EXPECT_EQ(parse_samples_csv(samples_csv(fig4())).size(), 125u);
    EXPECT_THROW(parse_samples_csv("rsrp_dbm,payload_bytes\n"), SchemaError);
    EXPECT_THROW(parse_samples_csv("rsrp_dbm,payload_bytes,measured_energy_j\n-100,5,0\n"), SchemaError);
    EXPECT_THROW(parse_samples_csv("rsrp_dbm,payload_bytes,measured_energy_j,colour\n"), SchemaError);
    EXPECT_THROW(parse_samples_csv("rsrp_dbm,payload_bytes,measured_energy_j\n-1x0,5,1\n"), SchemaError);
}

TEST(Crossover, TuningHitsTarget) {
    ProfileSet p;
    for (int target : {150, 240, 400}) {
        p.lora_energy.p_transmit_w = tune_lora_transmit_power(p, target);
        const auto c = sim::crossover_payload(p);
        ASSERT_TRUE(c);
        EXPECT_LE(*c, target);
        EXPECT_GE(*c, target * 0.9);
    }
}

TEST(ShippedProfile, RegeneratesFromInputs) {
    // initial profile + Fig. 4 samples + crossover target 240 reproduces the shipped file
    ProfileSet p = io::load_profile(kData + "/initial_profile.json");
    const auto r = fit(fig4(), p.nbiot_energy, p.nbiot_config, {Constant::search_join});
    p.nbiot_energy = r.profile;
    p.lora_energy.p_transmit_w = tune_lora_transmit_power(p, 240);
    const auto shipped = io::load_profile(kData + "/default_profile.json");
    EXPECT_NEAR(p.nbiot_energy.search_join.power_w, shipped.nbiot_energy.search_join.power_w, 1e-12);
    EXPECT_NEAR(p.lora_energy.p_transmit_w, shipped.lora_energy.p_transmit_w, 1e-12);
    p.nbiot_energy.search_join.power_w = shipped.nbiot_energy.search_join.power_w;
    p.lora_energy.p_transmit_w = shipped.lora_energy.p_transmit_w;
    EXPECT_EQ(p, shipped);
}
