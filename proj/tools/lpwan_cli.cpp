// lpwan: command-line front end for planning, simulation, sweeps and calibration.

#include "lpwan/calibration.hpp"
#include "lpwan/io.hpp"
#include "lpwan/policy.hpp"
#include "lpwan/simulator.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <future>
#include <iostream>

#ifndef LPWAN_DEFAULT_PROFILE
#define LPWAN_DEFAULT_PROFILE "data/default_profile.json"
#endif

namespace {

using namespace lpwan;

enum Exit { kOk = 0, kUsage = 1, kNoFeasiblePlan = 2, kSchema = 3 };

void emit(const std::string& text, const std::string& path) {
    if (path.empty() || path == "-")
        std::cout << text;
    else
        io::write_file(path, text);
}

ProfileSet load_profile_arg(const std::string& path) {
    return io::load_profile(io::resolve_profile_path(path, LPWAN_DEFAULT_PROFILE));
}

std::string describe(const policy::TransmissionPlan& p) {
    std::string s = std::string(policy::to_string(p.technology)) + " " +
                    (p.technology == policy::Technology::lorawan ? "SF" : "CE") + std::to_string(p.parameter);
    s += " fragments=" + std::to_string(p.fragments.size());
    s += " energy_j=" + io::format_number(p.predicted_energy_j);
    s += " latency_s=" + io::format_number(p.predicted_latency_s);
    if (p.technology == policy::Technology::lorawan) s += " tx_power_dbm=" + io::format_number(p.lora_config.tx_power_dbm);
    return s;
}

struct PlanArgs {
    std::string profile;
    int payload = 0;
    std::optional<double> rsrp, path_loss, deadline;
    double snr_margin = 0.0;
    std::string qos = "best_effort", mode = "multirat", modem = "detached";
    bool confirmed = false;
    std::optional<int> sf;
};

nbiot::ModemState parse_modem(const std::string& s) {
    for (auto st : {nbiot::ModemState::detached, nbiot::ModemState::cdrx, nbiot::ModemState::edrx, nbiot::ModemState::psm})
        if (s == nbiot::to_string(st)) return st;
    throw CLI::ValidationError("--modem", "expected detached, cdrx, edrx or psm");
}

int cmd_plan(const PlanArgs& a) {
    ProfileSet profiles = load_profile_arg(a.profile);
    if (a.confirmed) profiles.lora_confirmed_uplink = true;
    const auto link = a.rsrp ? link::LinkState::from_rsrp(*a.rsrp, a.snr_margin, profiles.rsrp_reference_dbm)
                             : link::LinkState::from_path_loss(*a.path_loss, a.snr_margin, profiles.rsrp_reference_dbm);
    policy::NodeState node{lora::DutyCycleLedger(profiles.lora_duty_fraction), parse_modem(a.modem), link, 0.0, std::nullopt};
    policy::MessageRequest msg{1, a.payload, a.deadline, io::parse_qos(a.qos, "--qos"), 0.0, a.sf};
    policy::PolicyOptions options{io::parse_mode(a.mode, "--mode"), std::nullopt};

    const auto sel = policy::select_plan(policy::enumerate_candidates(msg, node, profiles, options));
    if (sel)
        std::cout << "technology=" << policy::to_string(sel.chosen->technology) << "\nselected " << describe(*sel.chosen)
                  << "\n";
    else
        std::cout << "technology=none\nno feasible plan\n";
    for (const auto& c : sel.candidates) {
        std::cout << "candidate " << describe(c);
        if (c.feasible()) {
            std::cout << " feasible\n";
        } else {
            std::cout << " infeasible:";
            for (auto r : c.reasons) std::cout << ' ' << policy::to_string(r);
            std::cout << '\n';
        }
    }
    return sel ? kOk : kNoFeasiblePlan;
}

struct SimulateArgs {
    std::string scenario, profile, mode, out, trace;
    std::optional<std::uint64_t> seed;
    bool compare = false;
    int jobs = 1;
};

int cmd_simulate(const SimulateArgs& a) {
    auto scenario = io::load_scenario(a.scenario, load_profile_arg(a.profile));
    if (!a.mode.empty()) scenario.mode = io::parse_mode(a.mode, "--mode");

    if (!a.compare) {
        const auto report = sim::run(scenario, a.seed);
        emit(io::dump_report(report), a.out);
        if (!a.trace.empty()) io::write_file(a.trace, io::trace_csv(report));
        return kOk;
    }

    // Independent runs, one per mode; nothing shared but the const scenario.
    const std::array modes{policy::PolicyMode::multirat, policy::PolicyMode::lora_only, policy::PolicyMode::nbiot_only};
    std::array<sim::SimReport, 3> reports;
    auto run_mode = [&](std::size_t i) {
        auto s = scenario;
        s.mode = modes[i];
        return sim::run(s, a.seed);
    };
    if (a.jobs > 1) {
        std::array<std::future<sim::SimReport>, 3> futures;
        for (std::size_t i = 0; i < modes.size(); ++i) futures[i] = std::async(std::launch::async, run_mode, i);
        for (std::size_t i = 0; i < modes.size(); ++i) reports[i] = futures[i].get();
    } else {
        for (std::size_t i = 0; i < modes.size(); ++i) reports[i] = run_mode(i);
    }

    io::ordered_json j;
    for (std::size_t i = 0; i < modes.size(); ++i) j["runs"][std::string(policy::to_string(modes[i]))] = io::report_to_json(reports[i]);
    const double base = reports[0].weekly_transmit_energy_j;
    j["ratios"] = {{"lora_only_over_multirat", io::finite_or_null(reports[1].weekly_transmit_energy_j / base)},
                   {"nbiot_only_over_multirat", io::finite_or_null(reports[2].weekly_transmit_energy_j / base)}};
    emit(j.dump(2) + "\n", a.out);
    if (!a.trace.empty()) io::write_file(a.trace, io::trace_csv(reports[0]));
    return kOk;
}

int cmd_sweep(const std::string& profile_path, int min_b, int max_b, int step, const std::string& out) {
    const auto profiles = load_profile_arg(profile_path);
    const auto rows = sim::sweep_energy_per_byte(min_b, max_b, step, profiles);
    emit(io::sweep_csv(rows, sim::crossover_payload(profiles)), out);
    return kOk;
}

struct CalibrateArgs {
    std::string samples, profile, out;
    std::vector<std::string> fit{"search_join"};
    std::optional<int> crossover_target;
};

int cmd_calibrate(const CalibrateArgs& a) {
    ProfileSet profiles = load_profile_arg(a.profile);
    const auto samples = calib::parse_samples_csv(io::read_file(a.samples));
    std::vector<calib::Constant> constants;
    for (const auto& name : a.fit) constants.push_back(calib::constant_from_string(name));

    const auto result = calib::fit(samples, profiles.nbiot_energy, profiles.nbiot_config, constants);
    profiles.nbiot_energy = result.profile;
    for (auto c : result.fitted)
        std::cerr << calib::to_string(c) << " = " << io::format_number(calib::power_of(result.profile, c)) << "\n";
    for (const auto& r : result.residuals)
        std::cerr << "CE" << r.ce_level << " n=" << r.count << " measured=[" << io::format_number(r.measured_min_j) << ", "
                  << io::format_number(r.measured_max_j) << "] mean_measured=" << io::format_number(r.measured_mean_j)
                  << " mean_predicted=" << io::format_number(r.predicted_mean_j)
                  << " rms_residual=" << io::format_number(r.rms_residual_j) << "\n";
    std::cerr << "rms_residual=" << io::format_number(result.rms_residual_j) << "\n";

    if (a.crossover_target) {
        profiles.lora_energy.p_transmit_w = calib::tune_lora_transmit_power(profiles, *a.crossover_target);
        const auto c = sim::crossover_payload(profiles);
        std::cerr << "lorawan.energy.p_transmit_w = " << io::format_number(profiles.lora_energy.p_transmit_w)
                  << " (crossover " << (c ? std::to_string(*c) : std::string("none")) << " B)\n";
    }
    emit(io::dump_profile(profiles), a.out);
    return kOk;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Multi-RAT LoRaWAN / NB-IoT energy and latency tool"};
    app.require_subcommand(1);

    PlanArgs plan;
    auto* p = app.add_subcommand("plan", "pick a radio for one message");
    p->add_option("--profile", plan.profile, "profile JSON (default: $LPWAN_PROFILE or the shipped profile)");
    p->add_option("--payload", plan.payload, "payload in bytes")->required()->check(CLI::PositiveNumber);
    auto* rsrp = p->add_option("--rsrp", plan.rsrp, "NB-IoT RSRP in dBm");
    auto* pl = p->add_option("--path-loss", plan.path_loss, "path loss in dB");
    rsrp->excludes(pl);
    pl->excludes(rsrp);
    p->add_option("--snr-margin", plan.snr_margin, "LoRa SNR margin above the demodulation floor, dB");
    p->add_option("--deadline", plan.deadline, "deadline in seconds")->check(CLI::PositiveNumber);
    p->add_option("--qos", plan.qos, "best_effort or assured");
    p->add_option("--mode", plan.mode, "multirat, lora_only or nbiot_only");
    p->add_option("--modem", plan.modem, "NB-IoT modem state: detached, cdrx, edrx or psm");
    p->add_flag("--confirmed", plan.confirmed, "use confirmed LoRa uplinks");
    p->add_option("--sf", plan.sf, "pin the LoRa spreading factor")->check(CLI::Range(7, 12));

    SimulateArgs simulate;
    auto* s = app.add_subcommand("simulate", "run a scenario");
    s->add_option("scenario", simulate.scenario, "scenario JSON")->required();
    s->add_option("--profile", simulate.profile, "profile used when the scenario names none");
    s->add_option("--mode", simulate.mode, "override the scenario policy mode");
    s->add_option("--seed", simulate.seed, "override the scenario seed");
    s->add_option("--out", simulate.out, "report path (default stdout)");
    s->add_option("--trace", simulate.trace, "per-message CSV trace path");
    s->add_flag("--compare", simulate.compare, "run all three modes and report energy ratios");
    s->add_option("--jobs", simulate.jobs, "parallel runs for --compare")->check(CLI::PositiveNumber);

    std::string sweep_profile, sweep_out;
    int sweep_min = 1, sweep_max = 1600, sweep_step = 1;
    auto* w = app.add_subcommand("sweep", "energy-per-byte curves");
    w->add_option("--profile", sweep_profile, "profile JSON");
    w->add_option("--min", sweep_min, "first payload")->check(CLI::PositiveNumber);
    w->add_option("--max", sweep_max, "last payload")->check(CLI::PositiveNumber);
    w->add_option("--step", sweep_step, "payload step")->check(CLI::PositiveNumber);
    w->add_option("--out", sweep_out, "CSV path (default stdout)");

    CalibrateArgs cal;
    auto* c = app.add_subcommand("calibrate", "fit NB-IoT state powers to measured energies");
    c->add_option("--samples", cal.samples, "CSV of measured messages")->required();
    c->add_option("--profile", cal.profile, "initial profile JSON");
    c->add_option("--fit", cal.fit, "constants to fit (search_join, transmit, cdrx, edrx)");
    c->add_option("--crossover-target", cal.crossover_target, "tune LoRa transmit power so SF12/CE2 cross here")
        ->check(CLI::Range(1, nbiot::kMaxPayloadBytes));
    c->add_option("--out", cal.out, "fitted profile path (default stdout)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kOk : kUsage;
    }

    try {
        if (*p) {
            if (!plan.rsrp && !plan.path_loss) {
                std::cerr << "plan: one of --rsrp or --path-loss is required\n";
                return kUsage;
            }
            return cmd_plan(plan);
        }
        if (*s) return cmd_simulate(simulate);
        if (*w) {
            if (sweep_min > sweep_max) {
                std::cerr << "sweep: --min must not exceed --max\n";
                return kUsage;
            }
            return cmd_sweep(sweep_profile, sweep_min, sweep_max, sweep_step, sweep_out);
        }
        if (*c) return cmd_calibrate(cal);
    } catch (const SchemaError& e) {
        std::cerr << "schema error: " << e.what() << "\n";
        return kSchema;
    } catch (const CLI::ValidationError& e) {
        std::cerr << e.what() << "\n";
        return kUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kUsage;
    }
    return kUsage;
}
