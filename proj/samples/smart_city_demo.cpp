// Runs the shipped smart-city scenario in all three policy modes and prints
// weekly transmit energy and battery lifetime for each.

#include "lpwan/io.hpp"
#include "lpwan/simulator.hpp"

#include <cstdio>

int main() {
    using namespace lpwan;
    const std::string data = LPWAN_DATA_DIR;
    const auto profiles = io::load_profile(data + "/default_profile.json");
    auto scenario = io::load_scenario(data + "/scenarios/smart_city.json", profiles);

    double multirat = 0.0;
    for (auto mode : {policy::PolicyMode::multirat, policy::PolicyMode::lora_only, policy::PolicyMode::nbiot_only}) {
        scenario.mode = mode;
        const auto r = sim::run(scenario);
        if (mode == policy::PolicyMode::multirat) multirat = r.weekly_transmit_energy_j;
        std::printf("%-10s %8.2f J/week  x%-6.2f lifetime %6.2f years  (lora %zu, nbiot %zu)\n",
                    std::string(policy::to_string(mode)).c_str(), r.weekly_transmit_energy_j,
                    r.weekly_transmit_energy_j / multirat, r.battery_lifetime_years, r.messages_lorawan,
                    r.messages_nbiot);
    }
}
