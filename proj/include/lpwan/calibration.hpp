#pragma once

// Fits NB-IoT state powers to measured per-message energies with
// non-negative least squares, and tunes the LoRa transmit power so the
// SF12 / CE2 energy curves cross at a target payload.

#include "lpwan/errors.hpp"
#include "lpwan/nbiot.hpp"
#include "lpwan/profile.hpp"
#include "lpwan/simulator.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace lpwan::calib {

struct CalibrationSample {
    double rsrp_dbm = 0.0;
    int payload_bytes = 0;
    double measured_energy_j = 0.0;
    /// Falls back to the RSRP thresholds of the profile when absent.
    std::optional<int> ce_level;
    /// Whether the measurement window covers the attach procedure.
    bool includes_join = false;
};

/// Parameters the fitter can solve for; each is a state power in W.
enum class Constant { search_join, transmit, cdrx, edrx };

inline constexpr std::array<Constant, 4> kAllConstants{Constant::search_join, Constant::transmit, Constant::cdrx,
                                                       Constant::edrx};

inline std::string_view to_string(Constant c) {
    switch (c) {
    case Constant::search_join: return "nbiot.energy.search_join.power_w";
    case Constant::transmit: return "nbiot.energy.transmit.power_w";
    case Constant::cdrx: return "nbiot.energy.cdrx.power_w";
    case Constant::edrx: return "nbiot.energy.edrx.power_w";
    }
    return "?";
}

inline Constant constant_from_string(const std::string& s) {
    for (auto c : kAllConstants) {
        const auto full = to_string(c);
        if (s == full) return c;
        // short form: "search_join", "transmit", ...
        const auto start = std::string_view("nbiot.energy.").size();
        if (s == full.substr(start, full.size() - start - std::string_view(".power_w").size())) return c;
    }
    throw InvalidConfig("unknown calibration constant '" + s + "'");
}

inline double& power_ref(nbiot::EnergyProfile& p, Constant c) {
    switch (c) {
    case Constant::search_join: return p.search_join.power_w;
    case Constant::transmit: return p.transmit.power_w;
    case Constant::cdrx: return p.cdrx.power_w;
    case Constant::edrx: return p.edrx.power_w;
    }
    return p.transmit.power_w;
}

inline double power_of(const nbiot::EnergyProfile& p, Constant c) {
    return power_ref(const_cast<nbiot::EnergyProfile&>(p), c);
}

// ---------------------------------------------------------------------------
// CSV

inline std::vector<CalibrationSample> parse_samples_csv(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    std::vector<std::string> header;
    std::vector<CalibrationSample> out;
    int line_no = 0;
    auto split = [](const std::string& l) {
        std::vector<std::string> cells;
        std::string cell;
        std::istringstream ls(l);
        while (std::getline(ls, cell, ',')) {
            cell.erase(0, cell.find_first_not_of(" \t\r"));
            cell.erase(cell.find_last_not_of(" \t\r") + 1);
            cells.push_back(cell);
        }
        return cells;
    };
    auto number = [&](const std::string& s, const std::string& col) {
        double v = 0.0;
        const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
        if (res.ec != std::errc() || res.ptr != s.data() + s.size())
            throw SchemaError("line " + std::to_string(line_no) + "." + col, "not a number: '" + s + "'");
        return v;
    };
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line == "\r" || line[0] == '#') continue;
        const auto cells = split(line);
        if (header.empty()) {
            header = cells;
            for (const char* need : {"rsrp_dbm", "payload_bytes", "measured_energy_j"})
                if (std::find(header.begin(), header.end(), need) == header.end())
                    throw SchemaError(need, "missing CSV column");
            for (const auto& h : header)
                if (h != "rsrp_dbm" && h != "payload_bytes" && h != "measured_energy_j" && h != "ce_level" &&
                    h != "includes_join")
                    throw SchemaError(h, "unknown CSV column");
            continue;
        }
        if (cells.size() != header.size())
            throw SchemaError("line " + std::to_string(line_no), "expected " + std::to_string(header.size()) + " cells");
        CalibrationSample s;
        for (std::size_t i = 0; i < cells.size(); ++i) {
            const auto& h = header[i];
            if (h == "rsrp_dbm") s.rsrp_dbm = number(cells[i], h);
            else if (h == "payload_bytes") s.payload_bytes = static_cast<int>(number(cells[i], h));
            else if (h == "measured_energy_j") s.measured_energy_j = number(cells[i], h);
            else if (h == "ce_level" && !cells[i].empty()) s.ce_level = static_cast<int>(number(cells[i], h));
            else if (h == "includes_join") s.includes_join = cells[i] == "1" || cells[i] == "true";
        }
        if (!(s.measured_energy_j > 0.0))
            throw SchemaError("line " + std::to_string(line_no) + ".measured_energy_j", "energy must be > 0");
        if (s.payload_bytes < 0) throw SchemaError("line " + std::to_string(line_no) + ".payload_bytes", "must be >= 0");
        if (s.ce_level && (*s.ce_level < 0 || *s.ce_level > 2))
            throw SchemaError("line " + std::to_string(line_no) + ".ce_level", "must be 0, 1 or 2");
        out.push_back(s);
    }
    return out;
}

inline std::string samples_csv(const std::vector<CalibrationSample>& samples) {
    std::string out = "rsrp_dbm,payload_bytes,measured_energy_j,ce_level,includes_join\n";
    for (const auto& s : samples) {
        char buf[64];
        auto fmt = [&](double v) { return std::string(buf, std::to_chars(buf, buf + sizeof buf, v).ptr); };
        out += fmt(s.rsrp_dbm) + ',' + std::to_string(s.payload_bytes) + ',' + fmt(s.measured_energy_j) + ',' +
               (s.ce_level ? std::to_string(*s.ce_level) : std::string()) + ',' + (s.includes_join ? "1" : "0") + '\n';
    }
    return out;
}

// ---------------------------------------------------------------------------
// Model

inline nbiot::CeLevel sample_ce(const CalibrationSample& s, const nbiot::Config& cfg) {
    return s.ce_level ? nbiot::ce_from_index(*s.ce_level) : nbiot::select_ce_level(s.rsrp_dbm, cfg);
}

/// Time spent in each state during one measured message; energy is linear in the powers.
inline std::array<double, 4> state_durations(const CalibrationSample& s, const nbiot::EnergyProfile& p,
                                             const nbiot::Config& cfg) {
    const auto ce = sample_ce(s, cfg);
    return {s.includes_join ? nbiot::join_duration_s(ce, p, cfg) : 0.0,
            nbiot::transmit_duration_s(ce, s.payload_bytes, p, cfg), p.cdrx.duration_s, p.edrx.duration_s};
}

inline double predict_energy(const CalibrationSample& s, const nbiot::EnergyProfile& p, const nbiot::Config& cfg) {
    const auto d = state_durations(s, p, cfg);
    double e = 0.0;
    for (std::size_t i = 0; i < kAllConstants.size(); ++i)
        e += d[i] * power_of(p, kAllConstants[i]);
    return e;
}

/// Samples with the exact energies predicted by `p` (round-trip oracle input).
inline std::vector<CalibrationSample> synthesize(const std::vector<CalibrationSample>& layout,
                                                 const nbiot::EnergyProfile& p, const nbiot::Config& cfg) {
    auto out = layout;
    for (auto& s : out) s.measured_energy_j = predict_energy(s, p, cfg);
    return out;
}

// ---------------------------------------------------------------------------
// NNLS

struct NnlsResult {
    Eigen::VectorXd x;
    int iterations = 0;
    bool converged = false;
};

/// Lawson-Hanson active-set solver for min ||Ax - b|| subject to x >= 0.
inline NnlsResult nnls(const Eigen::MatrixXd& A, const Eigen::VectorXd& b, double tol = 1e-12, int max_iter = 0) {
    const Eigen::Index n = A.cols();
    if (max_iter <= 0) max_iter = static_cast<int>(30 * n + 30);
    NnlsResult r;
    r.x = Eigen::VectorXd::Zero(n);
    std::vector<bool> passive(static_cast<std::size_t>(n), false);
    const double scale = std::max(1.0, A.cwiseAbs().maxCoeff() * std::max(1.0, b.cwiseAbs().maxCoeff()));

    auto solve_passive = [&]() {
        std::vector<Eigen::Index> idx;
        for (Eigen::Index j = 0; j < n; ++j)
            if (passive[static_cast<std::size_t>(j)]) idx.push_back(j);
        Eigen::MatrixXd Ap(A.rows(), static_cast<Eigen::Index>(idx.size()));
        for (std::size_t k = 0; k < idx.size(); ++k) Ap.col(static_cast<Eigen::Index>(k)) = A.col(idx[k]);
        const Eigen::VectorXd zp = Ap.colPivHouseholderQr().solve(b);
        Eigen::VectorXd z = Eigen::VectorXd::Zero(n);
        for (std::size_t k = 0; k < idx.size(); ++k) z(idx[k]) = zp(static_cast<Eigen::Index>(k));
        return z;
    };

    for (; r.iterations < max_iter; ++r.iterations) {
        const Eigen::VectorXd w = A.transpose() * (b - A * r.x);
        Eigen::Index best = -1;
        for (Eigen::Index j = 0; j < n; ++j)
            if (!passive[static_cast<std::size_t>(j)] && w(j) > tol * scale && (best < 0 || w(j) > w(best))) best = j;
        if (best < 0) {
            r.converged = true;
            break;
        }
        passive[static_cast<std::size_t>(best)] = true;

        for (;;) {
            Eigen::VectorXd z = solve_passive();
            bool feasible = true;
            for (Eigen::Index j = 0; j < n; ++j)
                if (passive[static_cast<std::size_t>(j)] && z(j) <= 0.0) feasible = false;
            if (feasible) {
                r.x = z;
                break;
            }
            double alpha = 1.0;
            for (Eigen::Index j = 0; j < n; ++j)
                if (passive[static_cast<std::size_t>(j)] && z(j) <= 0.0)
                    alpha = std::min(alpha, r.x(j) / (r.x(j) - z(j)));
            r.x += alpha * (z - r.x);
            for (Eigen::Index j = 0; j < n; ++j)
                if (passive[static_cast<std::size_t>(j)] && std::abs(r.x(j)) <= tol) {
                    passive[static_cast<std::size_t>(j)] = false;
                    r.x(j) = 0.0;
                }
        }
    }
    return r;
}

// ---------------------------------------------------------------------------
// Fit

struct LevelResidual {
    int ce_level = 0;
    std::size_t count = 0;
    double measured_min_j = 0.0;
    double measured_max_j = 0.0;
    double measured_mean_j = 0.0;
    double predicted_mean_j = 0.0;
    double predicted_median_j = 0.0;
    double rms_residual_j = 0.0;
};

struct FitResult {
    nbiot::EnergyProfile profile;
    std::vector<Constant> fitted;
    std::vector<LevelResidual> residuals;
    double rms_residual_j = 0.0;
    bool converged = false;
};

inline std::vector<LevelResidual> residuals_by_level(const std::vector<CalibrationSample>& samples,
                                                     const nbiot::EnergyProfile& p, const nbiot::Config& cfg) {
    std::vector<LevelResidual> out;
    for (auto ce : nbiot::kAllCeLevels) {
        LevelResidual lr;
        lr.ce_level = nbiot::index(ce);
        std::vector<double> predicted;
        double sq = 0.0;
        for (const auto& s : samples) {
            if (sample_ce(s, cfg) != ce) continue;
            const double e = predict_energy(s, p, cfg);
            if (lr.count == 0) lr.measured_min_j = lr.measured_max_j = s.measured_energy_j;
            lr.measured_min_j = std::min(lr.measured_min_j, s.measured_energy_j);
            lr.measured_max_j = std::max(lr.measured_max_j, s.measured_energy_j);
            lr.measured_mean_j += s.measured_energy_j;
            lr.predicted_mean_j += e;
            sq += (e - s.measured_energy_j) * (e - s.measured_energy_j);
            predicted.push_back(e);
            ++lr.count;
        }
        if (lr.count == 0) continue;
        const auto n = static_cast<double>(lr.count);
        lr.measured_mean_j /= n;
        lr.predicted_mean_j /= n;
        lr.rms_residual_j = std::sqrt(sq / n);
        std::sort(predicted.begin(), predicted.end());
        const std::size_t m = predicted.size();
        lr.predicted_median_j = m % 2 ? predicted[m / 2] : 0.5 * (predicted[m / 2 - 1] + predicted[m / 2]);
        out.push_back(lr);
    }
    return out;
}

/// Least-squares fit of the selected powers (non-negative); the others stay at
/// their `initial` values and are subtracted from the measurements.
inline FitResult fit(const std::vector<CalibrationSample>& samples, const nbiot::EnergyProfile& initial,
                     const nbiot::Config& cfg, const std::vector<Constant>& constants,
                     std::size_t min_samples_per_level = 3) {
    if (constants.empty()) throw InvalidConfig("nothing to fit");
    if (samples.empty()) throw InvalidConfig("no calibration samples");
    std::array<std::size_t, 3> per_level{};
    for (const auto& s : samples) ++per_level[static_cast<std::size_t>(nbiot::index(sample_ce(s, cfg)))];
    for (std::size_t i = 0; i < per_level.size(); ++i)
        if (per_level[i] > 0 && per_level[i] < min_samples_per_level)
            throw InvalidConfig("CE" + std::to_string(i) + " has " + std::to_string(per_level[i]) +
                                " samples; need at least " + std::to_string(min_samples_per_level));

    const auto rows = static_cast<Eigen::Index>(samples.size());
    const auto cols = static_cast<Eigen::Index>(constants.size());
    Eigen::MatrixXd A(rows, cols);
    Eigen::VectorXd b(rows);
    for (Eigen::Index i = 0; i < rows; ++i) {
        const auto& s = samples[static_cast<std::size_t>(i)];
        const auto d = state_durations(s, initial, cfg);
        double fixed = 0.0;
        for (std::size_t k = 0; k < kAllConstants.size(); ++k) {
            const auto c = kAllConstants[k];
            const auto it = std::find(constants.begin(), constants.end(), c);
            if (it == constants.end())
                fixed += d[k] * power_of(initial, c);
            else
                A(i, it - constants.begin()) = d[k];
        }
        b(i) = s.measured_energy_j - fixed;
    }

    // Columns that take part in any null-space direction cannot be told apart.
    Eigen::FullPivLU<Eigen::MatrixXd> lu(A);
    lu.setThreshold(1e-10);
    if (lu.rank() < cols) {
        const Eigen::MatrixXd kernel = lu.kernel();
        std::vector<std::string> names;
        for (Eigen::Index j = 0; j < cols; ++j)
            if (kernel.row(j).cwiseAbs().maxCoeff() > 1e-9)
                names.emplace_back(to_string(constants[static_cast<std::size_t>(j)]));
        throw RankDeficiency(names);
    }

    const auto sol = nnls(A, b);
    FitResult r;
    r.profile = initial;
    r.fitted = constants;
    r.converged = sol.converged;
    for (Eigen::Index j = 0; j < cols; ++j) power_ref(r.profile, constants[static_cast<std::size_t>(j)]) = sol.x(j);
    r.residuals = residuals_by_level(samples, r.profile, cfg);
    double sq = 0.0;
    for (const auto& s : samples) {
        const double e = predict_energy(s, r.profile, cfg) - s.measured_energy_j;
        sq += e * e;
    }
    r.rms_residual_j = std::sqrt(sq / static_cast<double>(samples.size()));
    return r;
}

// ---------------------------------------------------------------------------
// Crossover tuning

/// Smallest LoRa transmit power (W) at which the SF12 / CE2 crossover is at or
/// below `target_bytes`. Raising that power only moves the crossover down.
inline double tune_lora_transmit_power(ProfileSet p, int target_bytes, double lo_w = 1e-4, double hi_w = 10.0) {
    auto crosses_by_target = [&](double w) {
        p.lora_energy.p_transmit_w = w;
        const auto c = sim::crossover_payload(p);
        return c && *c <= target_bytes;
    };
    if (!crosses_by_target(hi_w)) throw InvalidConfig("crossover target unreachable with LoRa power up to 10 W");
    if (crosses_by_target(lo_w)) return lo_w;
    for (int i = 0; i < 60; ++i) {
        const double mid = 0.5 * (lo_w + hi_w);
        (crosses_by_target(mid) ? hi_w : lo_w) = mid;
    }
    return hi_w;
}

} // namespace lpwan::calib
