#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace lpwan {

/// Base for every error raised by the models.
class Error : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

class InvalidConfig : public Error {
  public:
    using Error::Error;
};

/// A single LoRa frame was asked to carry more than the data-rate cap allows.
class FragmentationRequired : public Error {
  public:
    FragmentationRequired(int requested, int limit)
        : Error("payload of " + std::to_string(requested) + " B exceeds the single-frame limit of " +
                std::to_string(limit) + " B; fragment first"),
          requested_bytes(requested), limit_bytes(limit) {}

    int requested_bytes;
    int limit_bytes;
};

class PayloadExceeded : public Error {
  public:
    PayloadExceeded(int requested, int limit)
        : Error("payload of " + std::to_string(requested) + " B exceeds the " + std::to_string(limit) +
                " B NB-IoT limit"),
          requested_bytes(requested), limit_bytes(limit) {}

    int requested_bytes;
    int limit_bytes;
};

class ProtocolViolation : public Error {
  public:
    using Error::Error;
};

/// Structured-input validation failure; `path` names the offending field (e.g. `nbiot.energy.cdrx.power_w`).
class SchemaError : public Error {
  public:
    SchemaError(std::string field_path, const std::string& what)
        : Error(field_path.empty() ? what : field_path + ": " + what), path(std::move(field_path)) {}

    std::string path;
};

class RankDeficiency : public Error {
  public:
    explicit RankDeficiency(std::vector<std::string> unresolved)
        : Error(make_message(unresolved)), unresolvable(std::move(unresolved)) {}

    std::vector<std::string> unresolvable;

  private:
    static std::string make_message(const std::vector<std::string>& names) {
        std::string msg = "calibration is rank deficient; cannot resolve:";
        for (const auto& n : names) msg += " " + n;
        return msg;
    }
};

} // namespace lpwan
