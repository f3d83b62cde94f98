#pragma once

#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "rydpulse/core_model.hpp"

namespace rydpulse {

/// Collective coupling used by every shipped scenario, rad/us.
extern const double kDefaultCouplingG;

std::vector<std::string> preset_names();

/// Configuration document of a shipped scenario. Throws ConfigError for an
/// unknown name.
nlohmann::json preset_document(std::string_view name);

/// preset_document passed through validate_config.
RunConfig preset(std::string_view name);

}  // namespace rydpulse
