#pragma once

// Scenario files: a JSON document with the sections gait, vertical, mpc,
// pushes, contact and sim (plus an optional free-text description). Every
// field is optional and falls back to the defaults of the C++ types; unknown
// keys and wrongly typed values are rejected with the line they occur on.

#include "dcmwalk/simulator.hpp"

#include <filesystem>
#include <string>

namespace dcmwalk {

/// Throws ConfigError with "<source>:<line>: <message>" diagnostics.
[[nodiscard]] Scenario parse_scenario(const std::string& text, const std::string& source = "<scenario>");

/// Reads and parses a scenario file. Unreadable files raise ConfigError too.
[[nodiscard]] Scenario load_scenario(const std::filesystem::path& path);

/// Every resolved field of `s` in the file schema, so parse_scenario(dump)
/// reproduces the scenario.
[[nodiscard]] std::string scenario_to_json(const Scenario& s, int indent = 2);

}  // namespace dcmwalk
