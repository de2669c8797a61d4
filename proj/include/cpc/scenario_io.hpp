#ifndef CPC_SCENARIO_IO_HPP_
#define CPC_SCENARIO_IO_HPP_

#include <string>
#include <string_view>

#include "cpc/scenario.hpp"

namespace cpc {

/// Parses and validates a scenario document (JSON, "version": 1).
/// Unknown fields, wrong types and dangling references are all reported,
/// each with its JSON path, in one ScenarioError.
Scenario parse_scenario(std::string_view text);

/// Reads a file and parses it. I/O failures throw std::runtime_error.
Scenario load_scenario(const std::string& path);

/// Canonical document for `scenario`: fixed key order, two-space indent and
/// a trailing newline, so equal scenarios always produce equal bytes.
std::string emit_scenario(const Scenario& scenario);

}  // namespace cpc

#endif  // CPC_SCENARIO_IO_HPP_
