#pragma once

#include <stdexcept>
#include <string>

namespace dcmwalk {

/// Invalid scenario, gait or controller configuration.
class ConfigError : public std::runtime_error
{
public:
  using std::runtime_error::runtime_error;
};

}  // namespace dcmwalk
