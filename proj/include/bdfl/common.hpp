#pragma once

#include <cstdint>
#include <string>

namespace bdfl {

using ClientId = std::string;
using AuditorId = std::string;
using SimTime = std::int64_t;   // integer ticks; one reporting round per tick
using Round = std::int64_t;
using Tokens = double;

}  // namespace bdfl
