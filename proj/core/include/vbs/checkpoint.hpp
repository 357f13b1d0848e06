#pragma once

#include <string>

#include "vbs/params.hpp"

namespace vbs {

// Binary checkpoint: magic "VBSG", u32 version, length-prefixed config echo,
// u64 parameter count, then per parameter: u32 name length, name bytes,
// u32 rank, u64 extents, row-major little-endian f64 values. Round-trips
// byte-exactly.
void save_checkpoint(const ParameterSet& params, const std::string& config_echo,
                     const std::string& path);

struct LoadedCheckpoint {
    std::string config_echo;
};

// Loads into an already-initialized ParameterSet; names, order, and shapes
// must match exactly.
LoadedCheckpoint load_checkpoint(ParameterSet& params, const std::string& path);

}  // namespace vbs
