#pragma once

#include <string>

#include "vat/nd/adam.hpp"

namespace vat::nd {

// Checkpoint container (little-endian):
//   magic "VATC" | u32 version (1) | u64 parameter count
//   per parameter: u32 name length | name bytes | u32 rank | i32 dims[rank]
//                  | float32 data[product(dims)]
// Round-trips bit-exactly.
void save_checkpoint(const ParamStore& store, const std::string& path);

// Loads into an already-constructed store: every stored parameter must exist
// with a matching shape. Extra parameters in the file or the store are errors
// (checkpoints are exact snapshots, not partial overlays).
void load_checkpoint(ParamStore& store, const std::string& path);

}  // namespace vat::nd
