#pragma once

#include <string>

#include "locrank/config.hpp"
#include "locrank/model.hpp"
#include "locrank/optim.hpp"

namespace locrank {

// Checkpoint file layout (little-endian):
//   magic "LRK1", format version u32,
//   config: u32 byte length + key=value text,
//   tensor count u32, then per tensor:
//     u32 name length + name bytes, u32 rank, u32 dims..., f64 payload.
// Parameter tensors are stored as "param.<path>", optimizer velocities as
// "velocity.<path>". Round-trip is bit-exact.
struct Checkpoint {
    RunConfig config;
    ModelParams params;
    OptimState optim;
};

void save_checkpoint(const std::string& path, const ModelParams& params, const OptimState& optim,
                     const RunConfig& config);
Checkpoint load_checkpoint(const std::string& path);

// Stage-2 warm start: copy every tensor from `from` whose name and shape
// match into `into` (the freshly initialized stage-2 parameters). The final
// scoring layer changes width between stages, so it keeps its fresh
// initialization. Returns the adopted parameter paths.
std::vector<std::string> adopt_matching(ModelParams& into, const ModelParams& from);

}  // namespace locrank
