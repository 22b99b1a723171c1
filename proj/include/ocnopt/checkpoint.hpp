#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ocnopt/linalg.hpp"

namespace ocnopt {

/// Versioned binary training snapshot: parameters with a shape manifest,
/// the random generator state, the optimizer's opaque state blob and the
/// loop counters needed to continue a run exactly where it stopped.
/// Serialization is deterministic, so save -> load -> save is byte-stable.
struct Checkpoint {
  std::uint32_t version = 1;
  std::vector<Vec> params;  // per layer, in network order
  std::string rng_state;
  std::string optimizer_state;
  std::uint64_t step = 0;
  std::uint64_t epoch = 0;
  double ode_horizon = 0.0;  // 0 when not an ODE run
  std::string extra;         // mode-specific state (players, bandit)
};

void save_checkpoint(const std::string& path, const Checkpoint& ck);

/// Throws parse_error on bad magic, unsupported version or truncation.
Checkpoint load_checkpoint(const std::string& path);

}  // namespace ocnopt
