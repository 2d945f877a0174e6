#ifndef GWCOSAL_WEIGHTS_IO_HPP
#define GWCOSAL_WEIGHTS_IO_HPP

#include <string>
#include <utility>

#include "gwcosal/net.hpp"

namespace gwcosal::pipeline {

// Binary weights file ("GWCS"):
//   magic "GWCS" | u32 version (1) | u32 cfg_len | cfg JSON (net-config echo)
//   | u32 tensor count | per tensor:
//     u32 name_len | name UTF-8 | u8 precision (0 = f32, 1 = f64)
//     | u32 rank (4) | u32 dims[rank] | little-endian row-major values
// Tensors appear in sorted-name order; save -> load round-trips bit-exactly.
// Loading validates magic, version, config echo, and the exact parameter
// name/shape set the config implies, and rejects anything else before
// returning. Velocities are transient optimizer state and are not stored.

void save_weights(const net::ParamStore<float>& params, const net::NetConfig& cfg,
                  const std::string& path);

// When `expect` is given, a config echo differing from it is rejected.
std::pair<net::ParamStore<float>, net::NetConfig> load_weights(
    const std::string& path, const net::NetConfig* expect = nullptr);

} // namespace gwcosal::pipeline

#endif
