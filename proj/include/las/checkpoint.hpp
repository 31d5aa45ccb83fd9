#pragma once

#include <string>

#include "las/net.hpp"

namespace las {

// LASN checkpoint, byte layout:
//   "LASN" | version u8=1 | flags u8 (bit0: supernet) | spec digest u64 LE
//   | assignment string (u16 LE length + bytes)
//   | supernet only: layout table, u8 n then u16 LE capacity per group
//   | learnable tensors, float32 LE, declaration order
//   | bn running stats, float32 LE, declaration order
// Round-trips are bitwise exact.
void save_checkpoint(const SearchSpaceSpec& spec, const NetParams<float>& params,
                     const LayerAssignment& a, bool supernet, const std::string& path);

Network<float> load_network_checkpoint(const std::string& path, const SearchSpaceSpec& spec);

// loads a supernet-flagged checkpoint into freshly shaped parameter blocks
NetParams<float> load_supernet_checkpoint(const std::string& path, const SearchSpaceSpec& spec);

}  // namespace las
