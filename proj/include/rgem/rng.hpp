#pragma once

#include <cstdint>
#include <random>

namespace rgem {

using Rng = std::mt19937_64;

/// SplitMix64 finaliser; bijective mixing of a 64-bit word.
constexpr std::uint64_t splitmix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Named stream identifiers. Agent i's sampling stream is kAgentStreamBase + i.
inline constexpr std::uint64_t kSelectionStream = 0x53454c4543540000ULL;       // "SELECT"
inline constexpr std::uint64_t kResponsivenessStream = 0x524553504f4e0000ULL;  // "RESPON"
inline constexpr std::uint64_t kAuditStream = 0x4155444954000000ULL;           // "AUDIT"
inline constexpr std::uint64_t kProblemStream = 0x50524f424c454dULL;           // "PROBLEM"
inline constexpr std::uint64_t kAgentStreamBase = 0x4147454e54000000ULL;       // "AGENT"

/// Seed for an independent stream derived from (master seed, stream id).
constexpr std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream) {
  return splitmix64(splitmix64(master) ^ splitmix64(stream + 0x632be59bd9b4e019ULL));
}

inline Rng make_stream(std::uint64_t master, std::uint64_t stream) {
  return Rng(derive_seed(master, stream));
}

inline Rng agent_stream(std::uint64_t master, std::uint64_t agent) {
  return make_stream(master, kAgentStreamBase + agent);
}

}  // namespace rgem
