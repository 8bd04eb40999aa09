#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>

#include "sofia/online.hpp"

namespace sofia {

inline constexpr char kCheckpointMagic[8] = {'S', 'O', 'F', 'I', 'A', 'C', 'K', 'P'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Binary snapshot of a StreamState: magic, format version, then every field as
/// little-endian 64-bit words. Doubles are stored bit-exactly.
void save_state(const StreamState& state, std::ostream& out);
void save_state(const StreamState& state, const std::filesystem::path& path);

/// Throws ConfigError on a wrong magic, unknown version or truncated input.
StreamState load_state(std::istream& in);
StreamState load_state(const std::filesystem::path& path);

}  // namespace sofia
