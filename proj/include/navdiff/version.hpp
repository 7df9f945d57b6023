#pragma once

#include <cstdint>

namespace navdiff {

// Frozen-encoder version constants. The vision projection and language hash
// are deterministic functions of these seeds; changing any of them is a
// breaking change for existing checkpoints, so the version string is stamped
// into every checkpoint's metadata and verified at load.
inline constexpr const char* kEncoderVersion = "enc-v1";
inline constexpr std::uint64_t kVisionEncoderSeed = 0x76697331ULL;   // "vis1"
inline constexpr std::uint64_t kLanguageHashSeed = 0x6c616e31ULL;    // "lan1"

inline constexpr const char* kCheckpointMagic = "NAVDIFF1";

}  // namespace navdiff
