// SHA-256, used for prompt content hashes and request fingerprints.
// Self-contained so that hashes are stable across platforms and builds.
#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace ctieval {

std::string sha256_hex(std::string_view data);

}  // namespace ctieval
