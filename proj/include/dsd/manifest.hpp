#pragma once

#include <string>

namespace dsd {

// FNV-1a 64-bit digests as 16 hex chars. Cheap content fingerprints for run
// manifests; not cryptographic.
std::string file_digest(const std::string& path);
std::string string_digest(const std::string& content);

}  // namespace dsd
