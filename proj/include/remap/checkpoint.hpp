#pragma once

#include <nlohmann/json.hpp>
#include <string>

#include "remap/mlp.hpp"

namespace remap {

// Weights stored as flat row-major arrays; activation by name. Loading
// validates dimensions against the array lengths.
nlohmann::json mlp_to_json(const Mlp& net);
Mlp mlp_from_json(const nlohmann::json& j);

// Checkpoint envelope:
//   { "kind": ..., "tool_version": ..., "content_hash": ..., "payload": ... }
// content_hash covers the serialized payload, so any edit is detectable.
void write_checkpoint(const std::string& path, const std::string& kind,
                      const nlohmann::json& payload);

// Verifies the kind and the hash; throws ConfigError on either mismatch.
nlohmann::json read_checkpoint(const std::string& path, const std::string& kind);

}  // namespace remap
