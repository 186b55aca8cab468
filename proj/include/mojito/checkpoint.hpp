#pragma once

// Checkpoint persistence: a little-endian binary dump of every parameter
// (path, shape, values) together with its Adam state, preceded by the magic
// line "MOJITO-CKPT-1" and a snapshot of the run configuration text.

#include <string>

#include "mojito/param_store.hpp"

namespace mojito {

inline constexpr const char* kCheckpointMagic = "MOJITO-CKPT-1\n";

std::string serialize_checkpoint(const ParameterStore& store, const std::string& config_text);

void write_checkpoint(const std::string& path, const ParameterStore& store,
                      const std::string& config_text);

// Reads only the embedded configuration snapshot.
std::string checkpoint_config_text(const std::string& bytes);
std::string read_checkpoint_config(const std::string& path);

// Loads parameter values and Adam state into an existing store. The store
// must contain exactly the checkpointed parameters with matching shapes.
void load_checkpoint_bytes(const std::string& bytes, ParameterStore& store);
void load_checkpoint(const std::string& path, ParameterStore& store);

}  // namespace mojito
