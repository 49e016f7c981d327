#pragma once

#include <stdexcept>
#include <string>

#include "promptevo/types.hpp"

namespace pevo {

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// File could not be opened, read, or written.
class CheckpointIoError : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};

// File parsed but carries an unsupported version number.
class CheckpointVersionError : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};

// File is not valid JSON or is missing/mistyping required fields. Truncated
// files land here; no partial state is ever returned.
class CheckpointSchemaError : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};

inline constexpr int kCheckpointVersion = 1;

// Writes via a temp file + rename so an interrupted save cannot corrupt the
// previous checkpoint.
void save_checkpoint(const RunState& state, const std::string& path);

RunState load_checkpoint(const std::string& path);

}  // namespace pevo
