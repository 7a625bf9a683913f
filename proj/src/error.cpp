#include "ecgr/error.hpp"

namespace ecgr {

const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kInvalidInput: return "invalid-input";
    case ErrorKind::kConfig: return "config";
    case ErrorKind::kSchema: return "schema";
    case ErrorKind::kCorruptFile: return "corrupt-file";
    case ErrorKind::kBadMagic: return "bad-magic";
    case ErrorKind::kVersionMismatch: return "version-mismatch";
    case ErrorKind::kShapeMismatch: return "shape-mismatch";
    case ErrorKind::kIo: return "io";
    case ErrorKind::kNoBeats: return "no-beats";
    case ErrorKind::kNonFinite: return "non-finite";
  }
  return "unknown";
}

}  // namespace ecgr
