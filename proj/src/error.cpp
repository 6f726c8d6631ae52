#include "soz/error.hpp"

namespace soz {

ParseError::ParseError(const std::string& what, std::size_t byte_offset)
    : Error(what + " (at byte offset " + std::to_string(byte_offset) + ")"),
      offset_(byte_offset) {}

}  // namespace soz
