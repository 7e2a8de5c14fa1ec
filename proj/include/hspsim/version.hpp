#pragma once

namespace hspsim {

/// Tool version embedded in every output file's provenance block.
inline constexpr const char* kVersion = "1.0.0";

}  // namespace hspsim
