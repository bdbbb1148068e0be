#pragma once

#include <string>
#include <string_view>

namespace sfpe {

/// SHA-1 hex digest, used as the content hash of problem specifications in
/// run records (same construction git applies to blobs, minus the header).
std::string sha1_hex(std::string_view data);

}  // namespace sfpe
