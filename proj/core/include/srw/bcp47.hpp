#pragma once

#include <string_view>

namespace srw {

/// Structural (syntax-only) BCP-47 check following the RFC 5646 grammar:
/// langtag, private-use and grandfathered forms, case-insensitive.
/// No registry lookup is performed.
bool is_well_formed_language_tag(std::string_view tag);

}  // namespace srw
