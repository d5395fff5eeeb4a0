#pragma once

#include <string>

namespace evalkit {

// Embedded documentation card for a built-in module; nullptr when the id
// is not built-in. Cards are markdown with the six required sections.
const char* canonical_card_text(const std::string& id);

inline constexpr const char* kCardSections[6] = {
    "Description",       "Intended Use", "Output Range",
    "Usage Examples",    "Limitations and Biases", "Citation"};

}  // namespace evalkit
