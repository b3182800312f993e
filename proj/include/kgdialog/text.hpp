#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace kgdialog {

// Lowercased tokens. A token is a maximal run of ASCII letters/digits, with
// an inner apostrophe kept ("don't" is one token). Everything else splits.
std::vector<std::string> tokenize(std::string_view text);

std::size_t count_tokens(std::string_view text);

std::string to_lower(std::string_view text);

// Position of the first occurrence of `phrase` (already tokenized) as a
// contiguous run inside `tokens`, or npos.
std::size_t find_phrase(std::span<const std::string> tokens,
                        std::span<const std::string> phrase);

}  // namespace kgdialog
