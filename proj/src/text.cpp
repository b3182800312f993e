#include "kgdialog/text.hpp"

#include <algorithm>
#include <cctype>

namespace kgdialog {

namespace {

bool is_word_char(char c) {
  return std::isalnum(static_cast<unsigned char>(c)) != 0;
}

}  // namespace

std::string to_lower(std::string_view text) {
  std::string out(text);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::string current;
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (is_word_char(c)) {
      current.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    } else if (c == '\'' && !current.empty() && i + 1 < text.size() &&
               is_word_char(text[i + 1])) {
      current.push_back('\'');
    } else if (!current.empty()) {
      tokens.push_back(std::move(current));
      current.clear();
    }
  }
  if (!current.empty()) tokens.push_back(std::move(current));
  return tokens;
}

std::size_t count_tokens(std::string_view text) { return tokenize(text).size(); }

std::size_t find_phrase(std::span<const std::string> tokens,
                        std::span<const std::string> phrase) {
  if (phrase.empty() || phrase.size() > tokens.size()) return std::string::npos;
  auto it = std::search(tokens.begin(), tokens.end(), phrase.begin(), phrase.end());
  if (it == tokens.end()) return std::string::npos;
  return static_cast<std::size_t>(it - tokens.begin());
}

}  // namespace kgdialog
