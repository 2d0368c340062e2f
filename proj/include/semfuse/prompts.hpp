#pragma once

#include <filesystem>
#include <string>

namespace semfuse {

struct PromptSet {
  std::string caption;
  std::string tag;
  std::string edge;
  std::string match;
  std::string score;

  // Prompts compiled into the binary.
  static PromptSet builtin();
  // Reads caption.txt, tag.txt, edge.txt, match.txt, score.txt from `dir`;
  // files that are missing keep the built-in text.
  static PromptSet load(const std::filesystem::path& dir);
};

}  // namespace semfuse
