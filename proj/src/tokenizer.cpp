#include "tinyrlhf/tokenizer.hpp"

#include "tinyrlhf/error.hpp"
#include "tinyrlhf/transformer.hpp"

namespace tinyrlhf {

std::vector<int> encode_bytes(std::string_view text) {
  std::vector<int> out;
  out.reserve(text.size());
  for (unsigned char c : text) out.push_back(static_cast<int>(c) + kFirstContentToken);
  return out;
}

std::string decode_bytes(std::span<const int> tokens) {
  std::string out;
  for (int t : tokens) {
    if (t < 0 || t >= kByteVocabSize) {
      Fail(ErrorKind::kInvalidArgument,
           "token " + std::to_string(t) + " is not a byte token");
    }
    if (t >= kFirstContentToken) out.push_back(static_cast<char>(t - kFirstContentToken));
  }
  return out;
}

std::string render_instruction_prompt(std::string_view instruction) {
  std::string out(kInstructionPreamble);
  out.append(instruction);
  out.append(kAssistantTag);
  return out;
}

std::vector<int> encode_instruction_prompt(std::string_view instruction) {
  std::vector<int> out{kBosToken};
  const std::vector<int> body = encode_bytes(render_instruction_prompt(instruction));
  out.insert(out.end(), body.begin(), body.end());
  return out;
}

}  // namespace tinyrlhf
