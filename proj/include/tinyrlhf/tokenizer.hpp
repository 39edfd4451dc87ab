#ifndef TINYRLHF_TOKENIZER_HPP_
#define TINYRLHF_TOKENIZER_HPP_

#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace tinyrlhf {

// Byte-level text mode: byte b maps to token b + 3, after PAD/BOS/EOS.
inline constexpr int kByteVocabSize = 256 + 3;

// Instruction template that frames every text-mode prompt.
inline constexpr std::string_view kInstructionPreamble =
    "Below is an instruction that describes a task. Write a response that "
    "appropriately completes the request. ### USER: ";
inline constexpr std::string_view kAssistantTag = " ASSISTANT: ";

std::vector<int> encode_bytes(std::string_view text);
// Drops special tokens; throws on ids outside the byte vocabulary.
std::string decode_bytes(std::span<const int> tokens);

// BOS + preamble + instruction + assistant tag, byte-encoded.
std::vector<int> encode_instruction_prompt(std::string_view instruction);
std::string render_instruction_prompt(std::string_view instruction);

}  // namespace tinyrlhf

#endif  // TINYRLHF_TOKENIZER_HPP_
