#ifndef TINYRLHF_ERROR_HPP_
#define TINYRLHF_ERROR_HPP_

#include <stdexcept>
#include <string>
#include <string_view>

namespace tinyrlhf {

// Machine-readable error category. The CLI prints it as `error kind=<name>`.
enum class ErrorKind {
  kShape,
  kInvalidArgument,
  kNumeric,
  kMissingInput,
  kSchema,
  kVersionMismatch,
  kChecksum,
  kConfig,
  kLocked,
  kIo,
};

std::string_view ErrorKindName(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void Fail(ErrorKind kind, const std::string& message) {
  throw Error(kind, message);
}

}  // namespace tinyrlhf

#endif  // TINYRLHF_ERROR_HPP_
