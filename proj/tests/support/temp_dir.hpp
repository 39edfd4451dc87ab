#ifndef TINYRLHF_TESTS_TEMP_DIR_HPP_
#define TINYRLHF_TESTS_TEMP_DIR_HPP_

#include <unistd.h>

#include <atomic>
#include <filesystem>
#include <string>

#include "tinyrlhf/error.hpp"

namespace oracle {

// Fresh directory under the system temp path, removed with its contents.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("tinyrlhf_" + tag + "_" + std::to_string(::getpid()) + "_" +
             std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

// True when `fn` throws a tinyrlhf::Error of exactly `kind`.
template <typename Fn>
bool throws_kind(Fn&& fn, tinyrlhf::ErrorKind kind) {
  try {
    fn();
  } catch (const tinyrlhf::Error& e) {
    return e.kind() == kind;
  }
  return false;
}

}  // namespace oracle

#endif  // TINYRLHF_TESTS_TEMP_DIR_HPP_
