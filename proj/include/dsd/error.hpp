#pragma once

#include <stdexcept>
#include <string>

namespace dsd {

// Error categories map 1:1 onto CLI exit codes.
enum class ErrorKind {
  usage = 2,       // bad flags / bad invocation
  data = 3,        // malformed or inconsistent input data
  divergence = 4,  // training produced non-finite values
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& msg) : std::runtime_error(msg), kind_(kind) {}
  ErrorKind kind() const { return kind_; }
  int exit_code() const { return static_cast<int>(kind_); }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail_usage(const std::string& msg) { throw Error(ErrorKind::usage, msg); }
[[noreturn]] inline void fail_data(const std::string& msg) { throw Error(ErrorKind::data, msg); }
[[noreturn]] inline void fail_divergence(const std::string& msg) { throw Error(ErrorKind::divergence, msg); }

}  // namespace dsd
