#pragma once

#include <stdexcept>
#include <string>

namespace aaa {

// Bad or inconsistent input data: files, shapes, corpus contents.
class DataError : public std::runtime_error {
 public:
  explicit DataError(const std::string& what) : std::runtime_error(what) {}
};

// Non-finite values or a numerical routine that cannot produce a result.
class NumericError : public std::runtime_error {
 public:
  explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace aaa
