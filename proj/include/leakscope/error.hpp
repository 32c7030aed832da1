#pragma once

#include <stdexcept>
#include <string>

namespace leakscope {

// Base of everything the library throws.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Violated precondition on caller-supplied values (sizes, ranges, shapes).
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

// Image or embedding file that cannot be decoded.
class FormatError : public Error {
 public:
  using Error::Error;
};

// Training diverged (non-finite gradient or parameter).
class TrainingError : public Error {
 public:
  TrainingError(const std::string& what, std::size_t epoch, std::size_t batch)
      : Error(what + " (epoch " + std::to_string(epoch) + ", batch " +
              std::to_string(batch) + ")"),
        epoch_(epoch),
        batch_(batch) {}

  std::size_t epoch() const noexcept { return epoch_; }
  std::size_t batch() const noexcept { return batch_; }

 private:
  std::size_t epoch_;
  std::size_t batch_;
};

}  // namespace leakscope
