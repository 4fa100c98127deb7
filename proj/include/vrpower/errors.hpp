#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace vrpower {

// Bad caller input: shape mismatches, out-of-range sizes, invalid options.
class argument_error : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Floating-point trouble: underflow in normalize, non-finite intermediates.
class numeric_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Iterate left the trust region (non-finite or norm outside [1e-8, 1e8]).
class diverged_error : public numeric_error {
 public:
  diverged_error(std::size_t epoch, std::size_t step, const std::string& what)
      : numeric_error(what), epoch(epoch), step(step) {}
  std::size_t epoch;
  std::size_t step;
};

// Input file could not be parsed; line is 1-based.
class parse_error : public std::runtime_error {
 public:
  parse_error(std::size_t line, const std::string& what)
      : std::runtime_error("line " + std::to_string(line) + ": " + what), line(line) {}
  std::size_t line;
};

// Problem size exceeds a hard enumeration or caching limit.
class capacity_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class io_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace vrpower
