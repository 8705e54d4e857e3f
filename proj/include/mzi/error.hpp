#pragma once

#include <stdexcept>
#include <string>

namespace mzi {

// Base of every error the library throws.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct PreconditionError : Error {
  using Error::Error;
};

struct ConfigurationError : Error {
  using Error::Error;
};

struct GeometryError : Error {
  using Error::Error;
};

// Spectral grid too small: mass reached the periodic boundary.
struct DomainTooSmallError : Error {
  using Error::Error;
};

// Replay produced a different outcome than the recorded one.
struct MismatchError : Error {
  MismatchError(const std::string& what, std::size_t first_run)
      : Error(what), first_differing_run(first_run) {}
  std::size_t first_differing_run;
};

}  // namespace mzi
