#pragma once

#include <stdexcept>
#include <string>

namespace bpi {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Filesystem access failed (open, list, stat, write).
struct IoError : Error {
  using Error::Error;
};

/// A file exists but is not in the expected on-disk format.
struct FormatError : Error {
  using Error::Error;
};

/// Line-oriented parse failure; carries the 1-based line number.
struct ParseError : Error {
  ParseError(std::size_t line_no, const std::string& what)
      : Error("line " + std::to_string(line_no) + ": " + what), line(line_no) {}
  std::size_t line;
};

/// A mutating operation was pointed at a directory without the fixture marker.
struct GuardError : Error {
  using Error::Error;
};

/// Authenticated decryption or MAC verification failed.
struct AuthError : Error {
  using Error::Error;
};

struct MacError : Error {
  using Error::Error;
};

/// Dotted-path navigation tried to descend through a scalar.
struct PathTypeError : Error {
  using Error::Error;
};

/// Symlink resolution exceeded the expansion budget.
struct LoopError : Error {
  using Error::Error;
};

struct LaunchError : Error {
  using Error::Error;
};

/// Re-encryption after a session failed; plaintext was deliberately kept.
struct ReencryptError : Error {
  using Error::Error;
};

struct MacSeedMissing : Error {
  using Error::Error;
};

}  // namespace bpi
