#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace groundloom {

using TokenId = std::int32_t;
using TokenSeq = std::vector<TokenId>;

// Error taxonomy shared across modules. Everything derives from Error so
// callers can distinguish usage mistakes from data corruption at the CLI
// boundary.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ConfigError : Error {
  using Error::Error;
};
struct ArgumentError : Error {
  using Error::Error;
};
struct StateError : Error {
  using Error::Error;
};
struct LengthError : Error {
  using Error::Error;
};
struct UnrealizableError : Error {
  using Error::Error;
};
struct InfeasibleTargetError : Error {
  using Error::Error;
};
struct CorruptionError : Error {
  using Error::Error;
};
struct VersionError : Error {
  using Error::Error;
};
struct DivergenceError : Error {
  using Error::Error;
};
struct IoError : Error {
  using Error::Error;
};

inline constexpr const char* kToolVersion = "0.1.0";

}  // namespace groundloom
