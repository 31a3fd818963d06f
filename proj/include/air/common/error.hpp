// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace air {

/// Base class for every error raised by the engine.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operand shapes do not conform.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// A configuration violates one of its constraints.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// A call violated an API precondition.
class ContractError : public Error {
 public:
  using Error::Error;
};

/// Malformed external data (image files, checkpoints, config text).
class ParseError : public Error {
 public:
  using Error::Error;
};

class FileError : public Error {
 public:
  using Error::Error;
};

/// Unknown key in a registry (e.g. a task without a head/tail).
class LookupError : public Error {
 public:
  using Error::Error;
};

}  // namespace air
