#pragma once

#include <stdexcept>
#include <string>

namespace lfp {

// Base for every error the library raises. The CLI maps subclasses onto exit
// codes, so keep the hierarchy flat.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

// Argument outside the operation's domain (bad coordinates, excluded rows...).
class DomainError : public Error {
public:
  using Error::Error;
};

// Malformed serialized data: PPM headers, manifests, weight files.
class FormatError : public Error {
public:
  using Error::Error;
};

class IoError : public Error {
public:
  using Error::Error;
};

class ConfigError : public Error {
public:
  using Error::Error;
};

// Non-finite loss or parameters during optimization.
class TrainingError : public Error {
public:
  using Error::Error;
};

class ModelLoadError : public Error {
public:
  using Error::Error;
};

} // namespace lfp
