#pragma once

#include <stdexcept>
#include <string>

namespace chartdet {

// Malformed or out-of-contract external input (JSON documents, config files).
class SchemaError : public std::runtime_error {
public:
  explicit SchemaError(const std::string& what) : std::runtime_error(what) {}
};

// Taxonomy refinement cannot proceed (e.g. missing plot-area annotation).
class RefinementError : public std::runtime_error {
public:
  explicit RefinementError(const std::string& what) : std::runtime_error(what) {}
};

// A fixed-capacity contract was exceeded (e.g. positional-encoder block size).
class CapacityError : public std::runtime_error {
public:
  explicit CapacityError(const std::string& what) : std::runtime_error(what) {}
};

// Operation invoked on an object in the wrong state (e.g. uninitialized model).
class StateError : public std::runtime_error {
public:
  explicit StateError(const std::string& what) : std::runtime_error(what) {}
};

// Training aborted (NaN loss, unreadable dataset, ...).
class TrainError : public std::runtime_error {
public:
  explicit TrainError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace chartdet
