#pragma once

#include <stdexcept>
#include <string>

namespace sbm {

// Argument outside the documented contract (bad spec, measure, word, config).
class SpecError : public std::invalid_argument {
 public:
  explicit SpecError(const std::string& what) : std::invalid_argument(what) {}
};

// Problem size beyond the configured desk-scale limits.
class ResourceError : public std::runtime_error {
 public:
  explicit ResourceError(const std::string& what) : std::runtime_error(what) {}
};

// Root tracking of the resolvent cubic could not disambiguate branches.
class BranchError : public std::runtime_error {
 public:
  explicit BranchError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace sbm
