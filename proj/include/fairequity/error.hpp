#pragma once
#ifndef FAIREQUITY_ERROR_HPP
#define FAIREQUITY_ERROR_HPP

#include <stdexcept>
#include <string>
#include <utility>

namespace fairequity {

/// Error raised by any module. `module()` names the component that failed so
/// the CLI can report it and exit nonzero.
class Error : public std::runtime_error {
 public:
  Error(std::string module, const std::string& what)
      : std::runtime_error(module + ": " + what), module_(std::move(module)) {}

  const std::string& module() const noexcept { return module_; }

 private:
  std::string module_;
};

}  // namespace fairequity

#endif  // FAIREQUITY_ERROR_HPP
