#pragma once

#include <stdexcept>

namespace tbs {

/// Malformed, missing or unreadable on-disk data.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace tbs
