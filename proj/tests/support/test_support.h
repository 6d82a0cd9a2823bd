#pragma once

#include <gtest/gtest.h>

#include <functional>

#include "planner/errors.h"

namespace planner::testing {

// Code of the ProtocolError `f` throws; records a failure if it throws none.
inline Errc code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const ProtocolError& e) {
    return e.code();
  }
  ADD_FAILURE() << "no ProtocolError thrown";
  return Errc::kConfigInvalid;
}

}  // namespace planner::testing
