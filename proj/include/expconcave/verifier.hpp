#pragma once

#include <string>
#include <utility>

namespace expconcave {

/// Outcome of one numeric inequality check lhs <= rhs + tolerance.
struct VerifierRecord {
  std::string name;
  double lhs = 0.0;
  double rhs = 0.0;
  double tolerance = 0.0;
  bool pass = false;

  friend bool operator==(const VerifierRecord&, const VerifierRecord&) = default;
};

inline VerifierRecord make_record(std::string name, double lhs, double rhs, double tolerance) {
  return VerifierRecord{std::move(name), lhs, rhs, tolerance, lhs <= rhs + tolerance};
}

}  // namespace expconcave
