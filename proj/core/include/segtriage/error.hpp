#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace segtriage {

/// One violated invariant, located by field name and (optionally) a flat index.
struct ValidationIssue {
  std::string code;
  std::string field;
  std::string message;

  bool operator==(const ValidationIssue&) const = default;
};

using ValidationReport = std::vector<ValidationIssue>;

std::string format_report(const ValidationReport& report);

/// Thrown when an in-memory value violates its type invariants.
class ValidationError : public std::runtime_error {
 public:
  explicit ValidationError(ValidationReport report);

  const ValidationReport& report() const noexcept { return report_; }

 private:
  ValidationReport report_;
};

/// Dimension or shape mismatch between operands of a metric.
class DimensionMismatch : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

}  // namespace segtriage
