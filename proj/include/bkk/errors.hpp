#ifndef BKK_ERRORS_HPP
#define BKK_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace bkk {

// Quadrature error estimate stayed above tolerance after the subdivision budget.
struct ConvergenceFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Hunt subtraction produced p < r beyond tolerance.
struct NegativeDensity : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// PDE far boundary still carries non-negligible deviation.
struct DomainTooSmall : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct StabilityFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

namespace detail {
[[noreturn]] inline void domain_fail(const std::string& what) { throw std::domain_error(what); }
inline void require(bool ok, const char* what) {
  if (!ok) domain_fail(what);
}
}  // namespace detail

}  // namespace bkk

#endif  // BKK_ERRORS_HPP
