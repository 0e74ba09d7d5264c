#pragma once

#include <stdexcept>
#include <string>

namespace stagepoly {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct InvalidMonomial : Error { using Error::Error; };
struct InvalidExpansion : Error { using Error::Error; };
struct InvalidParam : Error { using Error::Error; };
struct NumericOverflow : Error { using Error::Error; };
struct EmptyData : Error { using Error::Error; };
struct ParseError : Error { using Error::Error; };
struct SolverFailure : Error { using Error::Error; };
struct DegenerateBaselines : Error { using Error::Error; };
struct InvalidTiming : Error { using Error::Error; };
struct UndefinedAUC : Error { using Error::Error; };

}  // namespace stagepoly
