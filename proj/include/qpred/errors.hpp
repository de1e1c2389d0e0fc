#pragma once

#include <stdexcept>
#include <string>

namespace qpred {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct AliasingError : Error { using Error::Error; };
struct ShapeError : Error { using Error::Error; };
struct NotDiffeoError : Error { using Error::Error; };
struct MeanError : Error { using Error::Error; };
struct DegenerateMetricError : Error { using Error::Error; };
struct ZeroModeError : Error { using Error::Error; };
struct SmallnessError : Error { using Error::Error; };
struct StabilityError : Error { using Error::Error; };
struct DivergedError : Error { using Error::Error; };
struct ParityError : Error { using Error::Error; };

// carries the offending mode so reports can name it
struct SmallDivisorError : Error {
    SmallDivisorError(const std::string& what, std::string mode_desc, double divisor)
        : Error(what), mode(std::move(mode_desc)), divisor(divisor) {}
    std::string mode;
    double divisor;
};

}  // namespace qpred
