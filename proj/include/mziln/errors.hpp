#pragma once

#include <stdexcept>
#include <string>

namespace mziln {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Sample has fewer than two positive taxa; it carries no log-ratio information.
struct DegenerateSample : Error {
  using Error::Error;
};

struct InvalidInput : Error {
  using Error::Error;
};

/// Presence pattern has no probability mass in the discrete part.
struct MissingMass : Error {
  using Error::Error;
};

struct SingularCovariance : Error {
  using Error::Error;
};

struct RankDeficient : Error {
  using Error::Error;
};

/// No subject contributes rows to the stacked regression.
struct EmptySystem : Error {
  using Error::Error;
};

struct NoSignal : Error {
  using Error::Error;
};

struct ParseError : Error {
  using Error::Error;
};

struct IngestError : Error {
  using Error::Error;
};

struct ConfigError : Error {
  using Error::Error;
};

}  // namespace mziln
