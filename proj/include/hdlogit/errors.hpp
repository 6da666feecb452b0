#pragma once

#include <stdexcept>
#include <string>

namespace hdlogit {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Bad argument or violated precondition.
class InvalidArgument : public Error {
public:
  using Error::Error;
};

/// An iterative method hit its iteration cap.
class NonConvergence : public Error {
public:
  using Error::Error;
};

/// (kappa, gamma) lies outside the region where the MLE exists.
class OutsideExistenceRegion : public Error {
public:
  using Error::Error;
};

/// The data are perfectly separable, so the MLE does not exist.
class Separated : public Error {
public:
  using Error::Error;
};

/// ProbeFrontier could not locate the separation frontier.
class ProbeFailure : public Error {
public:
  using Error::Error;
};

/// The separation frequency never reached the threshold on the kappa grid.
class FrontierNotReached : public ProbeFailure {
public:
  using ProbeFailure::ProbeFailure;
};

/// The full dataset is already separable.
class FullDataSeparated : public ProbeFailure {
public:
  using ProbeFailure::ProbeFailure;
};

/// Malformed dataset or configuration file.
class ParseError : public Error {
public:
  using Error::Error;
};

} // namespace hdlogit
