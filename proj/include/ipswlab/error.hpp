#pragma once

#include <stdexcept>
#include <string>

namespace ipswlab {

// Error taxonomy mirrors the CLI exit-code contract:
//   ConfigError -> 2, GenerationError -> 3, StudyError -> 4,
//   PipelineError and NumericError -> 5.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

// Invalid inputs, broken invariants, malformed configs.
class ConfigError : public Error {
public:
  using Error::Error;
};

// Data generation failed (degenerate trial after bounded retries, ...).
class GenerationError : public Error {
public:
  using Error::Error;
};

// Study-level failure (too many failed replicates, bad method set).
class StudyError : public Error {
public:
  using Error::Error;
};

// An estimation pipeline step failed on otherwise valid inputs.
class PipelineError : public Error {
public:
  using Error::Error;
};

// Numerical failures of the fitters.
class NumericError : public PipelineError {
public:
  using PipelineError::PipelineError;
};

// Complete separation in a logistic fit.
class SeparationError : public NumericError {
public:
  using NumericError::NumericError;
};

}  // namespace ipswlab
