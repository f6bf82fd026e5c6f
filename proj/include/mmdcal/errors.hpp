#pragma once

#include <stdexcept>
#include <string>

namespace mmdcal {

/// Malformed or inconsistent input data: shape mismatches, too few rows,
/// unparsable files, illegal pipeline ordering.
class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class DimensionError : public DataError {
public:
    using DataError::DataError;
};

/// A preprocessing step was applied to a sample in the wrong stage.
class PipelineOrderError : public DataError {
public:
    using DataError::DataError;
};

/// Invalid configuration or command-line usage.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Optimization produced a non-finite value.
class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline void require_dims(bool ok, const std::string& what) {
    if (!ok) throw DimensionError("dimension mismatch: " + what);
}

}  // namespace mmdcal
