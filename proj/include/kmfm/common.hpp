#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

#include <Eigen/Core>

namespace kmfm {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

// Error taxonomy. The three buckets map onto CLI exit codes:
// ConfigError -> 2, DataError -> 3, NumericError -> 4.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ConfigError : Error {
    using Error::Error;
};
struct DataError : Error {
    using Error::Error;
};
struct NumericError : Error {
    using Error::Error;
};

// dataset
struct SchemaMismatch : DataError {
    using DataError::DataError;
};
struct EmptyDataset : DataError {
    using DataError::DataError;
};
struct ParseError : DataError {
    using DataError::DataError;
};
struct UnknownLevel : DataError {
    using DataError::DataError;
};
struct DegenerateSplit : ConfigError {
    using ConfigError::ConfigError;
};

// uci
struct NetworkError : DataError {
    using DataError::DataError;
};
struct IntegrityError : DataError {
    using DataError::DataError;
};
struct IoError : DataError {
    using DataError::DataError;
};

// neuralnet
struct InvalidSpec : ConfigError {
    using ConfigError::ConfigError;
};
struct ShapeMismatch : ConfigError {
    using ConfigError::ConfigError;
};
struct StaleCache : NumericError {
    using NumericError::NumericError;
};
struct DivergenceDetected : NumericError {
    using NumericError::NumericError;
};

// embedding
struct AsymmetricInput : NumericError {
    using NumericError::NumericError;
};
struct RankDeficient : NumericError {
    using NumericError::NumericError;
};
struct BadL : ConfigError {
    using ConfigError::ConfigError;
};

// clustering
struct DegenerateInput : ConfigError {
    using ConfigError::ConfigError;
};

// metrics
struct LengthMismatch : DataError {
    using DataError::DataError;
};
struct TooFewSamples : DataError {
    using DataError::DataError;
};

}  // namespace kmfm
