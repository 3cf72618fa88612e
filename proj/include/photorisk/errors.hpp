#pragma once

#include <stdexcept>
#include <string>

namespace photorisk {

// Dataset-directory load failures. Each condition the loader promises to
// distinguish gets its own type.
struct DatasetError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct ManifestMissingError : DatasetError {
    using DatasetError::DatasetError;
};
struct ImageFormatError : DatasetError {
    using DatasetError::DatasetError;
};
struct ChecksumError : DatasetError {
    using DatasetError::DatasetError;
};

// Weight-file load failures.
struct WeightsError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct WeightsVersionError : WeightsError {
    using WeightsError::WeightsError;
};
struct WeightsShapeError : WeightsError {
    using WeightsError::WeightsError;
};
struct WeightsTruncatedError : WeightsError {
    using WeightsError::WeightsError;
};
struct WeightsChecksumError : WeightsError {
    using WeightsError::WeightsError;
};

}  // namespace photorisk
