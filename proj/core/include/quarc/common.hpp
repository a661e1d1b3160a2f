// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace quarc {

// Engine-wide scalar type. All tensor buffers store `real`; reductions
// accumulate in double regardless of what `real` aliases.
using real = double;

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string shape_str(const Shape& shape);

// Error taxonomy. The CLI maps these onto process exit codes:
// ConfigError -> 2, FormatError/ShapeError/ContractError -> 3,
// NumericError -> 4.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Invalid settings: bad fractions, bitwidths, intervals, plan names.
class ConfigError : public Error {
public:
    using Error::Error;
};

// Tensor dimension mismatches.
class ShapeError : public Error {
public:
    using Error::Error;
};

// Violated operation preconditions (non-probability rows, bad labels...).
class ContractError : public Error {
public:
    using Error::Error;
};

// Unparseable files: IDX, CSV, TOML, checkpoints.
class FormatError : public Error {
public:
    using Error::Error;
};

// NaN/Inf results, division by zero, log of a non-positive value.
class NumericError : public Error {
public:
    using Error::Error;
};

}  // namespace quarc
