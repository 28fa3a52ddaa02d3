#pragma once

#include <stdexcept>
#include <string>

namespace casdet {

// Malformed or out-of-contract input data (files, labels, shapes).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Non-finite values or diverging numerics during training/inference.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Tensor extents that do not match a layer's input contract.
class ShapeError : public DataError {
 public:
  using DataError::DataError;
};

}  // namespace casdet
