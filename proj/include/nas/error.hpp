#pragma once

#include <stdexcept>

namespace nas {

// Error classes. Invalid arguments use std::invalid_argument and negative
// weights fed to the Jaccard kernel use std::domain_error; the three below
// cover file ingestion.

/// Bad magic, unsupported version or dtype, malformed header.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Short reads, failed writes, unopenable files.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Well-formed bytes that violate a domain invariant (NaN weights,
/// unsorted indices, duplicate sample ids, ...).
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace nas
