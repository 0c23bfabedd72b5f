// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace cricbench {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// ingest
struct MissingClassError : Error { using Error::Error; };
struct EmptyClassError : Error { using Error::Error; };
struct ClassTooSmallError : Error { using Error::Error; };
struct DecodeError : Error { using Error::Error; };
struct EmptyVideoError : Error { using Error::Error; };

// pipelines
struct MissingRngError : Error { using Error::Error; };
struct CropBoundsError : Error { using Error::Error; };

// model zoo / training
struct UnknownArchError : Error { using Error::Error; };
struct SpecError : Error { using Error::Error; };
struct ShapeError : Error { using Error::Error; };
struct EmptySplitError : Error { using Error::Error; };

// metrics
struct InputError : Error { using Error::Error; };

// hpo
struct StudyFailedError : Error { using Error::Error; };

// cli / reporting
struct IoError : Error { using Error::Error; };
struct ConfigError : Error { using Error::Error; };
struct ReportError : Error { using Error::Error; };

}  // namespace cricbench
