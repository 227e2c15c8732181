#pragma once
#include <stdexcept>
#include <string>

namespace reltab {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// input / format errors
struct ParseError : Error { using Error::Error; };
struct SchemaError : Error { using Error::Error; };
struct ConfigError : Error { using Error::Error; };
struct IOError : Error { using Error::Error; };
struct VersionMismatchError : Error { using Error::Error; };
struct SchemaHashMismatchError : Error { using Error::Error; };

// numeric / tensor errors
struct ShapeError : Error { using Error::Error; };
struct IndexError : Error { using Error::Error; };
struct NotScalarError : Error { using Error::Error; };
struct NonFiniteError : Error { using Error::Error; };
struct DimensionMismatchError : Error { using Error::Error; };

// corpus / model errors
struct NoMaskablePositionError : Error { using Error::Error; };
struct InsufficientRowsError : Error { using Error::Error; };
struct NoHeadForColumnError : Error { using Error::Error; };

// evaluation errors
struct EmptyContextError : Error { using Error::Error; };
struct EmptyResultsError : Error { using Error::Error; };
struct NoCandidatesError : Error { using Error::Error; };

}  // namespace reltab
