#ifndef PETMAE_ERROR_HPP
#define PETMAE_ERROR_HPP

#include <stdexcept>
#include <string>

namespace petmae {

enum class ErrorCode {
  BadMagic,
  UnsupportedDatatype,
  BadDims,
  TruncatedData,
  IoFailure,
  MultiChannel,
  AllBlank,
  ShapeMismatch,
  LabelMismatch,
  InvalidSpacing,
  ConstantImage,
  NonDivisible,
  BadConfig,
  BadShape,
  NonScalarLoss,
  EmptyCorpus,
  VersionMismatch,
  CorruptManifest,
  BlobOutOfBounds,
  BadOverlap,
};

const char* error_code_name(ErrorCode code);

class Error : public std::runtime_error {
public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(error_code_name(code)) + ": " + what),
        code_(code) {}

  ErrorCode code() const { return code_; }

private:
  ErrorCode code_;
};

} // namespace petmae

#endif
