#include "petmae/error.hpp"

namespace petmae {

const char* error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::BadMagic: return "BadMagic";
    case ErrorCode::UnsupportedDatatype: return "UnsupportedDatatype";
    case ErrorCode::BadDims: return "BadDims";
    case ErrorCode::TruncatedData: return "TruncatedData";
    case ErrorCode::IoFailure: return "IoFailure";
    case ErrorCode::MultiChannel: return "MultiChannel";
    case ErrorCode::AllBlank: return "AllBlank";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::LabelMismatch: return "LabelMismatch";
    case ErrorCode::InvalidSpacing: return "InvalidSpacing";
    case ErrorCode::ConstantImage: return "ConstantImage";
    case ErrorCode::NonDivisible: return "NonDivisible";
    case ErrorCode::BadConfig: return "BadConfig";
    case ErrorCode::BadShape: return "BadShape";
    case ErrorCode::NonScalarLoss: return "NonScalarLoss";
    case ErrorCode::EmptyCorpus: return "EmptyCorpus";
    case ErrorCode::VersionMismatch: return "VersionMismatch";
    case ErrorCode::CorruptManifest: return "CorruptManifest";
    case ErrorCode::BlobOutOfBounds: return "BlobOutOfBounds";
    case ErrorCode::BadOverlap: return "BadOverlap";
  }
  return "UnknownError";
}

} // namespace petmae
