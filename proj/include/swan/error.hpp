#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace swan {

enum class ErrorCode {
    SignalTooShort,
    NonFiniteInput,
    LengthMismatch,
    DimensionMismatch,
    StaleCache,
    NonFiniteGradient,
    NonFiniteLoss,
    InvalidDims,
    InvalidConfig,
    ZeroNormVector,
    AllZeroPixel,
    SizeMismatch,
    RejectionExhausted,
    InvalidKind,
    NegativeEntry,
    ZeroSum,
    BadMagic,
    BadHeader,
    TruncatedPayload,
    DimOverflow,
    RaggedRows,
    NonNumeric,
    IoError,
};

inline std::string_view to_string(ErrorCode code) {
    switch (code) {
    case ErrorCode::SignalTooShort: return "SignalTooShort";
    case ErrorCode::NonFiniteInput: return "NonFiniteInput";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::StaleCache: return "StaleCache";
    case ErrorCode::NonFiniteGradient: return "NonFiniteGradient";
    case ErrorCode::NonFiniteLoss: return "NonFiniteLoss";
    case ErrorCode::InvalidDims: return "InvalidDims";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::ZeroNormVector: return "ZeroNormVector";
    case ErrorCode::AllZeroPixel: return "AllZeroPixel";
    case ErrorCode::SizeMismatch: return "SizeMismatch";
    case ErrorCode::RejectionExhausted: return "RejectionExhausted";
    case ErrorCode::InvalidKind: return "InvalidKind";
    case ErrorCode::NegativeEntry: return "NegativeEntry";
    case ErrorCode::ZeroSum: return "ZeroSum";
    case ErrorCode::BadMagic: return "BadMagic";
    case ErrorCode::BadHeader: return "BadHeader";
    case ErrorCode::TruncatedPayload: return "TruncatedPayload";
    case ErrorCode::DimOverflow: return "DimOverflow";
    case ErrorCode::RaggedRows: return "RaggedRows";
    case ErrorCode::NonNumeric: return "NonNumeric";
    case ErrorCode::IoError: return "IoError";
    }
    return "Unknown";
}

/// Numeric failures abort training/inference; everything else is a data
/// or usage problem. The CLI maps the two groups to different exit codes.
inline bool is_numeric_failure(ErrorCode code) {
    return code == ErrorCode::NonFiniteGradient || code == ErrorCode::NonFiniteLoss;
}

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

} // namespace swan
