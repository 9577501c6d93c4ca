#pragma once

// Error codes shared by every evalpower module.
//
// Each failure carries a code whose name is surfaced verbatim by the CLI, so
// a user sees e.g. "OutOfRange: line 17: value 8 outside 1..7".

#include <stdexcept>
#include <string>
#include <string_view>

namespace evalpower {

enum class Errc {
    // data-model
    MalformedRow,
    OutOfRange,
    DuplicateKey,
    InvalidRankGroup,
    EmptyDataset,
    MissingDesign,
    IncompleteCell,
    IncompleteBlock,
    // design
    InvalidCount,
    Unsatisfiable,
    // clmm / inference
    NonFiniteLikelihood,
    DimensionMismatch,
    NotConverged,
    DegenerateData,
    SingularVcov,
    // classical tests / reliability
    ZeroVariance,
    LengthMismatch,
    TooFewBlocks,
    NoPairableValues,
    MissingDuration,
    // simulation
    ConfigInfeasible,
    // io
    FileNotFound,
    SchemaViolation,
};

constexpr std::string_view errc_name(Errc code) noexcept {
    switch (code) {
    case Errc::MalformedRow: return "MalformedRow";
    case Errc::OutOfRange: return "OutOfRange";
    case Errc::DuplicateKey: return "DuplicateKey";
    case Errc::InvalidRankGroup: return "InvalidRankGroup";
    case Errc::EmptyDataset: return "EmptyDataset";
    case Errc::MissingDesign: return "MissingDesign";
    case Errc::IncompleteCell: return "IncompleteCell";
    case Errc::IncompleteBlock: return "IncompleteBlock";
    case Errc::InvalidCount: return "InvalidCount";
    case Errc::Unsatisfiable: return "Unsatisfiable";
    case Errc::NonFiniteLikelihood: return "NonFiniteLikelihood";
    case Errc::DimensionMismatch: return "DimensionMismatch";
    case Errc::NotConverged: return "NotConverged";
    case Errc::DegenerateData: return "DegenerateData";
    case Errc::SingularVcov: return "SingularVcov";
    case Errc::ZeroVariance: return "ZeroVariance";
    case Errc::LengthMismatch: return "LengthMismatch";
    case Errc::TooFewBlocks: return "TooFewBlocks";
    case Errc::NoPairableValues: return "NoPairableValues";
    case Errc::MissingDuration: return "MissingDuration";
    case Errc::ConfigInfeasible: return "ConfigInfeasible";
    case Errc::FileNotFound: return "FileNotFound";
    case Errc::SchemaViolation: return "SchemaViolation";
    }
    return "Unknown";
}

// Numerical failures map to CLI exit code 2, everything else to 1.
constexpr bool is_numerical(Errc code) noexcept {
    return code == Errc::NonFiniteLikelihood || code == Errc::NotConverged ||
           code == Errc::SingularVcov;
}

class Error : public std::runtime_error {
public:
    Error(Errc code, const std::string& what)
        : std::runtime_error(std::string(errc_name(code)) + ": " + what), code_(code) {}

    Errc code() const noexcept { return code_; }

private:
    Errc code_;
};

} // namespace evalpower
