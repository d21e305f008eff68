#pragma once

#include <stdexcept>
#include <string>

namespace ulab {

// Base for every library error. Subcommands map these onto exit codes.
struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

struct UnknownTokenError : Error {
    explicit UnknownTokenError(const std::string& msg) : Error(msg) {}
};

struct OverlappingSetsError : Error {
    explicit OverlappingSetsError(const std::string& msg) : Error(msg) {}
};

struct InsufficientConceptsError : Error {
    explicit InsufficientConceptsError(const std::string& msg) : Error(msg) {}
};

struct TemplateLengthMismatchError : Error {
    explicit TemplateLengthMismatchError(const std::string& msg) : Error(msg) {}
};

struct EmptyReplacementPoolError : Error {
    explicit EmptyReplacementPoolError(const std::string& msg) : Error(msg) {}
};

struct EmptyCorpusError : Error {
    explicit EmptyCorpusError(const std::string& msg) : Error(msg) {}
};

struct EnumerationTooLargeError : Error {
    explicit EnumerationTooLargeError(const std::string& msg) : Error(msg) {}
};

struct SupportMismatchError : Error {
    explicit SupportMismatchError(const std::string& msg) : Error(msg) {}
};

struct GroupTooSmallError : Error {
    explicit GroupTooSmallError(const std::string& msg) : Error(msg) {}
};

struct DisjointnessViolationError : Error {
    explicit DisjointnessViolationError(const std::string& msg) : Error(msg) {}
};

struct EmptyOutputSetError : Error {
    explicit EmptyOutputSetError(const std::string& msg) : Error(msg) {}
};

struct MissingExpectedConceptError : Error {
    explicit MissingExpectedConceptError(const std::string& msg) : Error(msg) {}
};

struct InvalidSequenceError : Error {
    explicit InvalidSequenceError(const std::string& msg) : Error(msg) {}
};

struct PreconditionError : Error {
    explicit PreconditionError(const std::string& msg) : Error(msg) {}
};

struct ConfigError : Error {
    explicit ConfigError(const std::string& msg) : Error(msg) {}
};

struct MissingArtifactError : Error {
    explicit MissingArtifactError(const std::string& msg) : Error(msg) {}
};

struct StageError : Error {
    StageError(const std::string& stage, const std::string& cause)
        : Error("stage '" + stage + "' failed: " + cause), stage_name(stage) {}
    std::string stage_name;
};

}  // namespace ulab
