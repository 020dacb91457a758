#pragma once

#include <stdexcept>
#include <string>

namespace pathqkd {

// Base for every error raised by the library. error_class() is the
// machine-parsable tag the CLI prints on failure.
class Error : public std::runtime_error {
public:
    Error(std::string error_class, const std::string& what)
        : std::runtime_error(what), class_(std::move(error_class)) {}

    const std::string& error_class() const noexcept { return class_; }

private:
    std::string class_;
};

#define PATHQKD_DEFINE_ERROR(Name)                                            \
    class Name : public Error {                                               \
    public:                                                                   \
        explicit Name(const std::string& what) : Error(#Name, what) {}        \
    }

PATHQKD_DEFINE_ERROR(InvalidState);
PATHQKD_DEFINE_ERROR(InvalidParam);
PATHQKD_DEFINE_ERROR(ConfigError);
PATHQKD_DEFINE_ERROR(EmptySetting);
PATHQKD_DEFINE_ERROR(BasisMismatch);
PATHQKD_DEFINE_ERROR(DomainError);
PATHQKD_DEFINE_ERROR(NotNormalized);
PATHQKD_DEFINE_ERROR(ValidationError);
PATHQKD_DEFINE_ERROR(NotConverged);
PATHQKD_DEFINE_ERROR(NoConvergence);
PATHQKD_DEFINE_ERROR(IoError);

#undef PATHQKD_DEFINE_ERROR

}  // namespace pathqkd
