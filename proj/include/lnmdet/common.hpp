#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace lnmdet {

enum class ErrorCategory {
    usage,
    parse,
    io,
    shape,
    state,
    data,
    internal,
};

inline const char* error_category_name(ErrorCategory c) {
    switch (c) {
        case ErrorCategory::usage: return "usage";
        case ErrorCategory::parse: return "parse";
        case ErrorCategory::io: return "io";
        case ErrorCategory::shape: return "shape";
        case ErrorCategory::state: return "state";
        case ErrorCategory::data: return "data";
        case ErrorCategory::internal: return "internal";
    }
    return "internal";
}

class Error : public std::runtime_error {
public:
    Error(ErrorCategory category, const std::string& message)
        : std::runtime_error(std::string(error_category_name(category)) + ": " + message),
          category_(category) {}

    ErrorCategory category() const { return category_; }

private:
    ErrorCategory category_;
};

[[noreturn]] inline void raise(ErrorCategory category, const std::string& message) {
    throw Error(category, message);
}

inline void require(bool ok, ErrorCategory category, const std::string& message) {
    if (!ok) raise(category, message);
}

}  // namespace lnmdet
