#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace omni {

enum class ErrorKind {
    dimension,
    index,
    length,
    contract,
    configuration,
    assembly,
    consistency,
    tokenization,
    decode,
    undefined_rate,
    validation,
    io,
    compatibility,
};

std::string_view to_string(ErrorKind kind);

/// Every failure raised by the core library. The kind decides how the C API
/// and the CLI report it (validation / io / compatibility map to exit codes).
class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& message)
        : std::runtime_error(std::string(to_string(kind)) + " error: " + message), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message) {
    throw Error(kind, message);
}

/// Warnings go to stderr unless silenced; the counter lets tests observe them.
void warn(std::string_view message);
std::size_t warning_count() noexcept;
void set_warnings_silenced(bool silenced) noexcept;

}  // namespace omni
