#include "omni/error.hpp"

#include <atomic>
#include <iostream>

namespace omni {

std::string_view to_string(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::dimension: return "dimension";
        case ErrorKind::index: return "index";
        case ErrorKind::length: return "length";
        case ErrorKind::contract: return "contract";
        case ErrorKind::configuration: return "configuration";
        case ErrorKind::assembly: return "assembly";
        case ErrorKind::consistency: return "consistency";
        case ErrorKind::tokenization: return "tokenization";
        case ErrorKind::decode: return "decode";
        case ErrorKind::undefined_rate: return "undefined-rate";
        case ErrorKind::validation: return "validation";
        case ErrorKind::io: return "io";
        case ErrorKind::compatibility: return "compatibility";
    }
    return "unknown";
}

namespace {
std::atomic<std::size_t> g_warnings{0};
std::atomic<bool> g_silenced{false};
}  // namespace

void warn(std::string_view message) {
    g_warnings.fetch_add(1, std::memory_order_relaxed);
    if (!g_silenced.load(std::memory_order_relaxed)) {
        std::cerr << "warning: " << message << '\n';
    }
}

std::size_t warning_count() noexcept { return g_warnings.load(std::memory_order_relaxed); }

void set_warnings_silenced(bool silenced) noexcept { g_silenced.store(silenced, std::memory_order_relaxed); }

}  // namespace omni
