#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "omni/tensor.hpp"

namespace omni {

/// Named-tensor binary container shared by checkpoints and corpus files.
///
/// Layout (all integers little-endian):
///   "OMNI" | u32 version | u64 metadata length | metadata bytes (UTF-8 text)
///   u64 entry count | entries...
/// entry:
///   u32 name length | name bytes | u32 rank | u64 extent x rank | u8 frozen
///   | f64 x numel, row-major
struct ContainerEntry {
    std::string name;
    Tensor tensor;
    bool frozen = false;
};

struct Container {
    static constexpr std::uint32_t kVersion = 1;

    std::string metadata;
    std::vector<ContainerEntry> entries;

    const ContainerEntry* find(const std::string& name) const;
    const ContainerEntry& at(const std::string& name) const;  // io error when missing
};

std::string encode_container(const Container& container);
Container decode_container(const std::string& bytes);

void write_container(const std::filesystem::path& path, const Container& container);
Container read_container(const std::filesystem::path& path);

std::string read_file(const std::filesystem::path& path);
/// Writes through a temporary file and renames it into place.
void write_file_atomic(const std::filesystem::path& path, const std::string& bytes);
std::uint64_t hash_file(const std::filesystem::path& path);

}  // namespace omni
