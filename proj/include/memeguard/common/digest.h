#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

namespace memeguard {

// Lowercase hex SHA-256.
std::string Sha256Hex(std::string_view data);
std::string Sha256FileHex(const std::filesystem::path& path);

std::string Base64Encode(std::string_view data);

// 64-bit FNV-1a; stable across platforms, used to derive per-item seeds.
uint64_t StableHash64(std::string_view data, uint64_t seed = 0);

std::string ReadFileBytes(const std::filesystem::path& path);

// Writes via a sibling temp file and rename, so readers never see a
// partially written file.
void WriteFileAtomic(const std::filesystem::path& path, std::string_view data);

}  // namespace memeguard
