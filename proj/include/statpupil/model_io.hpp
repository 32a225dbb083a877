#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "statpupil/model.hpp"

namespace spup {

inline constexpr char kModelMagic[4] = {'S', 'P', 'U', 'P'};
inline constexpr std::uint32_t kModelVersion = 1;

/// CRC-64/XZ (ECMA-182 polynomial, reflected, all-ones init and xorout).
std::uint64_t checksum(std::span<const std::uint8_t> bytes);

std::vector<std::uint8_t> serialize(const PupilModel& model);

/// Throws BadMagicError, UnsupportedVersionError, ChecksumError or
/// InvariantError.
PupilModel deserialize(std::span<const std::uint8_t> bytes);

void save(const PupilModel& model, const std::filesystem::path& path);
PupilModel load(const std::filesystem::path& path);

}  // namespace spup
