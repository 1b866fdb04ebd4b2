#pragma once

// Time-tag interchange files.
//
//   CSV:    header "channel,timestamp_ps", then one "<channel>,<timestamp>"
//           record per line in ASCII decimal.
//   Binary: packed little-endian records of (u32 channel, u64 timestamp_ps),
//           12 bytes each, no header.
//
// The extension picks the codec: ".csv" or ".bin".

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "demux/model.hpp"

namespace demux {

enum class TagFormat { csv, binary };

inline constexpr std::size_t kBinaryRecordSize = 12;

std::string encode_csv(const std::vector<TimeTag>& tags);
std::string encode_binary(const std::vector<TimeTag>& tags);

/// Throws DataError naming the byte offset of the first malformed record.
std::vector<TimeTag> decode_csv(std::string_view text);
std::vector<TimeTag> decode_binary(std::string_view bytes);

std::string_view extension_for(TagFormat format);
TagFormat format_from_path(const std::filesystem::path& path);

void write_tags(const std::filesystem::path& path, const std::vector<TimeTag>& tags);
std::vector<TimeTag> read_tags(const std::filesystem::path& path);

/// Writes raw bytes; throws DataError when the file cannot be written.
void write_file(const std::filesystem::path& path, std::string_view contents);
std::string read_file(const std::filesystem::path& path);

}  // namespace demux
