#include "demux/tagio.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

namespace demux {
namespace {

constexpr std::string_view kCsvHeader = "channel,timestamp_ps";

template <typename T>
void put_le(std::string& out, T value) {
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    out.push_back(static_cast<char>((value >> (8 * i)) & 0xFF));
  }
}

template <typename T>
T get_le(const char* p) {
  T value = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    value |= static_cast<T>(static_cast<unsigned char>(p[i])) << (8 * i);
  }
  return value;
}

[[noreturn]] void malformed(std::size_t offset, const std::string& what) {
  throw DataError("malformed time-tag record at byte " + std::to_string(offset) + ": " + what);
}

template <typename T>
bool parse_uint(std::string_view field, T& out) {
  if (field.empty()) return false;
  const auto* end = field.data() + field.size();
  auto [ptr, ec] = std::from_chars(field.data(), end, out);
  return ec == std::errc{} && ptr == end;
}

}  // namespace

std::string encode_csv(const std::vector<TimeTag>& tags) {
  std::string out;
  out.reserve(kCsvHeader.size() + 1 + tags.size() * 16);
  out.append(kCsvHeader);
  out.push_back('\n');
  char buf[48];  // 10 + 1 + 20 + 1 digits at most
  for (const auto& t : tags) {
    auto r = std::to_chars(buf, buf + 16, t.channel);
    *r.ptr++ = ',';
    r = std::to_chars(r.ptr, buf + 40, t.timestamp_ps);
    *r.ptr++ = '\n';
    out.append(buf, r.ptr);
  }
  return out;
}

std::string encode_binary(const std::vector<TimeTag>& tags) {
  std::string out;
  out.reserve(tags.size() * kBinaryRecordSize);
  for (const auto& t : tags) {
    put_le<std::uint32_t>(out, t.channel);
    put_le<std::uint64_t>(out, t.timestamp_ps);
  }
  return out;
}

std::vector<TimeTag> decode_csv(std::string_view text) {
  std::vector<TimeTag> tags;
  std::size_t pos = 0;
  bool header_seen = false;
  while (pos < text.size()) {
    std::size_t eol = text.find('\n', pos);
    if (eol == std::string_view::npos) eol = text.size();
    std::string_view line = text.substr(pos, eol - pos);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    const std::size_t line_start = pos;
    pos = eol + 1;

    if (!header_seen) {
      if (line != kCsvHeader) malformed(line_start, "expected header '" + std::string(kCsvHeader) + "'");
      header_seen = true;
      continue;
    }
    if (line.empty()) {
      if (pos >= text.size()) break;
      malformed(line_start, "empty line");
    }
    const auto comma = line.find(',');
    if (comma == std::string_view::npos) malformed(line_start, "missing ','");
    TimeTag tag;
    if (!parse_uint(line.substr(0, comma), tag.channel)) malformed(line_start, "bad channel field");
    if (!parse_uint(line.substr(comma + 1), tag.timestamp_ps)) {
      malformed(line_start + comma + 1, "bad timestamp field");
    }
    tags.push_back(tag);
  }
  if (!header_seen) malformed(0, "missing header");
  return tags;
}

std::vector<TimeTag> decode_binary(std::string_view bytes) {
  if (bytes.size() % kBinaryRecordSize != 0) {
    malformed(bytes.size() - bytes.size() % kBinaryRecordSize, "truncated record");
  }
  std::vector<TimeTag> tags(bytes.size() / kBinaryRecordSize);
  const char* p = bytes.data();
  for (auto& t : tags) {
    t.channel = get_le<std::uint32_t>(p);
    t.timestamp_ps = get_le<std::uint64_t>(p + 4);
    p += kBinaryRecordSize;
  }
  return tags;
}

std::string_view extension_for(TagFormat format) {
  return format == TagFormat::csv ? ".csv" : ".bin";
}

TagFormat format_from_path(const std::filesystem::path& path) {
  const auto ext = path.extension().string();
  if (ext == ".csv") return TagFormat::csv;
  if (ext == ".bin") return TagFormat::binary;
  throw DataError("unknown time-tag file extension '" + ext + "' (" + path.string() + ")");
}

void write_file(const std::filesystem::path& path, std::string_view contents) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw DataError("cannot open " + path.string() + " for writing");
  os.write(contents.data(), static_cast<std::streamsize>(contents.size()));
  if (!os) throw DataError("failed writing " + path.string());
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open " + path.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  return std::move(ss).str();
}

void write_tags(const std::filesystem::path& path, const std::vector<TimeTag>& tags) {
  const auto fmt = format_from_path(path);
  write_file(path, fmt == TagFormat::csv ? encode_csv(tags) : encode_binary(tags));
}

std::vector<TimeTag> read_tags(const std::filesystem::path& path) {
  const auto fmt = format_from_path(path);
  const std::string contents = read_file(path);
  try {
    return fmt == TagFormat::csv ? decode_csv(contents) : decode_binary(contents);
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

}  // namespace demux
