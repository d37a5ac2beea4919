#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "unict/events/event.hpp"

namespace unict::events {

/// Malformed input; the message carries the line number (text) or byte
/// offset (binary) of the offending record.
class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class EventFormat { kAuto, kText, kBinary };

// Binary layout: 16-byte header ("UNICTEVT", u16 width, u16 height,
// u32 reserved) then packed 13-byte little-endian records
// (f64 t, u16 x, u16 y, i8 p).
inline constexpr char kEventMagic[] = "UNICTEVT";
inline constexpr std::size_t kEventHeaderBytes = 16;
inline constexpr std::size_t kEventRecordBytes = 13;

/// Streams events from a file in file order.
class EventReader {
 public:
  explicit EventReader(const std::filesystem::path& path, EventFormat format = EventFormat::kAuto);

  std::optional<EventRecord> next();
  EventFormat format() const { return format_; }
  /// Sensor size from the binary header; 0 for text input.
  std::uint16_t width() const { return width_; }
  std::uint16_t height() const { return height_; }

 private:
  std::optional<EventRecord> next_text();
  std::optional<EventRecord> next_binary();

  std::ifstream in_;
  std::string path_;
  EventFormat format_;
  std::uint16_t width_ = 0;
  std::uint16_t height_ = 0;
  std::size_t line_ = 0;
  std::uint64_t offset_ = 0;
};

std::vector<EventRecord> read_events(const std::filesystem::path& path,
                                     EventFormat format = EventFormat::kAuto);

/// Parses one text line ("t x y p"); throws ParseError naming `line_no`.
EventRecord parse_text_line(const std::string& line, std::size_t line_no);

void write_events_text(const std::filesystem::path& path, std::span<const EventRecord> events);
void write_events_binary(const std::filesystem::path& path, std::span<const EventRecord> events,
                         std::uint16_t width, std::uint16_t height);

}  // namespace unict::events
