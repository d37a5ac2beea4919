#include "unict/events/event_io.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <iomanip>
#include <sstream>

namespace unict::events {

static_assert(std::endian::native == std::endian::little,
              "event binary I/O assumes a little-endian host");

namespace {

bool is_blank_or_comment(const std::string& line) {
  for (char c : line) {
    if (c == '#') return true;
    if (!std::isspace(static_cast<unsigned char>(c))) return false;
  }
  return true;
}

}  // namespace

EventRecord parse_text_line(const std::string& line, std::size_t line_no) {
  std::istringstream is(line);
  double t;
  long x, y, p;
  std::string extra;
  auto fail = [&](const std::string& why) {
    return ParseError("line " + std::to_string(line_no) + ": " + why + " in '" + line + "'");
  };
  if (!(is >> t >> x >> y >> p)) throw fail("expected 't x y p'");
  if (is >> extra) throw fail("trailing field '" + extra + "'");
  if (!std::isfinite(t)) throw fail("non-finite timestamp");
  if (x < 0 || x > 0xFFFF || y < 0 || y > 0xFFFF) throw fail("coordinate out of range");
  EventRecord e;
  e.t = t;
  e.x = static_cast<std::uint16_t>(x);
  e.y = static_cast<std::uint16_t>(y);
  try {
    e.p = normalize_polarity(p);
  } catch (const EventError& err) {
    throw fail(err.what());
  }
  return e;
}

EventReader::EventReader(const std::filesystem::path& path, EventFormat format)
    : in_(path, std::ios::binary), path_(path.string()), format_(format) {
  if (!in_) throw ParseError("cannot open event file: " + path_);
  char head[kEventHeaderBytes] = {};
  in_.read(head, kEventHeaderBytes);
  const auto got = static_cast<std::size_t>(in_.gcount());
  const bool has_magic = got == kEventHeaderBytes && std::memcmp(head, kEventMagic, 8) == 0;
  if (format_ == EventFormat::kAuto) format_ = has_magic ? EventFormat::kBinary : EventFormat::kText;
  if (format_ == EventFormat::kBinary) {
    if (!has_magic) throw ParseError(path_ + ": missing UNICTEVT header");
    std::memcpy(&width_, head + 8, 2);
    std::memcpy(&height_, head + 10, 2);
    offset_ = kEventHeaderBytes;
  } else {
    in_.clear();
    in_.seekg(0);
  }
}

std::optional<EventRecord> EventReader::next() {
  return format_ == EventFormat::kBinary ? next_binary() : next_text();
}

std::optional<EventRecord> EventReader::next_text() {
  std::string line;
  while (std::getline(in_, line)) {
    ++line_;
    if (is_blank_or_comment(line)) continue;
    return parse_text_line(line, line_);
  }
  return std::nullopt;
}

std::optional<EventRecord> EventReader::next_binary() {
  char buf[kEventRecordBytes];
  in_.read(buf, kEventRecordBytes);
  const auto got = static_cast<std::size_t>(in_.gcount());
  if (got == 0) return std::nullopt;
  if (got != kEventRecordBytes) {
    throw ParseError(path_ + ": truncated record at byte offset " + std::to_string(offset_));
  }
  EventRecord e;
  std::memcpy(&e.t, buf, 8);
  std::memcpy(&e.x, buf + 8, 2);
  std::memcpy(&e.y, buf + 10, 2);
  std::int8_t raw;
  std::memcpy(&raw, buf + 12, 1);
  auto fail = [&](const std::string& why) {
    return ParseError(path_ + ": " + why + " at byte offset " + std::to_string(offset_));
  };
  if (!std::isfinite(e.t)) throw fail("non-finite timestamp");
  try {
    e.p = normalize_polarity(raw);
  } catch (const EventError& err) {
    throw fail(err.what());
  }
  if ((width_ && e.x >= width_) || (height_ && e.y >= height_)) {
    throw fail("coordinate outside sensor");
  }
  offset_ += kEventRecordBytes;
  return e;
}

std::vector<EventRecord> read_events(const std::filesystem::path& path, EventFormat format) {
  EventReader reader(path, format);
  std::vector<EventRecord> out;
  while (auto e = reader.next()) out.push_back(*e);
  return out;
}

void write_events_text(const std::filesystem::path& path, std::span<const EventRecord> events) {
  std::ofstream os(path);
  if (!os) throw ParseError("cannot open for writing: " + path.string());
  os << std::setprecision(17);
  for (const auto& e : events) {
    os << e.t << ' ' << e.x << ' ' << e.y << ' ' << static_cast<int>(e.p) << '\n';
  }
}

void write_events_binary(const std::filesystem::path& path, std::span<const EventRecord> events,
                         std::uint16_t width, std::uint16_t height) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw ParseError("cannot open for writing: " + path.string());
  char head[kEventHeaderBytes] = {};
  std::memcpy(head, kEventMagic, 8);
  std::memcpy(head + 8, &width, 2);
  std::memcpy(head + 10, &height, 2);
  os.write(head, kEventHeaderBytes);
  std::vector<char> buf(events.size() * kEventRecordBytes);
  char* dst = buf.data();
  for (const auto& e : events) {
    std::memcpy(dst, &e.t, 8);
    std::memcpy(dst + 8, &e.x, 2);
    std::memcpy(dst + 10, &e.y, 2);
    std::memcpy(dst + 12, &e.p, 1);
    dst += kEventRecordBytes;
  }
  os.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!os) throw ParseError("failed writing " + path.string());
}

}  // namespace unict::events
