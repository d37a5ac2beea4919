#pragma once

#include <cstdint>
#include <stdexcept>
#include <vector>

namespace unict::events {

class EventError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct EventRecord {
  double t = 0.0;  // seconds
  std::uint16_t x = 0;
  std::uint16_t y = 0;
  std::int8_t p = 1;  // -1 or +1

  friend bool operator==(const EventRecord&, const EventRecord&) = default;
};

/// Events falling inside [t0, t0 + duration], time-ordered.
struct EventSlice {
  std::vector<EventRecord> events;
  double t0 = 0.0;
  double duration = 0.0;
};

/// Maps 0/1 and -1/+1 encodings onto -1/+1; anything else is an error.
std::int8_t normalize_polarity(long raw);

}  // namespace unict::events
