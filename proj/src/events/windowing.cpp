#include "unict/events/windowing.hpp"

#include <algorithm>
#include <string>

namespace unict::events {

std::vector<EventSlice> window_events(std::span<const EventRecord> stream,
                                      std::span<const double> frame_times) {
  for (std::size_t i = 1; i < frame_times.size(); ++i) {
    if (!(frame_times[i] > frame_times[i - 1])) {
      throw EventError("frame timestamps not strictly increasing at index " + std::to_string(i));
    }
  }
  for (std::size_t i = 1; i < stream.size(); ++i) {
    if (stream[i].t < stream[i - 1].t) {
      throw EventError("event stream not time-sorted at index " + std::to_string(i));
    }
  }
  std::vector<EventSlice> slices;
  if (frame_times.size() < 2) return slices;
  const std::size_t n = frame_times.size() - 1;
  slices.reserve(n);
  auto cursor = std::lower_bound(stream.begin(), stream.end(), frame_times[0],
                                 [](const EventRecord& e, double t) { return e.t < t; });
  for (std::size_t k = 0; k < n; ++k) {
    EventSlice s;
    s.t0 = frame_times[k];
    s.duration = frame_times[k + 1] - frame_times[k];
    const double end = frame_times[k + 1];
    const bool last = k + 1 == n;
    auto stop = std::find_if(cursor, stream.end(), [&](const EventRecord& e) {
      return last ? e.t > end : e.t >= end;
    });
    s.events.assign(cursor, stop);
    cursor = stop;
    slices.push_back(std::move(s));
  }
  return slices;
}

}  // namespace unict::events
