#pragma once

#include <span>
#include <vector>

#include "unict/events/event.hpp"

namespace unict::events {

/// Splits a time-sorted stream into one slice per consecutive frame pair.
/// Slice k covers [frame_k, frame_{k+1}); the last slice is closed at its
/// end so an event on the final frame timestamp is kept. Events before the
/// first or after the last frame are dropped. Throws EventError on unsorted
/// events or frame times.
std::vector<EventSlice> window_events(std::span<const EventRecord> stream,
                                      std::span<const double> frame_times);

}  // namespace unict::events
