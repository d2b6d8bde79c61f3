// SPDX-License-Identifier: Apache-2.0
/**
 * @file   events.hpp
 * @brief  Interaction event streams: JODIE CSV ingestion, chronological
 *         splits, temporal batching and negative destination sampling.
 */
#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <tuple>
#include <vector>

namespace badgnn {

using NodeId = std::uint32_t;

struct Event {
  NodeId src = 0;
  NodeId dst = 0;
  double t = 0.0;
  std::vector<double> feat;
  std::optional<int> label;
  /// Position in the source file (0-based data row). Breaks timestamp ties.
  std::uint64_t seq = 0;
};

/// Total order used everywhere events are compared in time.
inline bool event_before(const Event &a, const Event &b) noexcept {
  return a.t < b.t || (a.t == b.t && a.seq < b.seq);
}

class EventStream {
public:
  EventStream() = default;
  /// Validates the invariants: feature length d_e, ids below n_nodes,
  /// (t, seq) non-decreasing with strictly increasing seq along ties.
  EventStream(std::vector<Event> events, std::size_t n_nodes, std::size_t d_e);

  std::span<const Event> events() const noexcept { return events_; }
  const Event &operator[](std::size_t i) const { return events_[i]; }
  std::size_t size() const noexcept { return events_.size(); }
  bool empty() const noexcept { return events_.empty(); }
  std::size_t n_nodes() const noexcept { return n_nodes_; }
  std::size_t d_e() const noexcept { return d_e_; }

  /// Events [begin, begin + count) as a new stream over the same node space.
  EventStream slice(std::size_t begin, std::size_t count) const;

  /// Distinct destination ids, ascending.
  std::vector<NodeId> destination_universe() const;

private:
  std::vector<Event> events_;
  std::size_t n_nodes_ = 0;
  std::size_t d_e_ = 0;
};

struct StreamStats {
  std::size_t n_nodes = 0;
  std::size_t n_users = 0;
  std::size_t n_items = 0;
  std::size_t n_events = 0;
  std::size_t n_timestamps = 0;
  std::size_t d_e = 0;
  double t_min = 0.0;
  double t_max = 0.0;
};

struct LoadedStream {
  EventStream stream;
  std::size_t n_users = 0;
  std::size_t n_items = 0;
};

/// Reads `user_id,item_id,timestamp,state_label,f1,...,f_{d_e}` after one
/// header line. Users map to [0, U) and items to [U, U + I), each in
/// ascending order of their original id. `max_events` truncates to the
/// first N data rows (0 = all).
LoadedStream load_jodie_csv(const std::filesystem::path &path, std::size_t max_events = 0);
LoadedStream parse_jodie_csv(std::istream &in, std::size_t max_events = 0);

StreamStats stream_stats(const LoadedStream &loaded);

struct Split {
  EventStream train;
  EventStream val;
  EventStream test;
};

/// train = first floor(train_frac * m) events, val = next floor(val_frac * m),
/// test = the rest.
Split chronological_split(const EventStream &s, double train_frac, double val_frac);

struct Batch {
  std::span<const Event> events;
  std::size_t index = 0;
};

/// ceil(m / batch_size) contiguous batches in stream order. The spans point
/// into `s`, which must outlive them.
std::vector<Batch> make_batches(const EventStream &s, std::size_t batch_size);

/// One uniformly drawn destination per event of `b`.
std::vector<NodeId> sample_negatives(const Batch &b, std::span<const NodeId> dst_universe,
                                     std::uint64_t seed);

/// Bipartite stream with a few "preferred items" per user plus noise.
/// Timestamps are increasing integers scaled by `time_step`.
struct SyntheticOptions {
  std::size_t n_users = 20;
  std::size_t n_items = 10;
  std::size_t n_events = 1000;
  std::size_t d_e = 4;
  std::size_t preferred_items = 2;
  double noise = 0.2;
  double time_step = 1.0;
  std::uint64_t seed = 0;
};

EventStream make_synthetic_stream(const SyntheticOptions &opts);

/// Writes a stream back out in JODIE CSV layout (users first, then items).
void write_jodie_csv(const EventStream &s, std::size_t n_users, const std::filesystem::path &path);

} // namespace badgnn
