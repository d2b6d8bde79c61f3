// SPDX-License-Identifier: Apache-2.0
#include <badgnn/events.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <set>
#include <sstream>
#include <string_view>

#include <badgnn/error.hpp>
#include <badgnn/random.hpp>

namespace badgnn {

EventStream::EventStream(std::vector<Event> events, std::size_t n_nodes, std::size_t d_e)
  : events_(std::move(events)), n_nodes_(n_nodes), d_e_(d_e) {
  for (std::size_t i = 0; i < events_.size(); ++i) {
    const Event &e = events_[i];
    if (e.feat.size() != d_e_)
      throw SchemaError("event " + std::to_string(i) + ": feature length " +
                        std::to_string(e.feat.size()) + ", expected " + std::to_string(d_e_));
    if (e.src >= n_nodes_ || e.dst >= n_nodes_)
      throw SchemaError("event " + std::to_string(i) + ": node id out of range");
    if (i > 0 && !event_before(events_[i - 1], e))
      throw TemporalOrderError("event " + std::to_string(i) + ": stream not sorted by (t, seq)");
  }
}

EventStream EventStream::slice(std::size_t begin, std::size_t count) const {
  if (begin + count > events_.size())
    throw DimensionError("EventStream::slice: out of range");
  std::vector<Event> part(events_.begin() + static_cast<std::ptrdiff_t>(begin),
                          events_.begin() + static_cast<std::ptrdiff_t>(begin + count));
  EventStream out;
  out.events_ = std::move(part);
  out.n_nodes_ = n_nodes_;
  out.d_e_ = d_e_;
  return out;
}

std::vector<NodeId> EventStream::destination_universe() const {
  std::vector<NodeId> ids;
  ids.reserve(events_.size());
  for (const Event &e : events_)
    ids.push_back(e.dst);
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  return ids;
}

namespace {

struct RawRow {
  long long user;
  long long item;
  double t;
  int label;
  std::vector<double> feat;
};

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t'))
    s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r'))
    s.remove_suffix(1);
  return s;
}

template <typename T>
T parse_number(std::string_view field, std::size_t line, const char *what) {
  field = trim(field);
  T value{};
  const char *first = field.data();
  const char *last = field.data() + field.size();
  if (!field.empty() && *first == '+')
    ++first;
  auto [ptr, ec] = std::from_chars(first, last, value);
  if (field.empty() || ec != std::errc() || ptr != last)
    throw ParseError(std::string("non-numeric ") + what + " '" + std::string(field) + "'", line);
  if constexpr (std::is_floating_point_v<T>) {
    if (!std::isfinite(value))
      throw ParseError(std::string("non-finite ") + what, line);
  }
  return value;
}

void split_fields(std::string_view line, std::vector<std::string_view> &out) {
  out.clear();
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      out.push_back(line.substr(start));
      return;
    }
    out.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
}

} // namespace

LoadedStream parse_jodie_csv(std::istream &in, std::size_t max_events) {
  std::string line;
  if (!std::getline(in, line))
    throw ParseError("missing header line", 1);

  std::vector<RawRow> rows;
  std::vector<std::string_view> fields;
  std::size_t columns = 0;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    std::string_view view = trim(line);
    if (view.empty())
      continue;
    split_fields(view, fields);
    if (columns == 0) {
      if (fields.size() < 4)
        throw ParseError("expected at least 4 columns, got " + std::to_string(fields.size()),
                         line_no);
      columns = fields.size();
    } else if (fields.size() != columns) {
      throw ParseError("expected " + std::to_string(columns) + " columns, got " +
                         std::to_string(fields.size()),
                       line_no);
    }
    RawRow row;
    row.user = parse_number<long long>(fields[0], line_no, "user_id");
    row.item = parse_number<long long>(fields[1], line_no, "item_id");
    row.t = parse_number<double>(fields[2], line_no, "timestamp");
    row.label = static_cast<int>(parse_number<double>(fields[3], line_no, "state_label"));
    if (row.user < 0 || row.item < 0)
      throw ParseError("negative node id", line_no);
    if (row.t < 0.0)
      throw ParseError("negative timestamp", line_no);
    row.feat.reserve(columns - 4);
    for (std::size_t k = 4; k < columns; ++k)
      row.feat.push_back(parse_number<double>(fields[k], line_no, "feature"));
    rows.push_back(std::move(row));
    if (max_events != 0 && rows.size() == max_events)
      break;
  }

  std::map<long long, NodeId> users;
  std::map<long long, NodeId> items;
  for (const RawRow &r : rows) {
    users.emplace(r.user, 0);
    items.emplace(r.item, 0);
  }
  NodeId next = 0;
  for (auto &[raw, id] : users)
    id = next++;
  for (auto &[raw, id] : items)
    id = next++;

  const std::size_t d_e = columns >= 4 ? columns - 4 : 0;
  std::vector<Event> events;
  events.reserve(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    RawRow &r = rows[i];
    if (r.feat.size() != d_e)
      throw SchemaError("row " + std::to_string(i) + ": inconsistent feature length");
    Event e;
    e.src = users.at(r.user);
    e.dst = items.at(r.item);
    e.t = r.t;
    e.feat = std::move(r.feat);
    e.label = r.label;
    e.seq = i;
    events.push_back(std::move(e));
  }
  std::stable_sort(events.begin(), events.end(),
                   [](const Event &a, const Event &b) { return event_before(a, b); });

  LoadedStream out;
  out.n_users = users.size();
  out.n_items = items.size();
  out.stream = EventStream(std::move(events), next, d_e);
  return out;
}

LoadedStream load_jodie_csv(const std::filesystem::path &path, std::size_t max_events) {
  std::ifstream in(path);
  if (!in)
    throw IoError("cannot open " + path.string());
  return parse_jodie_csv(in, max_events);
}

StreamStats stream_stats(const LoadedStream &loaded) {
  StreamStats s;
  const EventStream &st = loaded.stream;
  s.n_nodes = st.n_nodes();
  s.n_users = loaded.n_users;
  s.n_items = loaded.n_items;
  s.n_events = st.size();
  s.d_e = st.d_e();
  std::set<double> stamps;
  for (const Event &e : st.events())
    stamps.insert(e.t);
  s.n_timestamps = stamps.size();
  if (!st.empty()) {
    s.t_min = st[0].t;
    s.t_max = st[st.size() - 1].t;
  }
  return s;
}

Split chronological_split(const EventStream &s, double train_frac, double val_frac) {
  auto in_open_unit = [](double f) { return f > 0.0 && f < 1.0; };
  if (!in_open_unit(train_frac) || !in_open_unit(val_frac) || train_frac + val_frac >= 1.0)
    throw ConfigError("chronological_split: need train_frac, val_frac in (0,1) with sum < 1");
  const std::size_t m = s.size();
  const auto n_train = static_cast<std::size_t>(std::floor(train_frac * static_cast<double>(m)));
  const auto n_val = static_cast<std::size_t>(std::floor(val_frac * static_cast<double>(m)));
  Split out;
  out.train = s.slice(0, n_train);
  out.val = s.slice(n_train, n_val);
  out.test = s.slice(n_train + n_val, m - n_train - n_val);
  return out;
}

std::vector<Batch> make_batches(const EventStream &s, std::size_t batch_size) {
  if (batch_size == 0)
    throw ConfigError("make_batches: batch_size must be >= 1");
  std::vector<Batch> out;
  const auto all = s.events();
  for (std::size_t begin = 0, k = 0; begin < all.size(); begin += batch_size, ++k) {
    const std::size_t len = std::min(batch_size, all.size() - begin);
    out.push_back(Batch{all.subspan(begin, len), k});
  }
  return out;
}

std::vector<NodeId> sample_negatives(const Batch &b, std::span<const NodeId> dst_universe,
                                     std::uint64_t seed) {
  if (dst_universe.empty())
    throw ConfigError("sample_negatives: empty destination universe");
  Rng rng(seed);
  std::vector<NodeId> out(b.events.size());
  for (auto &id : out)
    id = dst_universe[rng.below(dst_universe.size())];
  return out;
}

EventStream make_synthetic_stream(const SyntheticOptions &opts) {
  if (opts.n_users == 0 || opts.n_items == 0)
    throw ConfigError("make_synthetic_stream: need at least one user and one item");
  Rng rng(opts.seed);
  const std::size_t k = std::max<std::size_t>(1, std::min(opts.preferred_items, opts.n_items));
  std::vector<std::vector<NodeId>> preferred(opts.n_users);
  for (auto &p : preferred)
    for (std::size_t j = 0; j < k; ++j)
      p.push_back(static_cast<NodeId>(opts.n_users + rng.below(opts.n_items)));

  // Each item carries a fixed feature signature; events add small noise.
  std::vector<std::vector<double>> signature(opts.n_items, std::vector<double>(opts.d_e));
  for (auto &sig : signature)
    for (double &v : sig)
      v = rng.uniform(-1.0, 1.0);

  std::vector<Event> events;
  events.reserve(opts.n_events);
  for (std::size_t i = 0; i < opts.n_events; ++i) {
    Event e;
    e.src = static_cast<NodeId>(rng.below(opts.n_users));
    if (rng.uniform() < opts.noise)
      e.dst = static_cast<NodeId>(opts.n_users + rng.below(opts.n_items));
    else
      e.dst = preferred[e.src][rng.below(k)];
    // Occasional equal timestamps exercise the seq tie-break.
    e.t = opts.time_step * static_cast<double>(i - (i % 7 == 6 ? 1 : 0));
    e.feat.resize(opts.d_e);
    const auto &sig = signature[e.dst - opts.n_users];
    for (std::size_t f = 0; f < opts.d_e; ++f)
      e.feat[f] = sig[f] + 0.1 * rng.normal();
    e.label = 0;
    e.seq = i;
    events.push_back(std::move(e));
  }
  return EventStream(std::move(events), opts.n_users + opts.n_items, opts.d_e);
}

void write_jodie_csv(const EventStream &s, std::size_t n_users, const std::filesystem::path &path) {
  std::ofstream out(path);
  if (!out)
    throw IoError("cannot write " + path.string());
  out << "user_id,item_id,timestamp,state_label,comma_separated_list_of_features\n";
  out << std::setprecision(17);
  for (const Event &e : s.events()) {
    out << e.src << ',' << (e.dst - n_users) << ',' << e.t << ',' << e.label.value_or(0);
    for (double f : e.feat)
      out << ',' << f;
    out << '\n';
  }
}

} // namespace badgnn
