// SPDX-License-Identifier: Apache-2.0
#include <badgnn/checkpoint.hpp>

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include <badgnn/error.hpp>

namespace badgnn {

namespace {

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

constexpr char kMagic[8] = {'B', 'A', 'D', 'G', 'N', 'N', 'C', 'K'};
constexpr std::uint8_t kMatrixKind = 0;
constexpr std::uint8_t kTextKind = 1;
constexpr const char *kStateRecord = "memory.state";
constexpr const char *kLastUpdateRecord = "memory.last_update";

template <typename T> void put(std::ostream &os, T v) {
  os.write(reinterpret_cast<const char *>(&v), sizeof(T));
}

void put_bytes(std::ostream &os, const std::string &s) {
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

class Reader {
public:
  explicit Reader(std::string data) : data_(std::move(data)) {}

  template <typename T> T get(const char *what) {
    T v;
    need(sizeof(T), what);
    std::memcpy(&v, data_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }

  std::string bytes(std::size_t n, const char *what) {
    need(n, what);
    std::string s = data_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  bool done() const { return pos_ == data_.size(); }

private:
  void need(std::size_t n, const char *what) const {
    if (data_.size() - pos_ < n)
      throw SchemaError(std::string("checkpoint truncated while reading ") + what);
  }

  std::string data_;
  std::size_t pos_ = 0;
};

} // namespace

void write_archive(const Archive &a, const std::filesystem::path &path) {
  std::ostringstream os(std::ios::binary);
  os.write(kMagic, sizeof kMagic);
  put<std::uint32_t>(os, kCheckpointVersion);
  put<std::uint32_t>(os, static_cast<std::uint32_t>(a.matrices.size() + a.texts.size()));
  // Texts first, then matrices; each group in name order.
  for (const auto &[name, text] : a.texts) {
    put<std::uint32_t>(os, static_cast<std::uint32_t>(name.size()));
    put_bytes(os, name);
    put<std::uint8_t>(os, kTextKind);
    put<std::uint64_t>(os, text.size());
    put_bytes(os, text);
  }
  for (const auto &[name, m] : a.matrices) {
    put<std::uint32_t>(os, static_cast<std::uint32_t>(name.size()));
    put_bytes(os, name);
    put<std::uint8_t>(os, kMatrixKind);
    put<std::uint64_t>(os, m.rows());
    put<std::uint64_t>(os, m.cols());
    for (double x : m.values())
      put<double>(os, x);
  }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f)
    throw IoError("cannot open for writing: " + path.string());
  const std::string bytes = os.str();
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f)
    throw IoError("write failed: " + path.string());
}

Archive read_archive(const std::filesystem::path &path) {
  std::ifstream f(path, std::ios::binary);
  if (!f)
    throw IoError("cannot open checkpoint: " + path.string());
  std::ostringstream buf;
  buf << f.rdbuf();
  Reader r(buf.str());
  if (r.bytes(sizeof kMagic, "magic") != std::string(kMagic, sizeof kMagic))
    throw SchemaError("not a checkpoint file: " + path.string());
  const auto version = r.get<std::uint32_t>("version");
  if (version != kCheckpointVersion)
    throw SchemaError("unsupported checkpoint version " + std::to_string(version));
  const auto n = r.get<std::uint32_t>("record count");
  Archive a;
  for (std::uint32_t i = 0; i < n; ++i) {
    const auto name_len = r.get<std::uint32_t>("name length");
    std::string name = r.bytes(name_len, "name");
    const auto kind = r.get<std::uint8_t>("record kind");
    if (kind == kTextKind) {
      const auto len = r.get<std::uint64_t>("text length");
      a.texts[name] = r.bytes(len, "text");
    } else if (kind == kMatrixKind) {
      const auto rows = r.get<std::uint64_t>("rows");
      const auto cols = r.get<std::uint64_t>("cols");
      Matrix m(rows, cols);
      for (double &x : m.values())
        x = r.get<double>("matrix data");
      a.matrices[name] = std::move(m);
    } else {
      throw SchemaError("unknown record kind in '" + name + "'");
    }
  }
  if (!r.done())
    throw SchemaError("trailing bytes after last checkpoint record");
  return a;
}

void store_params(Archive &a, const ModelParams &p) {
  ModelParams::visit(p, [&](const std::string &name, const Matrix &m) { a.matrices[name] = m; });
}

void load_params(const Archive &a, ModelParams &p) {
  ModelParams::visit(p, [&](const std::string &name, Matrix &m) {
    auto it = a.matrices.find(name);
    if (it == a.matrices.end())
      throw SchemaError("checkpoint lacks parameter '" + name + "'");
    if (!it->second.same_shape(m))
      throw SchemaError("parameter '" + name + "' has shape " +
                        std::to_string(it->second.rows()) + "x" +
                        std::to_string(it->second.cols()) + ", expected " +
                        std::to_string(m.rows()) + "x" + std::to_string(m.cols()));
    m = it->second;
  });
}

void store_memory(Archive &a, const NodeMemory &m) {
  a.matrices[kStateRecord] = m.states();
  a.matrices[kLastUpdateRecord] = Matrix::row_vector(m.last_updates());
}

void load_memory(const Archive &a, NodeMemory &m) {
  auto s = a.matrices.find(kStateRecord);
  auto t = a.matrices.find(kLastUpdateRecord);
  if (s == a.matrices.end() || t == a.matrices.end())
    throw SchemaError("checkpoint has no memory snapshot");
  const auto lu = t->second.values();
  m.restore(s->second, std::vector<double>(lu.begin(), lu.end()));
}

} // namespace badgnn
