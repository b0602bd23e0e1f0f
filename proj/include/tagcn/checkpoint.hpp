#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "tagcn/error.hpp"
#include "tagcn/tensor.hpp"

namespace tagcn {

// Flat named-array container persisted as:
//   magic "TGCK" | u32 version | u32 entry count
//   per entry: u32 name bytes | name (UTF-8) | u32 rank | u64 extents[rank]
//              | f64 data, little-endian, row-major
// Round-trips bit-exactly for double payloads.
struct Checkpoint {
  static constexpr std::uint32_t kVersion = 1;

  struct Entry {
    Shape shape;
    std::vector<double> data;
  };

  std::map<std::string, Entry> entries;

  void put(const std::string& name, const Shape& shape, const std::vector<double>& data) {
    entries[name] = Entry{shape, data};
  }

  template <typename Scalar>
  void put_tensor(const std::string& name, const TensorT<Scalar>& t) {
    Entry e;
    e.shape = t.shape();
    e.data.assign(t.values().data(), t.values().data() + t.size());
    entries[name] = std::move(e);
  }

  const Entry& get(const std::string& name) const {
    auto it = entries.find(name);
    if (it == entries.end()) fail(ErrorKind::format, "checkpoint: missing entry '" + name + "'");
    return it->second;
  }

  bool has(const std::string& name) const { return entries.count(name) != 0; }
};

namespace detail {

template <typename T>
void write_le(std::ostream& os, T v) {
  static_assert(std::is_trivially_copyable_v<T>);
  // Host is little-endian on every supported target; bytes go out as-is.
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_le(std::istream& is, const char* what) {
  T v{};
  if (!is.read(reinterpret_cast<char*>(&v), sizeof(T)))
    fail(ErrorKind::format, std::string("checkpoint: truncated ") + what);
  return v;
}

}  // namespace detail

inline void save_checkpoint(const Checkpoint& ck, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) fail(ErrorKind::io, "cannot open '" + path + "' for writing");
  os.write("TGCK", 4);
  detail::write_le<std::uint32_t>(os, Checkpoint::kVersion);
  detail::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(ck.entries.size()));
  for (const auto& [name, entry] : ck.entries) {
    detail::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    detail::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(entry.shape.size()));
    for (Index e : entry.shape) detail::write_le<std::uint64_t>(os, static_cast<std::uint64_t>(e));
    os.write(reinterpret_cast<const char*>(entry.data.data()),
             static_cast<std::streamsize>(entry.data.size() * sizeof(double)));
  }
  if (!os) fail(ErrorKind::io, "write failure on '" + path + "'");
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) fail(ErrorKind::io, "cannot open '" + path + "' for reading");
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, "TGCK", 4) != 0)
    fail(ErrorKind::format, "'" + path + "' is not a checkpoint file");
  const auto version = detail::read_le<std::uint32_t>(is, "version");
  if (version != Checkpoint::kVersion)
    fail(ErrorKind::format, "unsupported checkpoint version " + std::to_string(version));
  const auto count = detail::read_le<std::uint32_t>(is, "entry count");
  Checkpoint ck;
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto name_len = detail::read_le<std::uint32_t>(is, "name length");
    std::string name(name_len, '\0');
    if (!is.read(name.data(), name_len)) fail(ErrorKind::format, "checkpoint: truncated name");
    const auto rank = detail::read_le<std::uint32_t>(is, "rank");
    Checkpoint::Entry entry;
    std::uint64_t total = 1;
    for (std::uint32_t d = 0; d < rank; ++d) {
      const auto ext = detail::read_le<std::uint64_t>(is, "extent");
      if (ext == 0) fail(ErrorKind::format, "checkpoint: zero extent in '" + name + "'");
      entry.shape.push_back(static_cast<Index>(ext));
      total *= ext;
    }
    entry.data.resize(total);
    if (!is.read(reinterpret_cast<char*>(entry.data.data()),
                 static_cast<std::streamsize>(total * sizeof(double))))
      fail(ErrorKind::format, "checkpoint: truncated payload in '" + name + "'");
    ck.entries[name] = std::move(entry);
  }
  return ck;
}

}  // namespace tagcn
