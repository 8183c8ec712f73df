#include "egoexo/data/feature_store.hpp"

#include <cmath>
#include <cstring>

#include "egoexo/errors.hpp"
#include "egoexo/io.hpp"

namespace egoexo::data {

const FeatureMatrix* FeatureStore::find(const std::string& clip_id) const {
  auto it = entries_.find(clip_id);
  return it == entries_.end() ? nullptr : &it->second;
}

const FeatureMatrix& FeatureStore::at(const std::string& clip_id) const {
  if (const auto* f = find(clip_id)) return *f;
  throw ValidationError("clip " + clip_id + " not found in feature store");
}

std::vector<std::uint8_t> encode_feature_store(std::span<const FeatureMatrix> entries,
                                               std::size_t dim) {
  if (dim == 0 || dim > 0xFFFFFFFFu) throw ValidationError("feature dim must be a positive u32");
  std::string mismatched;
  for (const auto& e : entries) {
    if (e.dim() != dim || e.frame_count() == 0) {
      mismatched += (mismatched.empty() ? "" : ", ") + e.clip_id;
      continue;
    }
    if (!e.frames.allFinite()) throw ValidationError("clip " + e.clip_id + " has non-finite features");
  }
  if (!mismatched.empty())
    throw ValidationError("feature dimension mismatch (expected T>=1 x " + std::to_string(dim) +
                          ") for clips: " + mismatched);

  io::ByteWriter w;
  w.bytes(kFeatureStoreMagic, 4);
  w.put<std::uint32_t>(kFeatureStoreVersion);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(dim));
  w.put<std::uint64_t>(entries.size());
  for (const auto& e : entries) {
    w.u16_string(e.clip_id);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(e.frame_count()));
    w.bytes(e.frames.data(), e.frames.size() * sizeof(float));
  }
  return std::move(w.buffer());
}

FeatureStore decode_feature_store(std::span<const std::uint8_t> bytes) {
  io::ByteReader r(bytes);
  char magic[4];
  if (bytes.size() < 4) throw FormatError("feature store too short for magic");
  r.bytes(magic, 4, "magic");
  if (std::memcmp(magic, kFeatureStoreMagic, 4) != 0) throw FormatError("bad feature store magic");
  auto version = r.get<std::uint32_t>("version");
  if (version != kFeatureStoreVersion)
    throw FormatError("unsupported feature store version " + std::to_string(version));
  auto dim = r.get<std::uint32_t>("dim");
  if (dim == 0) throw CorruptionError("zero feature dim", r.offset() - 4);
  auto count = r.get<std::uint64_t>("count");

  std::map<std::string, FeatureMatrix> entries;
  for (std::uint64_t i = 0; i < count; ++i) {
    const auto entry_offset = r.offset();
    FeatureMatrix m;
    m.clip_id = r.u16_string("clip id");
    auto frames = r.get<std::uint32_t>("frame count");
    if (frames == 0) throw CorruptionError("clip " + m.clip_id + " has zero frames", entry_offset);
    const std::size_t n = static_cast<std::size_t>(frames) * dim;
    if (r.remaining() < n * sizeof(float))
      throw CorruptionError("truncated payload for clip " + m.clip_id, r.offset());
    m.frames.resize(frames, dim);
    r.bytes(m.frames.data(), n * sizeof(float), "payload");
    if (entries.count(m.clip_id)) throw CorruptionError("duplicate clip id " + m.clip_id, entry_offset);
    auto id = m.clip_id;
    entries.emplace(std::move(id), std::move(m));
  }
  if (!r.done()) throw CorruptionError("trailing bytes after last clip", r.offset());
  return FeatureStore(dim, std::move(entries));
}

void write_feature_store(std::span<const FeatureMatrix> entries, std::size_t dim,
                         const std::filesystem::path& path) {
  io::write_file_bytes(path, encode_feature_store(entries, dim));
}

FeatureStore read_feature_store(const std::filesystem::path& path) {
  return decode_feature_store(io::read_file_bytes(path));
}

}  // namespace egoexo::data
