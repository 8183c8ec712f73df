#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "egoexo/data/types.hpp"

namespace egoexo::data {

inline constexpr char kFeatureStoreMagic[4] = {'C', 'V', 'F', 'S'};
inline constexpr std::uint32_t kFeatureStoreVersion = 1;

/// Immutable clip_id -> frame features map loaded from a `CVFS` file.
class FeatureStore {
 public:
  FeatureStore() = default;
  FeatureStore(std::size_t dim, std::map<std::string, FeatureMatrix> entries)
      : dim_(dim), entries_(std::move(entries)) {}

  std::size_t dim() const { return dim_; }
  std::size_t size() const { return entries_.size(); }
  bool contains(const std::string& clip_id) const { return entries_.count(clip_id) != 0; }

  /// nullptr when the clip is absent.
  const FeatureMatrix* find(const std::string& clip_id) const;
  /// Throws ValidationError naming the clip when it is absent.
  const FeatureMatrix& at(const std::string& clip_id) const;

  const std::map<std::string, FeatureMatrix>& entries() const { return entries_; }

 private:
  std::size_t dim_ = 0;
  std::map<std::string, FeatureMatrix> entries_;
};

/// Layout (little-endian): magic "CVFS", version u32, dim u32, count u64, then
/// per clip id_len u16, id bytes, T u32, T*dim float32 values.
std::vector<std::uint8_t> encode_feature_store(std::span<const FeatureMatrix> entries,
                                               std::size_t dim);
FeatureStore decode_feature_store(std::span<const std::uint8_t> bytes);

void write_feature_store(std::span<const FeatureMatrix> entries, std::size_t dim,
                         const std::filesystem::path& path);
FeatureStore read_feature_store(const std::filesystem::path& path);

}  // namespace egoexo::data
