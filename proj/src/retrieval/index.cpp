#include "egoexo/retrieval/index.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>

#include "egoexo/errors.hpp"
#include "egoexo/io.hpp"

namespace egoexo::retrieval {

void RetrievalIndex::validate() const {
  if (video.rows() != static_cast<Eigen::Index>(clip_ids.size()) ||
      text.rows() != static_cast<Eigen::Index>(clip_ids.size()) || video.cols() != text.cols())
    throw ShapeError("retrieval index: row counts or dims differ");
  if (!(temperature > 0.0)) throw ValidationError("retrieval index: temperature must be positive");
}

ScoreMode parse_score_mode(std::string_view text) {
  if (text == "exp") return ScoreMode::exp_similarity;
  if (text == "cosine") return ScoreMode::cosine;
  throw ValidationError("score mode must be \"exp\" or \"cosine\"");
}

std::string_view to_string(ScoreMode mode) {
  return mode == ScoreMode::exp_similarity ? "exp" : "cosine";
}

double averaged_similarity(const Eigen::VectorXd& query, const RetrievalIndex& index,
                           std::size_t row, ScoreMode mode) {
  const auto r = static_cast<Eigen::Index>(row);
  const double sv = index.video.row(r).dot(query);
  const double st = index.text.row(r).dot(query);
  if (mode == ScoreMode::cosine) return 0.5 * (sv + st);
  return 0.5 * (std::exp(sv / index.temperature) + std::exp(st / index.temperature));
}

std::vector<std::pair<std::string, double>> retrieve_topk(const Eigen::VectorXd& query,
                                                          const RetrievalIndex& index,
                                                          std::size_t k, ScoreMode mode) {
  if (k == 0) throw ValidationError("retrieve_topk: k must be positive");
  if (index.size() == 0) throw ValidationError("retrieve_topk: empty index");
  if (query.size() != index.video.cols()) throw ShapeError("retrieve_topk: query dim mismatch");
  std::vector<std::pair<std::string, double>> scored;
  scored.reserve(index.size());
  for (std::size_t i = 0; i < index.size(); ++i)
    scored.emplace_back(index.clip_ids[i], averaged_similarity(query, index, i, mode));
  const auto keep = std::min(k, scored.size());
  std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(keep), scored.end(),
                    [](const auto& a, const auto& b) {
                      if (a.second != b.second) return a.second > b.second;
                      return a.first < b.first;
                    });
  scored.resize(keep);
  return scored;
}

std::vector<std::uint8_t> encode_index(const RetrievalIndex& index) {
  index.validate();
  io::ByteWriter w;
  w.bytes(kIndexMagic, 4);
  w.put<std::uint32_t>(kIndexVersion);
  w.put<std::uint64_t>(index.size());
  w.put<std::uint32_t>(static_cast<std::uint32_t>(index.video.cols()));
  w.put<double>(index.temperature);
  for (const auto& id : index.clip_ids) w.u16_string(id);
  for (const auto* m : {&index.video, &index.text})
    for (Eigen::Index i = 0; i < m->rows(); ++i)
      for (Eigen::Index j = 0; j < m->cols(); ++j) w.put<float>(static_cast<float>((*m)(i, j)));
  return std::move(w.buffer());
}

RetrievalIndex decode_index(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 8 || std::memcmp(bytes.data(), kIndexMagic, 4) != 0)
    throw FormatError("bad retrieval index magic");
  io::ByteReader r(bytes);
  char magic[4];
  r.bytes(magic, 4, "magic");
  const auto version = r.get<std::uint32_t>("version");
  if (version != kIndexVersion) throw FormatError("unsupported index version " + std::to_string(version));
  RetrievalIndex index;
  const auto count = r.get<std::uint64_t>("count");
  const auto dim = r.get<std::uint32_t>("dim");
  index.temperature = r.get<double>("temperature");
  for (std::uint64_t i = 0; i < count; ++i) index.clip_ids.push_back(r.u16_string("clip id"));
  for (auto* m : {&index.video, &index.text}) {
    if (r.remaining() < count * dim * sizeof(float)) throw CorruptionError("truncated index matrix", r.offset());
    m->resize(static_cast<Eigen::Index>(count), dim);
    for (Eigen::Index i = 0; i < m->rows(); ++i)
      for (Eigen::Index j = 0; j < m->cols(); ++j) (*m)(i, j) = r.get<float>("matrix");
  }
  if (!r.done()) throw CorruptionError("trailing bytes in index", r.offset());
  index.validate();
  return index;
}

void save_index(const RetrievalIndex& index, const std::filesystem::path& path) {
  io::write_file_bytes(path, encode_index(index));
}

RetrievalIndex load_index(const std::filesystem::path& path) {
  return decode_index(io::read_file_bytes(path));
}

}  // namespace egoexo::retrieval
