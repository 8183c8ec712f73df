#include "egoexo/nn/checkpoint.hpp"

#include <cstring>

#include "egoexo/errors.hpp"
#include "egoexo/io.hpp"

namespace egoexo::nn {

Checkpoint Checkpoint::from(const ParameterSet& params, std::string config_json) {
  Checkpoint ck;
  ck.config_json = std::move(config_json);
  for (const auto& [name, v] : params.items()) ck.tensors.emplace_back(name, v.value());
  return ck;
}

void Checkpoint::restore(ParameterSet& params) const {
  for (const auto& [name, var] : params.items()) {
    const Matrix* found = nullptr;
    for (const auto& [n, m] : tensors)
      if (n == name) found = &m;
    if (!found) throw FormatError("checkpoint has no tensor " + name);
    if (found->rows() != var.rows() || found->cols() != var.cols())
      throw FormatError("checkpoint tensor " + name + " has shape " + std::to_string(found->rows()) +
                        "x" + std::to_string(found->cols()) + ", model expects " +
                        std::to_string(var.rows()) + "x" + std::to_string(var.cols()));
    Var v = var;
    v.mutable_value() = *found;
  }
}

std::vector<std::uint8_t> Checkpoint::encode() const {
  io::ByteWriter w;
  w.bytes(kCheckpointMagic, 4);
  w.put<std::uint32_t>(kCheckpointVersion);
  w.u32_string(config_json);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(tensors.size()));
  for (const auto& [name, m] : tensors) {
    w.u16_string(name);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(m.rows()));
    w.put<std::uint32_t>(static_cast<std::uint32_t>(m.cols()));
    for (Eigen::Index i = 0; i < m.rows(); ++i)
      for (Eigen::Index j = 0; j < m.cols(); ++j) w.put<float>(static_cast<float>(m(i, j)));
  }
  return std::move(w.buffer());
}

Checkpoint Checkpoint::decode(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 8 || std::memcmp(bytes.data(), kCheckpointMagic, 4) != 0)
    throw FormatError("bad checkpoint magic");
  io::ByteReader r(bytes);
  char magic[4];
  r.bytes(magic, 4, "magic");
  const auto version = r.get<std::uint32_t>("version");
  if (version != kCheckpointVersion)
    throw FormatError("unsupported checkpoint version " + std::to_string(version));
  Checkpoint ck;
  ck.config_json = r.u32_string("config");
  const auto count = r.get<std::uint32_t>("tensor count");
  for (std::uint32_t t = 0; t < count; ++t) {
    auto name = r.u16_string("tensor name");
    const auto rows = r.get<std::uint32_t>("rows");
    const auto cols = r.get<std::uint32_t>("cols");
    const std::size_t n = static_cast<std::size_t>(rows) * cols;
    if (r.remaining() < n * sizeof(float)) throw CorruptionError("truncated tensor " + name, r.offset());
    Matrix m(rows, cols);
    for (std::uint32_t i = 0; i < rows; ++i)
      for (std::uint32_t j = 0; j < cols; ++j) m(i, j) = r.get<float>("tensor value");
    ck.tensors.emplace_back(std::move(name), std::move(m));
  }
  if (!r.done()) throw CorruptionError("trailing bytes in checkpoint", r.offset());
  return ck;
}

void Checkpoint::save(const std::filesystem::path& path) const { io::write_file_bytes(path, encode()); }

Checkpoint Checkpoint::load(const std::filesystem::path& path) {
  return decode(io::read_file_bytes(path));
}

}  // namespace egoexo::nn
