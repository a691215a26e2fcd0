#ifndef LESITA_CHECKPOINT_HPP
#define LESITA_CHECKPOINT_HPP

#include <cstdint>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "lesita/common.hpp"
#include "lesita/pipelines.hpp"
#include "lesita/training.hpp"
#include "lesita/unfolded.hpp"

namespace lesita {

// Self-describing binary container, little-endian throughout:
//   8-byte magic "LSTCKPT\0"
//   u32 version (currently 1)
//   u64 metadata length, then that many bytes of JSON
//   u64 block count, then per block:
//     u16 name length, name bytes
//     u8 ndims (0 scalar, 1 vector, 2 matrix), ndims x u64 dims
//     row-major f64 payload
struct CheckpointBlock {
  std::string name;
  std::vector<Index> dims;        // empty for scalars
  std::vector<double> data;       // row-major
};

struct Checkpoint {
  nlohmann::json metadata = nlohmann::json::object();
  std::vector<CheckpointBlock> blocks;

  const CheckpointBlock* find(const std::string& name) const {
    for (const CheckpointBlock& b : blocks)
      if (b.name == name) return &b;
    return nullptr;
  }

  const CheckpointBlock& at(const std::string& name) const {
    const CheckpointBlock* b = find(name);
    if (!b) throw DataError("checkpoint: missing block '" + name + "'");
    return *b;
  }

  void add_matrix(const std::string& name, const Matrix& m) {
    CheckpointBlock b;
    b.name = name;
    b.dims = {m.rows(), m.cols()};
    b.data.reserve(static_cast<std::size_t>(m.size()));
    for (Index r = 0; r < m.rows(); ++r)
      for (Index c = 0; c < m.cols(); ++c) b.data.push_back(m(r, c));
    blocks.push_back(std::move(b));
  }

  void add_scalar(const std::string& name, double v) {
    blocks.push_back(CheckpointBlock{name, {}, {v}});
  }

  Matrix matrix(const std::string& name) const {
    const CheckpointBlock& b = at(name);
    if (b.dims.size() != 2)
      throw DataError("checkpoint: block '" + name + "' is not a matrix");
    Matrix m(b.dims[0], b.dims[1]);
    std::size_t at_ = 0;
    for (Index r = 0; r < m.rows(); ++r)
      for (Index c = 0; c < m.cols(); ++c) m(r, c) = b.data[at_++];
    return m;
  }

  double scalar(const std::string& name) const {
    const CheckpointBlock& b = at(name);
    if (!b.dims.empty() || b.data.size() != 1)
      throw DataError("checkpoint: block '" + name + "' is not a scalar");
    return b.data[0];
  }
};

namespace detail {

constexpr char kCheckpointMagic[8] = {'L', 'S', 'T', 'C', 'K', 'P', 'T', '\0'};
constexpr std::uint32_t kCheckpointVersion = 1;

class BinaryReader {
 public:
  BinaryReader(std::istream& in, std::string path) : in_(in), path_(std::move(path)) {}

  void read(void* dst, std::size_t n, const char* what) {
    in_.read(static_cast<char*>(dst), static_cast<std::streamsize>(n));
    if (in_.gcount() != static_cast<std::streamsize>(n))
      throw DataError(path_ + ": truncated while reading " + what + " at byte offset " +
                      std::to_string(offset_));
    offset_ += n;
  }

  template <class T>
  T value(const char* what) {
    T v{};
    read(&v, sizeof(T), what);
    return v;
  }

  std::uint64_t offset() const { return offset_; }
  const std::string& path() const { return path_; }

 private:
  std::istream& in_;
  std::string path_;
  std::uint64_t offset_ = 0;
};

template <class T>
void write_value(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

}  // namespace detail

inline void save_checkpoint(const std::string& path, const Checkpoint& cp) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("save_checkpoint: cannot open " + path + " for writing");
  out.write(detail::kCheckpointMagic, sizeof(detail::kCheckpointMagic));
  detail::write_value<std::uint32_t>(out, detail::kCheckpointVersion);
  const std::string meta = cp.metadata.dump();
  detail::write_value<std::uint64_t>(out, meta.size());
  out.write(meta.data(), static_cast<std::streamsize>(meta.size()));
  detail::write_value<std::uint64_t>(out, cp.blocks.size());
  for (const CheckpointBlock& b : cp.blocks) {
    if (b.name.size() > 0xffff) throw InvalidParameterError("save_checkpoint: block name too long");
    detail::write_value<std::uint16_t>(out, static_cast<std::uint16_t>(b.name.size()));
    out.write(b.name.data(), static_cast<std::streamsize>(b.name.size()));
    detail::write_value<std::uint8_t>(out, static_cast<std::uint8_t>(b.dims.size()));
    std::size_t expect = 1;
    for (Index d : b.dims) {
      detail::write_value<std::uint64_t>(out, static_cast<std::uint64_t>(d));
      expect *= static_cast<std::size_t>(d);
    }
    if (b.data.size() != expect)
      throw InvalidParameterError("save_checkpoint: block '" + b.name +
                                  "' payload does not match its dims");
    out.write(reinterpret_cast<const char*>(b.data.data()),
              static_cast<std::streamsize>(b.data.size() * sizeof(double)));
  }
  if (!out) throw DataError("save_checkpoint: write failed for " + path);
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("load_checkpoint: cannot open " + path);
  detail::BinaryReader r(in, path);
  char magic[8];
  r.read(magic, sizeof(magic), "magic");
  for (std::size_t i = 0; i < sizeof(magic); ++i)
    if (magic[i] != detail::kCheckpointMagic[i])
      throw DataError(path + ": bad magic at byte offset 0 (not a checkpoint file)");
  const auto version = r.value<std::uint32_t>("version");
  if (version != detail::kCheckpointVersion)
    throw DataError(path + ": unsupported checkpoint version " + std::to_string(version));
  const auto meta_len = r.value<std::uint64_t>("metadata length");
  std::string meta(meta_len, '\0');
  if (meta_len > 0) r.read(meta.data(), meta_len, "metadata");
  Checkpoint cp;
  try {
    cp.metadata = nlohmann::json::parse(meta);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(path + ": metadata is not valid JSON (" + e.what() + ")");
  }
  const auto nblocks = r.value<std::uint64_t>("block count");
  cp.blocks.reserve(nblocks);
  for (std::uint64_t i = 0; i < nblocks; ++i) {
    CheckpointBlock b;
    const auto name_len = r.value<std::uint16_t>("block name length");
    b.name.resize(name_len);
    if (name_len > 0) r.read(b.name.data(), name_len, "block name");
    const auto ndims = r.value<std::uint8_t>("block rank");
    if (ndims > 2)
      throw DataError(path + ": block '" + b.name + "' has unsupported rank " +
                      std::to_string(ndims) + " at byte offset " + std::to_string(r.offset()));
    std::size_t count = 1;
    for (std::uint8_t d = 0; d < ndims; ++d) {
      const auto dim = r.value<std::uint64_t>("block dimension");
      b.dims.push_back(static_cast<Index>(dim));
      count *= static_cast<std::size_t>(dim);
    }
    b.data.resize(count);
    if (count > 0) r.read(b.data.data(), count * sizeof(double), "block payload");
    cp.blocks.push_back(std::move(b));
  }
  return cp;
}

// ---------------------------------------------------------------------------
// Model packing.  Network blocks are named <slot><block index>, e.g. S0 / W0 /
// theta0 for plain networks and Q0 / R0 / mu0 with side information; composite
// models prefix the branch ("main.", "sinet.") and add D / Phi.
// ---------------------------------------------------------------------------

namespace detail {

inline void pack_network_blocks(Checkpoint& cp, const UnfoldedNetwork& net,
                                const std::string& prefix) {
  const SlotNames slots = slot_names(net.kind());
  const auto& blocks = net.blocks();
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    const std::string suffix = std::to_string(b);
    cp.add_matrix(prefix + slots.s + suffix, blocks[b].S);
    cp.add_matrix(prefix + slots.w + suffix, blocks[b].W);
    cp.add_scalar(prefix + slots.theta + suffix, blocks[b].theta);
  }
}

inline void unpack_network_blocks(const Checkpoint& cp, UnfoldedNetwork& net,
                                  const std::string& prefix) {
  const SlotNames slots = slot_names(net.kind());
  auto& blocks = net.blocks();
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    const std::string suffix = std::to_string(b);
    const Matrix S = cp.matrix(prefix + slots.s + suffix);
    const Matrix W = cp.matrix(prefix + slots.w + suffix);
    if (S.rows() != net.code_dim() || S.cols() != net.code_dim() || W.rows() != net.code_dim() ||
        W.cols() != net.input_dim())
      throw DataError("checkpoint: block shapes do not match the declared network dimensions");
    blocks[b].S = S;
    blocks[b].W = W;
    blocks[b].theta = cp.scalar(prefix + slots.theta + suffix);
  }
}

inline nlohmann::json network_meta(const UnfoldedNetwork& net) {
  return {{"kind", net_kind_name(net.kind())},
          {"depth", net.depth()},
          {"tied", net.tied()},
          {"code_dim", net.code_dim()},
          {"input_dim", net.input_dim()}};
}

inline UnfoldedNetwork network_from_meta(const nlohmann::json& meta) {
  return UnfoldedNetwork(net_kind_from_name(meta.at("kind").get<std::string>()),
                         meta.at("depth").get<int>(), meta.at("code_dim").get<Index>(),
                         meta.at("input_dim").get<Index>(), meta.at("tied").get<bool>());
}

}  // namespace detail

inline Checkpoint pack_network(const UnfoldedNetwork& net) {
  Checkpoint cp;
  cp.metadata = {{"model", net_kind_name(net.kind())}, {"network", detail::network_meta(net)}};
  detail::pack_network_blocks(cp, net, "");
  return cp;
}

inline UnfoldedNetwork unpack_network(const Checkpoint& cp) {
  const nlohmann::json& meta = cp.metadata.at("network");
  UnfoldedNetwork net = detail::network_from_meta(meta);
  detail::unpack_network_blocks(cp, net, "");
  return net;
}

inline Checkpoint pack_autoencoder(const LeSITAAutoencoder& ae) {
  Checkpoint cp;
  cp.metadata = {{"model", "lesita_ae"},
                 {"main", detail::network_meta(ae.main())},
                 {"sinet", detail::network_meta(ae.sinet())},
                 {"l2_variant", l2_variant_name(ae.variant())},
                 {"lambda", ae.lambda()},
                 {"lambda1", ae.lambda1()},
                 {"lambda2", ae.lambda2()}};
  detail::pack_network_blocks(cp, ae.main(), "main.");
  detail::pack_network_blocks(cp, ae.sinet(), "sinet.");
  cp.add_matrix("D", ae.decoder());
  return cp;
}

inline LeSITAAutoencoder unpack_autoencoder(const Checkpoint& cp) {
  UnfoldedNetwork main = detail::network_from_meta(cp.metadata.at("main"));
  UnfoldedNetwork sinet = detail::network_from_meta(cp.metadata.at("sinet"));
  detail::unpack_network_blocks(cp, main, "main.");
  detail::unpack_network_blocks(cp, sinet, "sinet.");
  LeSITAAutoencoder ae(std::move(main), std::move(sinet), cp.matrix("D"),
                       l2_variant_from_name(cp.metadata.at("l2_variant").get<std::string>()),
                       cp.metadata.at("lambda").get<double>());
  ae.set_loss_weights(cp.metadata.at("lambda1").get<double>(),
                      cp.metadata.at("lambda2").get<double>());
  return ae;
}

inline Checkpoint pack_reconstructor(const LeSITAReconstructor& rec) {
  Checkpoint cp;
  cp.metadata = {{"model", "lesita_rec"},
                 {"main", detail::network_meta(rec.main())},
                 {"sinet", detail::network_meta(rec.sinet())},
                 {"l2_variant", l2_variant_name(rec.variant())},
                 {"lambda", rec.lambda()},
                 {"lambda1", rec.lambda1()},
                 {"lambda2", rec.lambda2()},
                 {"phi_learnable", rec.phi_learnable()}};
  detail::pack_network_blocks(cp, rec.main(), "main.");
  detail::pack_network_blocks(cp, rec.sinet(), "sinet.");
  cp.add_matrix("D", rec.decoder());
  cp.add_matrix("Phi", rec.phi());
  return cp;
}

inline LeSITAReconstructor unpack_reconstructor(const Checkpoint& cp) {
  UnfoldedNetwork main = detail::network_from_meta(cp.metadata.at("main"));
  UnfoldedNetwork sinet = detail::network_from_meta(cp.metadata.at("sinet"));
  detail::unpack_network_blocks(cp, main, "main.");
  detail::unpack_network_blocks(cp, sinet, "sinet.");
  LeSITAReconstructor rec(cp.matrix("Phi"), std::move(main), std::move(sinet), cp.matrix("D"),
                          l2_variant_from_name(cp.metadata.at("l2_variant").get<std::string>()),
                          cp.metadata.at("lambda").get<double>(),
                          cp.metadata.at("phi_learnable").get<bool>());
  rec.set_loss_weights(cp.metadata.at("lambda1").get<double>(),
                       cp.metadata.at("lambda2").get<double>());
  return rec;
}

// Model kind stored in a checkpoint ("lista", "lesita", "lesita_ae", "lesita_rec").
inline std::string checkpoint_model(const Checkpoint& cp) {
  return cp.metadata.at("model").get<std::string>();
}

}  // namespace lesita

#endif  // LESITA_CHECKPOINT_HPP
