#include "tinyrlhf/service/checkpoint.hpp"

#include <bit>
#include <cstring>

#include <json.hpp>

#include "tinyrlhf/error.hpp"
#include "tinyrlhf/rng.hpp"
#include "tinyrlhf/service/jsonl.hpp"

namespace tinyrlhf {
namespace {

void PutU64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void PutU32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

class Reader {
 public:
  explicit Reader(std::string_view bytes) : bytes_(bytes) {}

  std::string_view take(std::size_t n) {
    if (bytes_.size() - pos_ < n) Fail(ErrorKind::kSchema, "checkpoint: truncated file");
    const std::string_view out = bytes_.substr(pos_, n);
    pos_ += n;
    return out;
  }
  std::uint64_t u64() { return Decode(take(8)); }
  std::uint32_t u32() { return static_cast<std::uint32_t>(Decode(take(4))); }
  std::size_t pos() const { return pos_; }

  static std::uint64_t Decode(std::string_view b) {
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < b.size(); ++i) {
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(b[i])) << (8 * i);
    }
    return v;
  }

 private:
  std::string_view bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string serialize_checkpoint(const Transformer& model) {
  const BackboneConfig& c = model.config();
  nlohmann::json header = {
      {"config",
       {{"vocab_size", c.vocab_size},
        {"context_length", c.context_length},
        {"embed_dim", c.embed_dim},
        {"num_layers", c.num_layers},
        {"num_heads", c.num_heads}}},
      {"head", HeadKindName(c.head)},
      {"tensors", nlohmann::json::array()},
  };
  for (const NamedTensor& p : model.parameters()) {
    std::vector<int> dims;
    for (int a = 0; a < p.tensor.shape().rank(); ++a) dims.push_back(p.tensor.shape()[a]);
    header["tensors"].push_back({{"name", p.name}, {"shape", dims}});
  }
  const std::string header_text = header.dump();

  std::string out(kCheckpointMagic);
  PutU32(out, kCheckpointVersion);
  PutU64(out, header_text.size());
  out += header_text;
  for (const NamedTensor& p : model.parameters()) {
    const Array& data = p.tensor.data();
    for (Eigen::Index i = 0; i < data.size(); ++i) {
      PutU64(out, std::bit_cast<std::uint64_t>(data[i]));
    }
  }
  PutU64(out, fnv1a64(out));
  return out;
}

Transformer deserialize_checkpoint(std::string_view bytes) {
  Reader r(bytes);
  if (r.take(kCheckpointMagic.size()) != kCheckpointMagic) {
    Fail(ErrorKind::kSchema, "checkpoint: bad magic");
  }
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion) {
    Fail(ErrorKind::kVersionMismatch,
         "checkpoint: format version " + std::to_string(version) + " is not supported (expected " +
             std::to_string(kCheckpointVersion) + ")");
  }
  if (bytes.size() < 8) Fail(ErrorKind::kSchema, "checkpoint: truncated file");
  const std::uint64_t stored = Reader::Decode(bytes.substr(bytes.size() - 8));
  if (fnv1a64(bytes.substr(0, bytes.size() - 8)) != stored) {
    Fail(ErrorKind::kChecksum, "checkpoint: checksum mismatch");
  }

  const std::uint64_t header_len = r.u64();
  if (header_len > bytes.size()) Fail(ErrorKind::kSchema, "checkpoint: truncated header");
  const nlohmann::json header =
      nlohmann::json::parse(r.take(header_len), nullptr, /*allow_exceptions=*/false);
  if (header.is_discarded()) Fail(ErrorKind::kSchema, "checkpoint: header is not JSON");

  BackboneConfig c;
  std::vector<NamedTensor> params;
  try {
    const auto& hc = header.at("config");
    c.vocab_size = hc.at("vocab_size").get<int>();
    c.context_length = hc.at("context_length").get<int>();
    c.embed_dim = hc.at("embed_dim").get<int>();
    c.num_layers = hc.at("num_layers").get<int>();
    c.num_heads = hc.at("num_heads").get<int>();
    c.head = ParseHeadKind(header.at("head").get<std::string>());
    for (const auto& t : header.at("tensors")) {
      const auto dims = t.at("shape").get<std::vector<int>>();
      Shape shape;
      switch (dims.size()) {
        case 0: shape = Shape{}; break;
        case 1: shape = Shape{dims[0]}; break;
        case 2: shape = Shape{dims[0], dims[1]}; break;
        case 3: shape = Shape{dims[0], dims[1], dims[2]}; break;
        default: Fail(ErrorKind::kSchema, "checkpoint: tensor rank above 3");
      }
      Array data(shape.numel());
      for (int i = 0; i < shape.numel(); ++i) data[i] = std::bit_cast<double>(r.u64());
      params.push_back({t.at("name").get<std::string>(), Tensor(shape, std::move(data))});
    }
  } catch (const nlohmann::json::exception& e) {
    Fail(ErrorKind::kSchema, std::string("checkpoint: malformed header: ") + e.what());
  }
  if (r.pos() != bytes.size() - 8) Fail(ErrorKind::kSchema, "checkpoint: trailing bytes");
  try {
    return Transformer(c, std::move(params));
  } catch (const Error& e) {
    Fail(ErrorKind::kSchema, std::string("checkpoint: ") + e.what());
  }
}

void save_checkpoint(const std::filesystem::path& path, const Transformer& model) {
  write_file(path, serialize_checkpoint(model));
}

Transformer load_checkpoint(const std::filesystem::path& path) {
  try {
    return deserialize_checkpoint(read_file(path));
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::kMissingInput) throw;
    Fail(e.kind(), path.string() + ": " + e.what());
  }
}

std::uint64_t checkpoint_checksum(const std::filesystem::path& path) {
  const std::string bytes = read_file(path);
  deserialize_checkpoint(bytes);
  return Reader::Decode(std::string_view(bytes).substr(bytes.size() - 8));
}

}  // namespace tinyrlhf
