#include "ppl/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include <json.hpp>

namespace ppl {

using nlohmann::json;

namespace {

constexpr int kFormatVersion = 1;

std::uint64_t fnv1a_bytes(const unsigned char* data, std::size_t n) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (std::size_t i = 0; i < n; ++i) {
    h ^= data[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

void put_u64_le(std::ostream& out, std::uint64_t v) {
  unsigned char buf[8];
  for (int i = 0; i < 8; ++i) buf[i] = static_cast<unsigned char>(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(buf), 8);
}

std::uint64_t get_u64_le(std::istream& in, const char* field) {
  unsigned char buf[8];
  in.read(reinterpret_cast<char*>(buf), 8);
  if (in.gcount() != 8)
    throw FormatError(std::string("checkpoint: truncated at ") + field);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(buf[i]) << (8 * i);
  return v;
}

json config_to_json(const DetectorConfig& c) {
  json j;
  j["image_h"] = c.image_h;
  j["image_w"] = c.image_w;
  j["channels"] = c.channels;
  j["patch_size"] = c.patch_size;
  j["embed_dim"] = c.embed_dim;
  j["depth"] = c.depth;
  j["heads"] = c.heads;
  j["mlp_ratio"] = c.mlp_ratio;
  j["pooling"] = c.pooling == Pooling::kClsToken ? "cls" : "mean";
  return j;
}

DetectorConfig config_from_json(const json& j) {
  DetectorConfig c;
  c.image_h = j.at("image_h").get<int>();
  c.image_w = j.at("image_w").get<int>();
  c.channels = j.at("channels").get<int>();
  c.patch_size = j.at("patch_size").get<int>();
  c.embed_dim = j.at("embed_dim").get<int>();
  c.depth = j.at("depth").get<int>();
  c.heads = j.at("heads").get<int>();
  c.mlp_ratio = j.at("mlp_ratio").get<double>();
  const std::string pooling = j.at("pooling").get<std::string>();
  if (pooling == "cls")
    c.pooling = Pooling::kClsToken;
  else if (pooling == "mean")
    c.pooling = Pooling::kMeanPatch;
  else
    throw FormatError("checkpoint: unknown pooling \"" + pooling + "\"");
  c.validate();
  return c;
}

}  // namespace

void save_checkpoint(const DetectorParams& params,
                     const std::filesystem::path& path) {
  auto& mut = const_cast<DetectorParams&>(params);
  auto refs = tensor_refs(mut);

  json header;
  header["format_version"] = kFormatVersion;
  header["config"] = config_to_json(params.cfg);
  header["tensors"] = json::array();
  std::size_t total = 0;
  for (const auto& ref : refs) {
    json t;
    t["name"] = ref.name;
    t["shape"] = ref.shape;
    header["tensors"].push_back(t);
    total += ref.data->size();
  }

  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("save_checkpoint: cannot open " + path.string());
  out << header.dump() << "\n";

  std::vector<unsigned char> payload(total * sizeof(float));
  std::size_t off = 0;
  for (const auto& ref : refs) {
    std::memcpy(payload.data() + off, ref.data->data(),
                ref.data->size() * sizeof(float));
    off += ref.data->size() * sizeof(float);
  }
  put_u64_le(out, payload.size());
  out.write(reinterpret_cast<const char*>(payload.data()),
            static_cast<std::streamsize>(payload.size()));
  put_u64_le(out, fnv1a_bytes(payload.data(), payload.size()));
  if (!out) throw IoError("save_checkpoint: write failed " + path.string());
}

DetectorParams load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("load_checkpoint: cannot open " + path.string());

  std::string header_line;
  if (!std::getline(in, header_line))
    throw FormatError("checkpoint: missing header line");
  json header;
  try {
    header = json::parse(header_line);
  } catch (const json::parse_error& e) {
    throw FormatError("checkpoint: bad header JSON: " + std::string(e.what()));
  }

  DetectorConfig cfg;
  try {
    const int version = header.at("format_version").get<int>();
    if (version != kFormatVersion)
      throw FormatError("checkpoint: unsupported format_version " +
                        std::to_string(version));
    cfg = config_from_json(header.at("config"));
  } catch (const json::exception& e) {
    throw FormatError("checkpoint: header field error: " +
                      std::string(e.what()));
  }

  // Shapes are derived from the config; the header must agree.
  DetectorParams params = init_params<float>(cfg, 0);
  auto refs = tensor_refs(params);
  const json& tensors = header.at("tensors");
  if (tensors.size() != refs.size())
    throw FormatError("checkpoint: tensor list size mismatch");
  std::size_t total = 0;
  for (std::size_t i = 0; i < refs.size(); ++i) {
    const json& t = tensors[i];
    const std::string name = t.at("name").get<std::string>();
    const std::vector<int> shape = t.at("shape").get<std::vector<int>>();
    if (name != refs[i].name)
      throw FormatError("checkpoint: tensor " + std::to_string(i) +
                        " name mismatch: " + name);
    if (shape != refs[i].shape)
      throw FormatError("checkpoint: tensor \"" + name + "\" shape mismatch");
    total += refs[i].data->size();
  }

  const std::uint64_t payload_len = get_u64_le(in, "payload length");
  if (payload_len != total * sizeof(float))
    throw FormatError("checkpoint: payload length field inconsistent with "
                      "tensor shapes");
  std::vector<unsigned char> payload(payload_len);
  in.read(reinterpret_cast<char*>(payload.data()),
          static_cast<std::streamsize>(payload_len));
  if (static_cast<std::uint64_t>(in.gcount()) != payload_len)
    throw FormatError("checkpoint: truncated payload");
  const std::uint64_t checksum = get_u64_le(in, "checksum");
  if (checksum != fnv1a_bytes(payload.data(), payload.size()))
    throw FormatError("checkpoint: checksum mismatch");

  std::size_t off = 0;
  for (auto& ref : refs) {
    std::memcpy(ref.data->data(), payload.data() + off,
                ref.data->size() * sizeof(float));
    off += ref.data->size() * sizeof(float);
  }
  return params;
}

}  // namespace ppl
