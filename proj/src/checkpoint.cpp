#include "fuit/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

namespace fuit::nn {

namespace {

constexpr char kMagic[8] = {'F', 'U', 'I', 'T', 'C', 'K', 'P', 'T'};

template <typename T>
void put_le(std::ostream& out, T value) {
  static_assert(std::is_trivially_copyable_v<T>);
  unsigned char bytes[sizeof(T)];
  std::memcpy(bytes, &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  out.write(reinterpret_cast<const char*>(bytes), sizeof(T));
}

template <typename T>
T get_le(const std::vector<char>& buf, std::size_t& pos, const std::filesystem::path& path) {
  if (pos + sizeof(T) > buf.size()) {
    throw CheckpointError(path.string() + ": truncated checkpoint at byte offset " + std::to_string(buf.size()));
  }
  unsigned char bytes[sizeof(T)];
  std::memcpy(bytes, buf.data() + pos, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  pos += sizeof(T);
  T value;
  std::memcpy(&value, bytes, sizeof(T));
  return value;
}

Layer layer_from_json(const nlohmann::json& j) {
  const std::string type = j.at("type");
  if (type == "conv2d") {
    Conv2D c;
    c.in_channels = j.at("in_channels");
    c.out_channels = j.at("out_channels");
    c.kernel_h = j.at("kernel_h");
    c.kernel_w = j.at("kernel_w");
    c.stride = j.at("stride");
    c.padding = j.at("padding");
    c.weight = Tensor({c.out_channels, c.in_channels, c.kernel_h, c.kernel_w});
    c.bias = Tensor({c.out_channels});
    return c;
  }
  if (type == "dense") {
    Dense d;
    d.in_features = j.at("in_features");
    d.out_features = j.at("out_features");
    d.weight = Tensor({d.out_features, d.in_features});
    d.bias = Tensor({d.out_features});
    return d;
  }
  if (type == "relu") return ReLU{};
  if (type == "maxpool2d") return MaxPool2D{j.at("window"), j.at("stride")};
  if (type == "flatten") return Flatten{};
  throw CheckpointError("unknown layer type '" + type + "'");
}

}  // namespace

nlohmann::json layer_to_json(const Layer& layer) {
  if (auto* c = std::get_if<Conv2D>(&layer)) {
    return {{"type", "conv2d"},   {"in_channels", c->in_channels}, {"out_channels", c->out_channels},
            {"kernel_h", c->kernel_h}, {"kernel_w", c->kernel_w},     {"stride", c->stride},
            {"padding", c->padding}};
  }
  if (auto* d = std::get_if<Dense>(&layer)) {
    return {{"type", "dense"}, {"in_features", d->in_features}, {"out_features", d->out_features}};
  }
  if (std::holds_alternative<ReLU>(layer)) return {{"type", "relu"}};
  if (auto* p = std::get_if<MaxPool2D>(&layer)) {
    return {{"type", "maxpool2d"}, {"window", p->window}, {"stride", p->stride}};
  }
  return {{"type", "flatten"}};
}

void save_checkpoint(const std::filesystem::path& path, const ModelGraph& model, const nlohmann::json& metadata) {
  nlohmann::json header;
  header["input_shape"] = model.input_shape();
  header["layers"] = nlohmann::json::array();
  for (const auto& layer : model.layers()) header["layers"].push_back(layer_to_json(layer));
  header["parameter_shapes"] = nlohmann::json::array();
  for (const auto* p : model.parameters()) header["parameter_shapes"].push_back(p->shape());
  header["metadata"] = metadata;
  const std::string text = header.dump();

  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw CheckpointError("cannot write " + path.string());
  out.write(kMagic, sizeof kMagic);
  put_le<std::uint32_t>(out, kCheckpointVersion);
  put_le<std::uint64_t>(out, text.size());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto* p : model.parameters()) {
    for (double v : p->values()) put_le<double>(out, v);
  }
  if (!out) throw CheckpointError("short write to " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open " + path.string());
  std::vector<char> buf{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  if (buf.size() < sizeof kMagic || std::memcmp(buf.data(), kMagic, sizeof kMagic) != 0) {
    throw CheckpointError(path.string() + ": not a checkpoint file");
  }
  std::size_t pos = sizeof kMagic;
  auto version = get_le<std::uint32_t>(buf, pos, path);
  if (version != kCheckpointVersion) {
    throw CheckpointError(path.string() + ": unsupported checkpoint version " + std::to_string(version));
  }
  auto header_len = get_le<std::uint64_t>(buf, pos, path);
  if (pos + header_len > buf.size()) throw CheckpointError(path.string() + ": truncated checkpoint header");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(buf.begin() + static_cast<std::ptrdiff_t>(pos),
                                   buf.begin() + static_cast<std::ptrdiff_t>(pos + header_len));
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(path.string() + ": bad checkpoint header: " + e.what());
  }
  pos += header_len;

  std::vector<Layer> layers;
  for (const auto& j : header.at("layers")) layers.push_back(layer_from_json(j));
  Checkpoint ckpt;
  try {
    ckpt.model = ModelGraph(header.at("input_shape").get<Shape>(), std::move(layers));
  } catch (const ShapeError& e) {
    throw CheckpointError(path.string() + ": inconsistent layer specs: " + e.what());
  }
  for (auto* p : ckpt.model.parameters()) {
    for (auto& v : p->values()) v = get_le<double>(buf, pos, path);
  }
  if (pos != buf.size()) throw CheckpointError(path.string() + ": trailing bytes after parameters");
  ckpt.metadata = header.value("metadata", nlohmann::json::object());
  return ckpt;
}

}  // namespace fuit::nn
