#include "hgdc/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

namespace hgdc {

namespace {

constexpr char kMagic[8] = {'H', 'G', 'D', 'C', 'F', 'U', 'S', 'E'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::ostream& out, std::uint32_t v) {
  char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  out.write(b, 4);
}

void put_u64(std::ostream& out, std::uint64_t v) {
  char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  out.write(b, 8);
}

void put_i32(std::ostream& out, std::int32_t v) {
  put_u32(out, static_cast<std::uint32_t>(v));
}

void put_f64(std::ostream& out, double v) {
  put_u64(out, std::bit_cast<std::uint64_t>(v));
}

std::uint32_t get_u32(std::istream& in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  if (!in) throw ValueError("checkpoint truncated");
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
  return v;
}

std::uint64_t get_u64(std::istream& in) {
  unsigned char b[8];
  in.read(reinterpret_cast<char*>(b), 8);
  if (!in) throw ValueError("checkpoint truncated");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

std::int32_t get_i32(std::istream& in) {
  return static_cast<std::int32_t>(get_u32(in));
}

double get_f64(std::istream& in) { return std::bit_cast<double>(get_u64(in)); }

void put_array(std::ostream& out, const std::string& name, const Shape& shape,
               const std::vector<double>& data) {
  put_u32(out, static_cast<std::uint32_t>(name.size()));
  out.write(name.data(), static_cast<std::streamsize>(name.size()));
  put_u32(out, static_cast<std::uint32_t>(shape.size()));
  for (int d : shape) put_i32(out, d);
  for (double v : data) put_f64(out, v);
}

}  // namespace

void save_checkpoint(const std::string& path, const ModelParams& params,
                     const std::vector<double>& adjacency,
                     const CheckpointMeta& meta) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValueError("cannot open '" + path + "' for writing");
  out.write(kMagic, sizeof kMagic);
  put_u32(out, kVersion);
  put_u64(out, meta.config_hash);
  put_i32(out, params.dims.embed_dim);
  put_i32(out, params.dims.heads);
  put_i32(out, params.dims.encoder_hidden);
  put_i32(out, params.dims.resolved_gcn_hidden());
  put_i32(out, params.dims.n_labels);
  put_i32(out, params.dims.ehr_features);
  put_i32(out, params.dims.cxr_features);
  out.put(static_cast<char>(meta.variant));
  put_f64(out, meta.delta);
  put_f64(out, meta.tau);
  put_f64(out, meta.window_hours);

  const auto named = params.named_parameters();
  put_u32(out, static_cast<std::uint32_t>(named.size() + 1));
  for (const auto& [name, tensor] : named)
    put_array(out, name, tensor.shape(), tensor.values());
  const int n = params.dims.n_labels;
  if (adjacency.size() != static_cast<std::size_t>(n) * n)
    throw ShapeError("save_checkpoint: adjacency size does not match n_labels");
  put_array(out, "corr/adjacency", {n, n}, adjacency);
  if (!out) throw ValueError("write to '" + path + "' failed");
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValueError("cannot open '" + path + "'");
  char magic[8];
  in.read(magic, sizeof magic);
  if (!in || std::memcmp(magic, kMagic, sizeof kMagic) != 0)
    throw ValueError("'" + path + "' is not a checkpoint file");
  LoadedCheckpoint ckpt;
  ckpt.meta.format_version = get_u32(in);
  if (ckpt.meta.format_version != kVersion)
    throw ValueError("unsupported checkpoint version " +
                     std::to_string(ckpt.meta.format_version));
  ckpt.meta.config_hash = get_u64(in);
  ModelDims dims;
  dims.embed_dim = get_i32(in);
  dims.heads = get_i32(in);
  dims.encoder_hidden = get_i32(in);
  dims.gcn_hidden = get_i32(in);
  dims.n_labels = get_i32(in);
  dims.ehr_features = get_i32(in);
  dims.cxr_features = get_i32(in);
  const int variant_byte = in.get();
  if (variant_byte < 0 || variant_byte > 3)
    throw ValueError("checkpoint has an unknown variant byte");
  ckpt.meta.variant = static_cast<Variant>(variant_byte);
  ckpt.meta.delta = get_f64(in);
  ckpt.meta.tau = get_f64(in);
  ckpt.meta.window_hours = get_f64(in);
  ckpt.meta.dims = dims;

  ckpt.params = ModelParams::init(dims, 0);
  auto named = ckpt.params.named_parameters();

  const std::uint32_t count = get_u32(in);
  std::size_t filled = 0;
  bool have_adjacency = false;
  for (std::uint32_t a = 0; a < count; ++a) {
    const std::uint32_t name_len = get_u32(in);
    std::string name(name_len, '\0');
    in.read(name.data(), name_len);
    if (!in) throw ValueError("checkpoint truncated");
    const std::uint32_t ndim = get_u32(in);
    Shape shape(ndim);
    for (auto& d : shape) d = get_i32(in);
    std::vector<double> data(static_cast<std::size_t>(shape_numel(shape)));
    for (auto& v : data) v = get_f64(in);

    if (name == "corr/adjacency") {
      if (shape != Shape{dims.n_labels, dims.n_labels})
        throw ShapeError("checkpoint adjacency has shape " + shape_str(shape));
      ckpt.adjacency = std::move(data);
      have_adjacency = true;
      continue;
    }
    bool matched = false;
    for (auto& [pname, tensor] : named) {
      if (pname != name) continue;
      if (tensor.shape() != shape)
        throw ShapeError("checkpoint array '" + name + "' has shape " +
                         shape_str(shape) + ", expected " +
                         shape_str(tensor.shape()));
      tensor.values() = std::move(data);
      matched = true;
      ++filled;
      break;
    }
    if (!matched) throw ValueError("checkpoint has an unknown array '" + name + "'");
  }
  if (filled != named.size())
    throw ValueError("checkpoint is missing " +
                     std::to_string(named.size() - filled) + " parameter arrays");
  if (!have_adjacency)
    throw ValueError("checkpoint is missing the correlation adjacency");
  return ckpt;
}

}  // namespace hgdc
