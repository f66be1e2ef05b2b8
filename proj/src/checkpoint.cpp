#include "fcl/checkpoint.hpp"

#include <string>
#include <utility>
#include <vector>

#include "binary_io.hpp"
#include "fcl/error.hpp"

namespace fcl {

namespace {
constexpr std::uint32_t kCheckpointVersion = 1;

std::vector<const Layer*> ordered_layers(const ModelParams& params) {
  std::vector<const Layer*> layers;
  for (const auto& l : params.encoder) layers.push_back(&l);
  for (const auto& l : params.projection) layers.push_back(&l);
  if (params.classifier) layers.push_back(&*params.classifier);
  return layers;
}
}  // namespace

void save_checkpoint(const std::filesystem::path& path, const ModelParams& params) {
  validate_params(params);
  const auto layers = ordered_layers(params);
  detail::ByteWriter w;
  w.bytes("FCL1", 4);
  w.u32(kCheckpointVersion);
  w.u32(static_cast<std::uint32_t>(layers.size()));
  for (const Layer* l : layers) {
    w.u32(static_cast<std::uint32_t>(l->out()));
    w.u32(static_cast<std::uint32_t>(l->in()));
  }
  for (const Layer* l : layers) {
    for (double v : l->weight.values()) w.f64(v);
    for (double v : l->bias.values()) w.f64(v);
  }
  detail::write_file(path, w.buffer());
}

ModelParams load_checkpoint(const std::filesystem::path& path, const Architecture& arch) {
  const auto bytes = detail::read_file(path);
  detail::ByteReader r(bytes, path.string());
  r.expect_magic("FCL1");
  const auto version = r.u32("version");
  if (version != kCheckpointVersion)
    throw IoError(path.string() + ": unsupported checkpoint version " + std::to_string(version));
  const std::size_t count = r.u32("layer count");
  r.need(count * 8, "layer dims");
  std::vector<std::pair<std::size_t, std::size_t>> dims;
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t out = r.u32("layer out");
    const std::size_t in = r.u32("layer in");
    dims.emplace_back(out, in);
  }
  std::vector<Layer> layers;
  for (auto [out, in] : dims) {
    if (out == 0 || in == 0 || out > r.remaining() / 8 / in) throw IoError(path.string() + ": truncated weights");
    Layer l{Tensor::matrix(out, in), Tensor::vector(out)};
    for (double& v : l.weight.values()) v = r.f64("weights");
    for (double& v : l.bias.values()) v = r.f64("bias");
    layers.push_back(std::move(l));
  }
  r.expect_end();

  const std::size_t enc = arch.encoder_widths.size();
  const std::size_t head = count < enc ? 0 : count - enc;
  if (count < enc || head > 3)
    throw ValidationError(path.string() + ": " + std::to_string(count) + " layers do not fit an encoder of depth " +
                          std::to_string(enc));
  ModelParams params;
  params.encoder.assign(std::make_move_iterator(layers.begin()),
                        std::make_move_iterator(layers.begin() + static_cast<std::ptrdiff_t>(enc)));
  std::size_t next = enc;
  if (head >= 2) {
    params.projection.push_back(std::move(layers[next++]));
    params.projection.push_back(std::move(layers[next++]));
  }
  if (head == 1 || head == 3) params.classifier = std::move(layers[next++]);

  auto mismatch = [&](const std::string& what) {
    return ValidationError(path.string() + ": checkpoint does not match architecture (" + what + ")");
  };
  std::size_t in = arch.input_dim;
  for (std::size_t i = 0; i < enc; ++i) {
    if (params.encoder[i].in() != in || params.encoder[i].out() != arch.encoder_widths[i])
      throw mismatch("encoder[" + std::to_string(i) + "]");
    in = arch.encoder_widths[i];
  }
  if (!params.projection.empty()) {
    if (params.projection[0].in() != in || params.projection[0].out() != arch.projection_hidden ||
        params.projection[1].in() != arch.projection_hidden || params.projection[1].out() != arch.feature_dim)
      throw mismatch("projection head");
  }
  if (params.classifier && params.classifier->in() != in) throw mismatch("classifier");
  return params;
}

}  // namespace fcl
