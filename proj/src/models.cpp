#include "v2s/models.hpp"

#include <cstring>
#include <sstream>

#include "v2s/detail/binio.hpp"

namespace v2s {

const char* role_name(ModelRole role) {
  switch (role) {
    case ModelRole::vc: return "vc";
    case ModelRole::asv: return "asv";
    case ModelRole::asr: return "asr";
  }
  return "?";
}

void ArchSpec::validate() const {
  if (input_dim < 1 || output_dim < 1) throw ValidationError("arch dims must be positive");
  for (const auto& [units, act] : hidden) {
    if (units < 1) throw ValidationError("hidden layer sizes must be positive");
    if (act == Activation::softmax)
      throw ValidationError("softmax is not allowed on hidden layers");
  }
  const bool classifier = role == ModelRole::asv || role == ModelRole::asr;
  if (classifier && output_activation != Activation::softmax)
    throw ValidationError(std::string(role_name(role)) + " arch must end in softmax");
  if (role == ModelRole::vc && output_activation != Activation::identity)
    throw ValidationError("vc arch must end in identity");
}

ArchSpec full_arch(ModelRole role) {
  ArchSpec spec;
  spec.role = role;
  switch (role) {
    case ModelRole::vc:
      spec.input_dim = 78;
      spec.hidden = {{256, Activation::relu}, {128, Activation::relu}};
      spec.output_dim = 78;
      spec.output_activation = Activation::identity;
      break;
    case ModelRole::asv:
      spec.input_dim = 78;
      spec.hidden = {{1024, Activation::sigmoid},
                     {1024, Activation::sigmoid},
                     {1024, Activation::sigmoid},
                     {8, Activation::sigmoid}};
      spec.output_dim = 260;
      spec.output_activation = Activation::softmax;
      break;
    case ModelRole::asr:
      spec.input_dim = 78;
      spec.hidden = {{1024, Activation::sigmoid},
                     {1024, Activation::sigmoid},
                     {1024, Activation::sigmoid},
                     {1024, Activation::sigmoid}};
      spec.output_dim = 56;
      spec.output_activation = Activation::softmax;
      break;
  }
  return spec;
}

ArchSpec desk_arch(ModelRole role, int feature_dim, int n_speakers, int n_phonemes) {
  if (feature_dim < 1) throw ValidationError("feature_dim must be positive");
  ArchSpec spec;
  spec.role = role;
  spec.input_dim = feature_dim;
  switch (role) {
    case ModelRole::vc:
      spec.hidden = {{2 * feature_dim, Activation::relu}, {feature_dim, Activation::relu}};
      spec.output_dim = feature_dim;
      spec.output_activation = Activation::identity;
      break;
    case ModelRole::asv:
      spec.hidden = {{64, Activation::sigmoid},
                     {64, Activation::sigmoid},
                     {64, Activation::sigmoid},
                     {8, Activation::sigmoid}};
      spec.output_dim = n_speakers;
      spec.output_activation = Activation::softmax;
      break;
    case ModelRole::asr:
      spec.hidden = {{64, Activation::sigmoid}, {64, Activation::sigmoid}};
      spec.output_dim = n_phonemes;
      spec.output_activation = Activation::softmax;
      break;
  }
  spec.validate();
  return spec;
}

Network build_model(const ArchSpec& spec, std::uint64_t seed) {
  spec.validate();
  std::vector<DenseLayer> layers;
  int in = spec.input_dim;
  for (const auto& [units, act] : spec.hidden) {
    layers.push_back({Matrix::Zero(units, in), Vector::Zero(units), act});
    in = units;
  }
  layers.push_back(
      {Matrix::Zero(spec.output_dim, in), Vector::Zero(spec.output_dim), spec.output_activation});

  Network net(std::move(layers), /*trainable=*/true);
  init_parameters(net, seed);
  return net;
}

ArchSpec arch_of(const Network& net, ModelRole role) {
  ArchSpec spec;
  spec.role = role;
  spec.input_dim = net.input_dim();
  for (std::size_t k = 0; k + 1 < net.depth(); ++k)
    spec.hidden.emplace_back(net.layer(k).out_dim(), net.layer(k).activation);
  spec.output_dim = net.output_dim();
  spec.output_activation = net.output_activation();
  return spec;
}

namespace {

constexpr char kModelMagic[5] = "V2SM";
constexpr std::uint32_t kModelVersion = 1;

Activation activation_from_byte(std::uint8_t b) {
  switch (b) {
    case 0: return Activation::identity;
    case 1: return Activation::relu;
    case 2: return Activation::sigmoid;
    case 3: return Activation::softmax;
  }
  throw LoadError(LoadError::Kind::malformed, "unknown activation code " + std::to_string(b));
}

std::uint8_t activation_to_byte(Activation a) {
  switch (a) {
    case Activation::identity: return 0;
    case Activation::relu: return 1;
    case Activation::sigmoid: return 2;
    case Activation::softmax: return 3;
  }
  throw ValidationError("unknown activation");
}

}  // namespace

std::vector<std::uint8_t> save_model(const Network& net, ModelRole role, const ModelMeta& meta) {
  detail::ByteWriter payload;
  payload.u8(static_cast<std::uint8_t>(role));
  payload.u8(net.trainable() ? 1 : 0);
  payload.u32(static_cast<std::uint32_t>(net.input_dim()));
  payload.u32(static_cast<std::uint32_t>(net.depth()));
  for (const auto& layer : net.layers()) {
    payload.u32(static_cast<std::uint32_t>(layer.out_dim()));
    payload.u8(activation_to_byte(layer.activation));
  }
  payload.u32(static_cast<std::uint32_t>(meta.epochs));
  payload.u64(meta.seed);
  payload.f64(meta.final_loss);
  payload.u64(meta.corpus_hash);
  payload.u64(meta.config_hash);
  for (const auto& layer : net.layers()) {
    for (Eigen::Index i = 0; i < layer.weight.rows(); ++i)
      for (Eigen::Index j = 0; j < layer.weight.cols(); ++j) payload.f64(layer.weight(i, j));
    for (Eigen::Index i = 0; i < layer.bias.size(); ++i) payload.f64(layer.bias(i));
  }

  const auto& body = payload.bytes();
  detail::ByteWriter w;
  w.magic(kModelMagic);
  w.u32(kModelVersion);
  w.u64(body.size());
  w.u32(detail::crc32(body.data(), body.size()));
  w.raw(body.data(), body.size());
  return w.take();
}

LoadedModel load_model(std::span<const std::uint8_t> bytes) {
  detail::ByteReader header(bytes.data(), bytes.size());
  char magic[4];
  header.require(4);
  header.raw(magic, 4);
  if (std::memcmp(magic, kModelMagic, 4) != 0)
    throw LoadError(LoadError::Kind::bad_magic, "not a model checkpoint (bad magic)");
  const std::uint32_t version = header.u32();
  if (version != kModelVersion)
    throw LoadError(LoadError::Kind::bad_version,
                    "unsupported checkpoint version " + std::to_string(version));
  const std::uint64_t payload_len = header.u64();
  const std::uint32_t stored_crc = header.u32();
  if (header.remaining() != payload_len)
    throw LoadError(LoadError::Kind::truncated,
                    "payload length mismatch: header says " + std::to_string(payload_len) +
                        " bytes, file has " + std::to_string(header.remaining()));
  const std::uint8_t* body = bytes.data() + header.position();
  if (detail::crc32(body, payload_len) != stored_crc)
    throw LoadError(LoadError::Kind::bad_checksum, "checkpoint payload checksum mismatch");

  detail::ByteReader r(body, payload_len);
  const std::uint8_t role_byte = r.u8();
  if (role_byte > 2)
    throw LoadError(LoadError::Kind::malformed, "unknown model role " + std::to_string(role_byte));
  const ModelRole role = static_cast<ModelRole>(role_byte);
  const bool trainable = r.u8() != 0;
  const std::uint32_t input_dim = r.u32();
  const std::uint32_t n_layers = r.u32();
  if (input_dim < 1 || n_layers < 1 || input_dim > 1000000 || n_layers > 10000)
    throw LoadError(LoadError::Kind::malformed, "checkpoint has invalid dimensions");

  std::vector<std::pair<std::uint32_t, Activation>> plan;
  plan.reserve(n_layers);
  for (std::uint32_t k = 0; k < n_layers; ++k) {
    const std::uint32_t out = r.u32();
    const Activation act = activation_from_byte(r.u8());
    if (out < 1 || out > 1000000)
      throw LoadError(LoadError::Kind::malformed, "checkpoint layer has an implausible width");
    plan.emplace_back(out, act);
  }

  ModelMeta meta;
  meta.epochs = static_cast<int>(r.u32());
  meta.seed = r.u64();
  meta.final_loss = r.f64();
  meta.corpus_hash = r.u64();
  meta.config_hash = r.u64();

  std::vector<DenseLayer> layers;
  layers.reserve(n_layers);
  std::uint32_t in = input_dim;
  for (const auto& [out, act] : plan) {
    DenseLayer layer{Matrix(out, in), Vector(out), act};
    for (std::uint32_t i = 0; i < out; ++i)
      for (std::uint32_t j = 0; j < in; ++j) layer.weight(i, j) = r.f64();
    for (std::uint32_t i = 0; i < out; ++i) layer.bias(i) = r.f64();
    layers.push_back(std::move(layer));
    in = out;
  }
  if (r.remaining() != 0)
    throw LoadError(LoadError::Kind::malformed, "checkpoint payload has trailing bytes");

  try {
    Network net(std::move(layers), trainable);
    ArchSpec arch = arch_of(net, role);
    return LoadedModel{std::move(net), std::move(arch), meta};
  } catch (const Error& e) {
    throw LoadError(LoadError::Kind::malformed,
                    std::string("checkpoint parameters are invalid: ") + e.what());
  }
}

void save_model_file(const Network& net, ModelRole role, const ModelMeta& meta,
                     const std::string& path) {
  detail::write_file(path, save_model(net, role, meta));
}

LoadedModel load_model_file(const std::string& path) {
  const auto bytes = detail::read_file(path);
  return load_model(bytes);
}

std::string describe_model(const LoadedModel& model) {
  std::ostringstream os;
  os << "role: " << role_name(model.arch.role) << "\n";
  os << "trainable: " << (model.net.trainable() ? "yes" : "no") << "\n";
  os << "layers: " << model.arch.input_dim;
  for (const auto& layer : model.net.layers())
    os << " -> " << layer.out_dim() << " (" << activation_name(layer.activation) << ")";
  os << "\n";
  os << "parameters: " << model.net.parameter_count() << "\n";
  os << "epochs: " << model.meta.epochs << "\n";
  os << "seed: " << model.meta.seed << "\n";
  os << "final_loss: " << model.meta.final_loss << "\n";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(model.meta.corpus_hash));
  os << "corpus_hash: " << buf << "\n";
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(model.meta.config_hash));
  os << "config_hash: " << buf << "\n";
  return os.str();
}

}  // namespace v2s
