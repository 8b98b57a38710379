#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "v2s/nncore.hpp"

namespace v2s {

enum class ModelRole : std::uint8_t { vc = 0, asv = 1, asr = 2 };

const char* role_name(ModelRole role);

// Layer plan for one of the three model roles. Classifier roles must end
// in softmax; the converter ends in identity.
struct ArchSpec {
  ModelRole role = ModelRole::vc;
  int input_dim = 0;
  std::vector<std::pair<int, Activation>> hidden;  // (units, activation)
  int output_dim = 0;
  Activation output_activation = Activation::identity;

  void validate() const;
};

// Full-scale architectures (78-dim features, 260 speakers, 56 phonemes).
ArchSpec full_arch(ModelRole role);

// Desk-scale architectures sized for a given corpus.
ArchSpec desk_arch(ModelRole role, int feature_dim, int n_speakers, int n_phonemes);

// Seeded Glorot-initialized network for the given plan. Trainable.
Network build_model(const ArchSpec& spec, std::uint64_t seed);

// Recovers the layer plan of a network (the role is not stored in Network).
ArchSpec arch_of(const Network& net, ModelRole role);

// Training provenance stored in a checkpoint.
struct ModelMeta {
  int epochs = 0;
  std::uint64_t seed = 0;
  double final_loss = 0.0;
  std::uint64_t corpus_hash = 0;  // content hash of the training corpus file
  std::uint64_t config_hash = 0;  // hash of the producing configuration
};

struct LoadedModel {
  Network net;
  ArchSpec arch;
  ModelMeta meta;
};

// .v2sm checkpoint round-trip. Layout (little-endian):
//   "V2SM"  u32 version  u64 payload_length  u32 crc32(payload)
//   payload: u8 role  u8 trainable  u32 input_dim  u32 n_layers
//            { u32 out_dim  u8 activation } per layer
//            u32 epochs  u64 seed  f64 final_loss  u64 corpus_hash  u64 config_hash
//            f64 parameters (per layer: weight row-major, then bias)
std::vector<std::uint8_t> save_model(const Network& net, ModelRole role, const ModelMeta& meta);
LoadedModel load_model(std::span<const std::uint8_t> bytes);
void save_model_file(const Network& net, ModelRole role, const ModelMeta& meta,
                     const std::string& path);
LoadedModel load_model_file(const std::string& path);

// Human-readable architecture + metadata summary (`model inspect`).
std::string describe_model(const LoadedModel& model);

}  // namespace v2s
