#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "v2s/error.hpp"
#include "v2s/speaker_code.hpp"

namespace v2s {

// T x D matrix of per-frame acoustic features. Corpus-produced sequences
// hold statics in the first D/2 columns and their deltas in the rest.
struct FeatureSequence {
  Eigen::MatrixXd frames;
  double frame_shift_ms = 5.0;

  int num_frames() const { return static_cast<int>(frames.rows()); }
  int dim() const { return static_cast<int>(frames.cols()); }
};

struct Utterance {
  FeatureSequence features;
  int speaker = 0;
  std::vector<int> phoneme_labels;  // one label per frame
  std::vector<double> f0;           // Hz, 0 = unvoiced
};

// Log-domain F0 statistics over voiced frames.
struct F0Stats {
  double mean = 0.0;  // mean of ln(f0)
  double std = 1.0;   // floored at kF0StdFloor
};

inline constexpr double kF0StdFloor = 1e-6;

// Generation parameters for the synthetic multi-speaker corpus. Defaults
// are the desk-scale preset the trainers and metrics are calibrated on.
struct CorpusSpec {
  int n_speakers = 8;
  int n_phonemes = 10;
  int static_dim = 8;  // feature dim D is 2 * static_dim after deltas
  int utterances_per_speaker = 40;
  int min_frames = 40;
  int max_frames = 80;
  double noise_std = 0.3;
  double speaker_offset_scale = 2.0;
  std::uint64_t seed = 20206;

  void validate() const;
};

// A generated corpus: utterances stored speaker-major, i.e. all of speaker
// 0's utterances (in utterance-index order) first. Utterance i of any two
// speakers shares the same length and phoneme-label sequence, so every
// speaker pair is frame-aligned parallel data.
struct Corpus {
  CorpusSpec spec;
  std::vector<Utterance> utterances;

  int feature_dim() const { return 2 * spec.static_dim; }
  const Utterance& utterance(int speaker, int index) const;
  std::vector<const Utterance*> of_speaker(int speaker) const;
  std::vector<std::pair<const Utterance*, const Utterance*>> parallel_pairs(int source,
                                                                            int target) const;
};

// Deterministic synthesis: each frame's statics are the phoneme centroid
// plus a per-speaker offset plus iid noise; labels form contiguous runs of
// 3-10 frames; deltas are appended.
Corpus synth_corpus(const CorpusSpec& spec);

// Appends delta features: delta_t = (static_{t+1} - static_{t-1}) / 2 with
// edge replication. Output is T x 2d.
FeatureSequence append_deltas(const Eigen::MatrixXd& statics);

// Mean/std of ln(f0) over voiced frames (unbiased variance, std floored).
// Requires at least two voiced frames.
F0Stats f0_stats(std::span<const double> f0);

// Log-linear transform mapping source statistics onto target statistics.
// Unvoiced frames (0) pass through unchanged.
std::vector<double> convert_f0(std::span<const double> f0, const F0Stats& src, const F0Stats& tgt);

// .v2sc container round-trip. Layout (little-endian):
//   "V2SC"  u32 version  u32 S  u32 P  u32 D  u32 N
//   then per utterance:
//   u32 speaker  u32 T  f64[T*D] features row-major  u32[T] labels  f64[T] f0
std::vector<std::uint8_t> save_corpus(const Corpus& corpus);
Corpus load_corpus(std::span<const std::uint8_t> bytes);
void save_corpus_file(const Corpus& corpus, const std::string& path);
Corpus load_corpus_file(const std::string& path);

// JSON (de)serialization of the spec, for `corpus --spec spec.json`.
CorpusSpec corpus_spec_from_json(const std::string& text);
std::string corpus_spec_to_json(const CorpusSpec& spec);

}  // namespace v2s
