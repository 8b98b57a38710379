#include "v2s/corpus.hpp"

#include <cmath>
#include <json.hpp>
#include <sstream>

#include "v2s/detail/binio.hpp"
#include "v2s/rng.hpp"

namespace v2s {

void CorpusSpec::validate() const {
  if (n_speakers < 1 || n_phonemes < 1 || static_dim < 1 || utterances_per_speaker < 1)
    throw ValidationError("corpus spec counts must be >= 1");
  if (min_frames < 1 || max_frames < min_frames)
    throw ValidationError("corpus spec frame range is invalid");
  if (noise_std < 0.0 || speaker_offset_scale < 0.0)
    throw ValidationError("corpus spec scales must be non-negative");
}

const Utterance& Corpus::utterance(int speaker, int index) const {
  int seen = 0;
  for (const auto& u : utterances) {
    if (u.speaker != speaker) continue;
    if (seen == index) return u;
    ++seen;
  }
  throw ValidationError("no utterance " + std::to_string(index) + " for speaker " +
                        std::to_string(speaker));
}

std::vector<const Utterance*> Corpus::of_speaker(int speaker) const {
  std::vector<const Utterance*> out;
  for (const auto& u : utterances)
    if (u.speaker == speaker) out.push_back(&u);
  return out;
}

std::vector<std::pair<const Utterance*, const Utterance*>> Corpus::parallel_pairs(
    int source, int target) const {
  const auto src = of_speaker(source);
  const auto tgt = of_speaker(target);
  const std::size_t n = std::min(src.size(), tgt.size());
  std::vector<std::pair<const Utterance*, const Utterance*>> pairs;
  pairs.reserve(n);
  for (std::size_t i = 0; i < n; ++i) pairs.emplace_back(src[i], tgt[i]);
  return pairs;
}

namespace {

// Shared per-utterance phoneme track: contiguous runs of 3-10 frames.
std::vector<int> make_label_sequence(std::uint64_t seed, int utt_index, const CorpusSpec& spec) {
  Rng rng(mix_seed(seed, "labels", static_cast<std::uint64_t>(utt_index)));
  const int t_total = rng.uniform_int(spec.min_frames, spec.max_frames);
  std::vector<int> labels;
  labels.reserve(static_cast<std::size_t>(t_total));
  while (static_cast<int>(labels.size()) < t_total) {
    const int run = std::min(rng.uniform_int(3, 10), t_total - static_cast<int>(labels.size()));
    const int phoneme = rng.uniform_int(0, spec.n_phonemes - 1);
    labels.insert(labels.end(), static_cast<std::size_t>(run), phoneme);
  }
  return labels;
}

}  // namespace

Corpus synth_corpus(const CorpusSpec& spec) {
  spec.validate();

  Rng centroid_rng(mix_seed(spec.seed, "phoneme-centroids"));
  Eigen::MatrixXd centroids(spec.n_phonemes, spec.static_dim);
  for (Eigen::Index p = 0; p < centroids.rows(); ++p)
    for (Eigen::Index d = 0; d < centroids.cols(); ++d) centroids(p, d) = centroid_rng.normal();

  Rng offset_rng(mix_seed(spec.seed, "speaker-offsets"));
  Eigen::MatrixXd offsets(spec.n_speakers, spec.static_dim);
  for (Eigen::Index s = 0; s < offsets.rows(); ++s)
    for (Eigen::Index d = 0; d < offsets.cols(); ++d)
      offsets(s, d) = spec.speaker_offset_scale * offset_rng.normal();

  // Per-speaker pitch statistics; even/odd speakers form a low/high group.
  std::vector<double> pitch_mean(static_cast<std::size_t>(spec.n_speakers));
  std::vector<double> pitch_std(static_cast<std::size_t>(spec.n_speakers));
  for (int s = 0; s < spec.n_speakers; ++s) {
    Rng rng(mix_seed(spec.seed, "pitch", static_cast<std::uint64_t>(s)));
    const double base = (s % 2 == 0) ? 110.0 : 220.0;
    pitch_mean[static_cast<std::size_t>(s)] = std::log(base) + 0.05 * rng.normal();
    pitch_std[static_cast<std::size_t>(s)] = 0.08 + 0.02 * rng.uniform();
  }

  Corpus corpus;
  corpus.spec = spec;
  corpus.utterances.reserve(
      static_cast<std::size_t>(spec.n_speakers * spec.utterances_per_speaker));

  for (int s = 0; s < spec.n_speakers; ++s) {
    for (int i = 0; i < spec.utterances_per_speaker; ++i) {
      const std::vector<int> labels = make_label_sequence(spec.seed, i, spec);
      const int t_total = static_cast<int>(labels.size());

      Rng rng(mix_seed(spec.seed, "utterance", static_cast<std::uint64_t>(s),
                       static_cast<std::uint64_t>(i)));
      Eigen::MatrixXd statics(t_total, spec.static_dim);
      for (int t = 0; t < t_total; ++t)
        for (int d = 0; d < spec.static_dim; ++d)
          statics(t, d) = centroids(labels[static_cast<std::size_t>(t)], d) + offsets(s, d) +
                          spec.noise_std * rng.normal();

      Utterance utt;
      utt.features = append_deltas(statics);
      utt.speaker = s;
      utt.phoneme_labels = labels;
      utt.f0.resize(static_cast<std::size_t>(t_total));
      for (int t = 0; t < t_total; ++t) {
        const bool voiced = rng.uniform() >= 0.15;
        utt.f0[static_cast<std::size_t>(t)] =
            voiced ? std::exp(rng.normal(pitch_mean[static_cast<std::size_t>(s)],
                                         pitch_std[static_cast<std::size_t>(s)]))
                   : 0.0;
      }
      corpus.utterances.push_back(std::move(utt));
    }
  }
  return corpus;
}

FeatureSequence append_deltas(const Eigen::MatrixXd& statics) {
  const Eigen::Index t_total = statics.rows();
  const Eigen::Index d = statics.cols();
  if (t_total < 1) throw ValidationError("append_deltas needs at least one frame");

  FeatureSequence out;
  out.frames.resize(t_total, 2 * d);
  out.frames.leftCols(d) = statics;
  for (Eigen::Index t = 0; t < t_total; ++t) {
    const Eigen::Index prev = std::max<Eigen::Index>(t - 1, 0);
    const Eigen::Index next = std::min<Eigen::Index>(t + 1, t_total - 1);
    out.frames.row(t).tail(d) = 0.5 * (statics.row(next) - statics.row(prev));
  }
  return out;
}

F0Stats f0_stats(std::span<const double> f0) {
  double sum = 0.0;
  int n = 0;
  for (const double hz : f0) {
    if (hz < 0.0) throw ValidationError("negative f0 value");
    if (hz > 0.0) {
      sum += std::log(hz);
      ++n;
    }
  }
  if (n < 2)
    throw InsufficientDataError("f0_stats needs at least 2 voiced frames, got " +
                                std::to_string(n));
  const double mean = sum / n;
  double ss = 0.0;
  for (const double hz : f0)
    if (hz > 0.0) ss += (std::log(hz) - mean) * (std::log(hz) - mean);

  F0Stats stats;
  stats.mean = mean;
  stats.std = std::max(std::sqrt(ss / (n - 1)), kF0StdFloor);
  return stats;
}

std::vector<double> convert_f0(std::span<const double> f0, const F0Stats& src,
                               const F0Stats& tgt) {
  std::vector<double> out;
  out.reserve(f0.size());
  const double scale = tgt.std / src.std;
  for (const double hz : f0) {
    if (hz > 0.0)
      out.push_back(std::exp(scale * (std::log(hz) - src.mean) + tgt.mean));
    else
      out.push_back(0.0);
  }
  return out;
}

namespace {
constexpr char kCorpusMagic[5] = "V2SC";
constexpr std::uint32_t kCorpusVersion = 1;
}  // namespace

std::vector<std::uint8_t> save_corpus(const Corpus& corpus) {
  const int dim = corpus.feature_dim();
  detail::ByteWriter w;
  w.magic(kCorpusMagic);
  w.u32(kCorpusVersion);
  w.u32(static_cast<std::uint32_t>(corpus.spec.n_speakers));
  w.u32(static_cast<std::uint32_t>(corpus.spec.n_phonemes));
  w.u32(static_cast<std::uint32_t>(dim));
  w.u32(static_cast<std::uint32_t>(corpus.utterances.size()));

  for (const auto& u : corpus.utterances) {
    const auto& f = u.features.frames;
    if (f.cols() != dim) throw ShapeError("utterance feature dim does not match the corpus");
    if (f.rows() < 1) throw ValidationError("utterance has no frames");
    if (u.phoneme_labels.size() != static_cast<std::size_t>(f.rows()) ||
        u.f0.size() != static_cast<std::size_t>(f.rows()))
      throw ShapeError("utterance label/f0 length does not match the frame count");

    w.u32(static_cast<std::uint32_t>(u.speaker));
    w.u32(static_cast<std::uint32_t>(f.rows()));
    for (Eigen::Index t = 0; t < f.rows(); ++t)
      for (Eigen::Index d = 0; d < f.cols(); ++d) w.f64(f(t, d));
    for (const int label : u.phoneme_labels) w.u32(static_cast<std::uint32_t>(label));
    for (const double hz : u.f0) w.f64(hz);
  }
  return w.take();
}

Corpus load_corpus(std::span<const std::uint8_t> bytes) {
  detail::ByteReader r(bytes.data(), bytes.size());
  char magic[4];
  r.require(4);
  r.raw(magic, 4);
  if (std::memcmp(magic, kCorpusMagic, 4) != 0)
    throw LoadError(LoadError::Kind::bad_magic, "not a corpus file (bad magic)");
  const std::uint32_t version = r.u32();
  if (version != kCorpusVersion)
    throw LoadError(LoadError::Kind::bad_version,
                    "unsupported corpus version " + std::to_string(version));

  const std::uint32_t n_speakers = r.u32();
  const std::uint32_t n_phonemes = r.u32();
  const std::uint32_t dim = r.u32();
  const std::uint32_t n_utts = r.u32();
  if (n_speakers < 1 || n_phonemes < 1 || dim < 2 || dim % 2 != 0)
    throw LoadError(LoadError::Kind::malformed, "corpus header has invalid dimensions");
  // Caps keep a corrupt header from driving allocations.
  if (n_speakers > 1000000 || n_phonemes > 1000000 || dim > 65536 || n_utts > 10000000)
    throw LoadError(LoadError::Kind::malformed, "corpus header dimensions are implausible");

  Corpus corpus;
  corpus.spec.n_speakers = static_cast<int>(n_speakers);
  corpus.spec.n_phonemes = static_cast<int>(n_phonemes);
  corpus.spec.static_dim = static_cast<int>(dim / 2);
  corpus.spec.utterances_per_speaker =
      (n_utts % n_speakers == 0) ? static_cast<int>(n_utts / n_speakers) : 0;

  corpus.utterances.reserve(n_utts);
  for (std::uint32_t i = 0; i < n_utts; ++i) {
    Utterance u;
    u.speaker = static_cast<int>(r.u32());
    const std::uint32_t t_total = r.u32();
    if (u.speaker >= static_cast<int>(n_speakers) || t_total < 1 || t_total > 10000000)
      throw LoadError(LoadError::Kind::malformed,
                      "utterance " + std::to_string(i) + " has an invalid header");

    u.features.frames.resize(t_total, dim);
    r.require(static_cast<std::size_t>(t_total) * dim * sizeof(double));
    for (std::uint32_t t = 0; t < t_total; ++t)
      for (std::uint32_t d = 0; d < dim; ++d) u.features.frames(t, d) = r.f64();
    if (!u.features.frames.allFinite())
      throw LoadError(LoadError::Kind::malformed,
                      "utterance " + std::to_string(i) + " has non-finite features");

    u.phoneme_labels.resize(t_total);
    for (std::uint32_t t = 0; t < t_total; ++t) {
      const std::uint32_t label = r.u32();
      if (label >= n_phonemes)
        throw LoadError(LoadError::Kind::malformed,
                        "utterance " + std::to_string(i) + " has an out-of-range label");
      u.phoneme_labels[t] = static_cast<int>(label);
    }
    u.f0.resize(t_total);
    for (std::uint32_t t = 0; t < t_total; ++t) {
      u.f0[t] = r.f64();
      if (!(u.f0[t] >= 0.0))
        throw LoadError(LoadError::Kind::malformed,
                        "utterance " + std::to_string(i) + " has a negative f0");
    }
    corpus.utterances.push_back(std::move(u));
  }
  if (r.remaining() != 0)
    throw LoadError(LoadError::Kind::malformed, "corpus file has trailing bytes");
  return corpus;
}

void save_corpus_file(const Corpus& corpus, const std::string& path) {
  detail::write_file(path, save_corpus(corpus));
}

Corpus load_corpus_file(const std::string& path) {
  const auto bytes = detail::read_file(path);
  return load_corpus(bytes);
}

CorpusSpec corpus_spec_from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("corpus spec is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("corpus spec must be a JSON object");

  CorpusSpec spec;
  try {
    for (const auto& [key, value] : j.items()) {
      if (key == "n_speakers") spec.n_speakers = value.get<int>();
      else if (key == "n_phonemes") spec.n_phonemes = value.get<int>();
      else if (key == "static_dim") spec.static_dim = value.get<int>();
      else if (key == "utterances_per_speaker") spec.utterances_per_speaker = value.get<int>();
      else if (key == "min_frames") spec.min_frames = value.get<int>();
      else if (key == "max_frames") spec.max_frames = value.get<int>();
      else if (key == "noise_std") spec.noise_std = value.get<double>();
      else if (key == "speaker_offset_scale") spec.speaker_offset_scale = value.get<double>();
      else if (key == "seed") spec.seed = value.get<std::uint64_t>();
      else throw ConfigError("unknown corpus spec field: " + key);
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("corpus spec field has the wrong type: ") + e.what());
  }
  try {
    spec.validate();
  } catch (const ValidationError& e) {
    throw ConfigError(std::string("corpus spec invalid: ") + e.what());
  }
  return spec;
}

std::string corpus_spec_to_json(const CorpusSpec& spec) {
  nlohmann::json j{{"n_speakers", spec.n_speakers},
                   {"n_phonemes", spec.n_phonemes},
                   {"static_dim", spec.static_dim},
                   {"utterances_per_speaker", spec.utterances_per_speaker},
                   {"min_frames", spec.min_frames},
                   {"max_frames", spec.max_frames},
                   {"noise_std", spec.noise_std},
                   {"speaker_offset_scale", spec.speaker_offset_scale},
                   {"seed", spec.seed}};
  return j.dump(2) + "\n";
}

}  // namespace v2s
