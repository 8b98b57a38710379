#include "v2s/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <json.hpp>
#include <numeric>
#include <sstream>

#include "v2s/rng.hpp"

namespace v2s {

void TrainingConfig::validate() const {
  if (learning_rate <= 0.0) throw ValidationError("learning_rate must be positive");
  if (epochs < 1) throw ValidationError("epochs must be >= 1");
  if (omega < 0.0) throw ValidationError("omega must be non-negative");
  if (batch_size < 1) throw ValidationError("batch_size must be >= 1");
}

TrainingConfig training_config_from_json(const std::string& text, const TrainingConfig& base) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("training config is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("training config must be a JSON object");

  TrainingConfig config = base;
  try {
    for (const auto& [key, value] : j.items()) {
      if (key == "learning_rate") config.learning_rate = value.get<double>();
      else if (key == "epochs") config.epochs = value.get<int>();
      else if (key == "omega") config.omega = value.get<double>();
      else if (key == "batch_size") config.batch_size = value.get<int>();
      else if (key == "seed") config.seed = value.get<std::uint64_t>();
      else if (key == "shuffle") config.shuffle = value.get<bool>();
      else throw ConfigError("unknown training config field: " + key);
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("training config field has the wrong type: ") + e.what());
  }
  try {
    config.validate();
  } catch (const ValidationError& e) {
    throw ConfigError(std::string("training config invalid: ") + e.what());
  }
  return config;
}

std::string training_config_to_json(const TrainingConfig& config) {
  nlohmann::json j{{"learning_rate", config.learning_rate}, {"epochs", config.epochs},
                   {"omega", config.omega},                 {"batch_size", config.batch_size},
                   {"seed", config.seed},                   {"shuffle", config.shuffle}};
  return j.dump(2) + "\n";
}

FeatureNormalizer FeatureNormalizer::fit(const Corpus& corpus) {
  if (corpus.utterances.empty()) throw ValidationError("cannot fit a normalizer on an empty corpus");
  const int dim = static_cast<int>(corpus.utterances.front().features.frames.cols());

  Vector sum = Vector::Zero(dim);
  Vector sum_sq = Vector::Zero(dim);
  std::int64_t frames = 0;
  for (const auto& u : corpus.utterances) {
    const auto& f = u.features.frames;
    if (f.cols() != dim) throw ShapeError("corpus utterances disagree on feature dim");
    sum += f.colwise().sum().transpose();
    sum_sq += f.array().square().matrix().colwise().sum().transpose();
    frames += f.rows();
  }

  FeatureNormalizer norm;
  norm.mean_ = sum / static_cast<double>(frames);
  const Vector var =
      (sum_sq / static_cast<double>(frames) - norm.mean_.cwiseProduct(norm.mean_)).cwiseMax(0.0);
  norm.std_ = var.cwiseSqrt().cwiseMax(1e-8);
  return norm;
}

Matrix FeatureNormalizer::apply(const Matrix& frames) const {
  if (frames.cols() != mean_.size()) throw ShapeError("normalizer dim does not match features");
  return (frames.rowwise() - mean_.transpose()).array().rowwise() /
         std_.transpose().array();
}

Matrix FeatureNormalizer::invert(const Matrix& frames) const {
  if (frames.cols() != mean_.size()) throw ShapeError("normalizer dim does not match features");
  return (frames.array().rowwise() * std_.transpose().array()).matrix().rowwise() +
         mean_.transpose();
}

namespace {

int eval_count(int n, double fraction) {
  if (n < 2) return 0;
  const int k = static_cast<int>(std::ceil(fraction * n));
  return std::min(std::max(k, 1), n - 1);
}

}  // namespace

CorpusSplit split_corpus(const Corpus& corpus, double eval_fraction) {
  CorpusSplit split;
  for (int s = 0; s < corpus.spec.n_speakers; ++s) {
    const auto utts = corpus.of_speaker(s);
    const int n = static_cast<int>(utts.size());
    const int k = eval_count(n, eval_fraction);
    for (int i = 0; i < n - k; ++i) split.train.push_back(utts[static_cast<std::size_t>(i)]);
    for (int i = n - k; i < n; ++i) split.eval.push_back(utts[static_cast<std::size_t>(i)]);
  }
  return split;
}

CorpusSplit split_speaker(const Corpus& corpus, int speaker, double eval_fraction) {
  CorpusSplit split;
  const auto utts = corpus.of_speaker(speaker);
  const int n = static_cast<int>(utts.size());
  const int k = eval_count(n, eval_fraction);
  for (int i = 0; i < n - k; ++i) split.train.push_back(utts[static_cast<std::size_t>(i)]);
  for (int i = n - k; i < n; ++i) split.eval.push_back(utts[static_cast<std::size_t>(i)]);
  return split;
}

PairSplit split_parallel_pairs(const Corpus& corpus, int source, int target,
                               double eval_fraction) {
  const auto pairs = corpus.parallel_pairs(source, target);
  const int n = static_cast<int>(pairs.size());
  const int k = eval_count(n, eval_fraction);
  PairSplit split;
  for (int i = 0; i < n - k; ++i) split.train.push_back(pairs[static_cast<std::size_t>(i)]);
  for (int i = n - k; i < n; ++i) split.eval.push_back(pairs[static_cast<std::size_t>(i)]);
  return split;
}

namespace {

// Mean-of-bundles accumulator for utterance batches.
class GradAccumulator {
 public:
  explicit GradAccumulator(const Network& net) {
    for (const auto& l : net.layers()) {
      weights_.push_back(Matrix::Zero(l.weight.rows(), l.weight.cols()));
      biases_.push_back(Vector::Zero(l.bias.size()));
    }
    input_cols_ = net.input_dim();
  }

  void add(const GradientBundle& bundle) {
    for (std::size_t k = 0; k < weights_.size(); ++k) {
      weights_[k] += bundle.weight_grads[k];
      biases_[k] += bundle.bias_grads[k];
    }
    ++count_;
  }

  GradientBundle mean() const {
    GradientBundle out;
    const double scale = 1.0 / static_cast<double>(count_);
    for (std::size_t k = 0; k < weights_.size(); ++k) {
      out.weight_grads.push_back(weights_[k] * scale);
      out.bias_grads.push_back(biases_[k] * scale);
    }
    out.input_gradient = Matrix::Zero(0, input_cols_);
    return out;
  }

  bool empty() const { return count_ == 0; }

 private:
  std::vector<Matrix> weights_;
  std::vector<Vector> biases_;
  int input_cols_ = 0;
  int count_ = 0;
};

// One normalized classifier-training sample.
struct LabeledSequence {
  Matrix input;
  std::vector<int> labels;
};

double sequence_accuracy(const Network& net, const LabeledSequence& sample) {
  const Matrix posterior = network_forward(net, sample.input);
  int hits = 0;
  for (Eigen::Index t = 0; t < posterior.rows(); ++t) {
    Eigen::Index best = 0;
    posterior.row(t).maxCoeff(&best);
    if (static_cast<int>(best) == sample.labels[static_cast<std::size_t>(t)]) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(posterior.rows());
}

double mean_accuracy(const Network& net, const std::vector<LabeledSequence>& samples) {
  if (samples.empty()) return 0.0;
  double sum = 0.0;
  for (const auto& s : samples) sum += sequence_accuracy(net, s);
  return sum / static_cast<double>(samples.size());
}

double mean_sce(const Network& net, const std::vector<LabeledSequence>& samples) {
  double sum = 0.0;
  for (const auto& s : samples)
    sum += sce_loss_frames(s.labels, network_forward(net, s.input)).value;
  return sum / static_cast<double>(samples.size());
}

TrainResult train_classifier(const std::vector<LabeledSequence>& train,
                             const std::vector<LabeledSequence>& eval, const ArchSpec& arch,
                             const TrainingConfig& config) {
  config.validate();
  if (train.empty()) throw ValidationError("no training utterances");

  Network net = build_model(arch, mix_seed(config.seed, "init"));
  AdaGradState state = AdaGradState::zeros_like(net);

  TrainResult result{std::move(net), {}};
  result.history.initial_loss = mean_sce(result.net, train);
  result.history.initial_metric = mean_accuracy(result.net, eval);

  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    if (config.shuffle) {
      Rng rng(mix_seed(config.seed, "shuffle", static_cast<std::uint64_t>(epoch)));
      rng.shuffle(order);
    }

    double epoch_loss = 0.0;
    for (std::size_t begin = 0; begin < order.size();
         begin += static_cast<std::size_t>(config.batch_size)) {
      const std::size_t end =
          std::min(order.size(), begin + static_cast<std::size_t>(config.batch_size));
      GradAccumulator accum(result.net);
      for (std::size_t i = begin; i < end; ++i) {
        const auto& sample = train[order[i]];
        ForwardCache cache;
        const Matrix posterior = network_forward(result.net, sample.input, &cache);
        const LossValue loss = sce_loss_frames(sample.labels, posterior);
        if (!std::isfinite(loss.value)) throw DivergedError("classifier loss diverged", epoch);
        epoch_loss += loss.value;
        accum.add(network_backward_from_logits(result.net, cache, loss.gradient));
      }
      adagrad_step(result.net, accum.mean(), state, config.learning_rate);
    }
    result.history.epoch_loss.push_back(epoch_loss / static_cast<double>(train.size()));
    result.history.epoch_metric.push_back(mean_accuracy(result.net, eval));
  }

  result.net.set_trainable(false);
  return result;
}

std::vector<LabeledSequence> classifier_samples(std::span<const Utterance* const> utterances,
                                                const FeatureNormalizer& norm,
                                                bool speaker_labels) {
  std::vector<LabeledSequence> samples;
  samples.reserve(utterances.size());
  for (const Utterance* u : utterances) {
    LabeledSequence s;
    s.input = norm.apply(u->features.frames);
    if (speaker_labels)
      s.labels.assign(static_cast<std::size_t>(u->features.frames.rows()), u->speaker);
    else
      s.labels = u->phoneme_labels;
    samples.push_back(std::move(s));
  }
  return samples;
}

}  // namespace

TrainResult train_asv(const Corpus& corpus, const ArchSpec& arch, const TrainingConfig& config) {
  if (arch.output_dim != corpus.spec.n_speakers)
    throw ShapeError("asv output dim " + std::to_string(arch.output_dim) +
                     " != speaker count " + std::to_string(corpus.spec.n_speakers));
  const FeatureNormalizer norm = FeatureNormalizer::fit(corpus);
  const CorpusSplit split = split_corpus(corpus);
  return train_classifier(classifier_samples(split.train, norm, /*speaker_labels=*/true),
                          classifier_samples(split.eval, norm, /*speaker_labels=*/true), arch,
                          config);
}

TrainResult train_asr(const Corpus& corpus, const ArchSpec& arch, const TrainingConfig& config) {
  if (arch.output_dim != corpus.spec.n_phonemes)
    throw ShapeError("asr output dim " + std::to_string(arch.output_dim) +
                     " != phoneme count " + std::to_string(corpus.spec.n_phonemes));
  const FeatureNormalizer norm = FeatureNormalizer::fit(corpus);
  const CorpusSplit split = split_corpus(corpus);
  return train_classifier(classifier_samples(split.train, norm, /*speaker_labels=*/false),
                          classifier_samples(split.eval, norm, /*speaker_labels=*/false), arch,
                          config);
}

TrainResult train_parallel_vc(std::span<const UtterancePair> pairs, const ArchSpec& arch,
                              const TrainingConfig& config, const FeatureNormalizer& norm) {
  config.validate();
  if (pairs.empty()) throw ValidationError("no training pairs");

  struct AlignedPair {
    Matrix source;
    Matrix target;
  };
  std::vector<AlignedPair> data;
  data.reserve(pairs.size());
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const auto& [x, y] = pairs[i];
    if (x->features.frames.rows() != y->features.frames.rows()) {
      std::ostringstream os;
      os << "pair " << i << " is misaligned: " << x->features.frames.rows() << " vs "
         << y->features.frames.rows() << " frames";
      throw ShapeError(os.str());
    }
    data.push_back({norm.apply(x->features.frames), norm.apply(y->features.frames)});
  }

  Network net = build_model(arch, mix_seed(config.seed, "init"));
  AdaGradState state = AdaGradState::zeros_like(net);
  TrainResult result{std::move(net), {}};

  const auto mean_loss = [&](const Network& model) {
    double sum = 0.0;
    for (const auto& p : data) sum += mse_loss(network_forward(model, p.source), p.target).value;
    return sum / static_cast<double>(data.size());
  };
  result.history.initial_loss = mean_loss(result.net);
  result.history.initial_metric = result.history.initial_loss;

  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    if (config.shuffle) {
      Rng rng(mix_seed(config.seed, "shuffle", static_cast<std::uint64_t>(epoch)));
      rng.shuffle(order);
    }
    double epoch_loss = 0.0;
    for (std::size_t begin = 0; begin < order.size();
         begin += static_cast<std::size_t>(config.batch_size)) {
      const std::size_t end =
          std::min(order.size(), begin + static_cast<std::size_t>(config.batch_size));
      GradAccumulator accum(result.net);
      for (std::size_t i = begin; i < end; ++i) {
        const auto& pair = data[order[i]];
        ForwardCache cache;
        const Matrix out = network_forward(result.net, pair.source, &cache);
        const LossValue loss = mse_loss(out, pair.target);
        if (!std::isfinite(loss.value)) throw DivergedError("parallel VC loss diverged", epoch);
        epoch_loss += loss.value;
        accum.add(network_backward(result.net, cache, loss.gradient));
      }
      adagrad_step(result.net, accum.mean(), state, config.learning_rate);
    }
    const double mean = epoch_loss / static_cast<double>(data.size());
    result.history.epoch_loss.push_back(mean);
    result.history.epoch_metric.push_back(mean);
  }
  return result;
}

TrainResult train_v2s(std::span<const Utterance* const> source_utterances,
                      const SpeakerCode& target, const Network& asv, const Network& asr,
                      const ArchSpec& arch, const TrainingConfig& config,
                      const FeatureNormalizer& norm) {
  config.validate();
  if (source_utterances.empty()) throw ValidationError("no source utterances");
  if (asv.trainable() || asr.trainable())
    throw ContractError("train_v2s requires frozen asv/asr models");
  if (arch.role != ModelRole::vc) throw ContractError("train_v2s expects a vc architecture");
  if (arch.output_dim != asv.input_dim() || arch.output_dim != asr.input_dim())
    throw ShapeError("vc output dim does not match classifier input dims");
  if (target.count() != asv.output_dim())
    throw ShapeError("speaker code size does not match asv output dim");

  std::vector<Matrix> inputs;
  inputs.reserve(source_utterances.size());
  for (const Utterance* u : source_utterances) inputs.push_back(norm.apply(u->features.frames));

  Network net = build_model(arch, mix_seed(config.seed, "init"));
  AdaGradState state = AdaGradState::zeros_like(net);
  TrainResult result{std::move(net), {}};

  {
    double loss_sum = 0.0, posterior_sum = 0.0;
    for (const Matrix& x : inputs) {
      const Matrix y_hat = network_forward(result.net, x);
      const V2sLossParts parts = v2s_loss_parts(x, y_hat, target, asv, asr, config.omega);
      loss_sum += parts.total.value;
      posterior_sum += parts.target_posterior;
    }
    result.history.initial_loss = loss_sum / static_cast<double>(inputs.size());
    result.history.initial_metric = posterior_sum / static_cast<double>(inputs.size());
  }

  std::vector<std::size_t> order(inputs.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    if (config.shuffle) {
      Rng rng(mix_seed(config.seed, "shuffle", static_cast<std::uint64_t>(epoch)));
      rng.shuffle(order);
    }
    double epoch_loss = 0.0, epoch_posterior = 0.0;
    for (std::size_t begin = 0; begin < order.size();
         begin += static_cast<std::size_t>(config.batch_size)) {
      const std::size_t end =
          std::min(order.size(), begin + static_cast<std::size_t>(config.batch_size));
      GradAccumulator accum(result.net);
      for (std::size_t i = begin; i < end; ++i) {
        const Matrix& x = inputs[order[i]];
        ForwardCache cache;
        const Matrix y_hat = network_forward(result.net, x, &cache);
        const V2sLossParts parts = v2s_loss_parts(x, y_hat, target, asv, asr, config.omega);
        if (!std::isfinite(parts.total.value)) throw DivergedError("v2s loss diverged", epoch);
        epoch_loss += parts.total.value;
        epoch_posterior += parts.target_posterior;
        accum.add(network_backward(result.net, cache, parts.total.gradient));
      }
      adagrad_step(result.net, accum.mean(), state, config.learning_rate);
    }
    result.history.epoch_loss.push_back(epoch_loss / static_cast<double>(inputs.size()));
    result.history.epoch_metric.push_back(epoch_posterior / static_cast<double>(inputs.size()));
  }
  return result;
}

}  // namespace v2s
