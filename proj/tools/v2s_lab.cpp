#include <CLI11.hpp>
#include <cstdio>
#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "v2s/detail/binio.hpp"
#include "v2s/experiment.hpp"
#include "v2s/rng.hpp"

namespace {

using namespace v2s;

// Wraps one phase of a command so failures map to the documented exit
// codes: 1 config, 2 data, 3 training, 4 evaluation.
template <typename Fn>
auto phase(const std::string& name, FailureClass fclass, Fn&& fn) {
  try {
    return fn();
  } catch (const StageError&) {
    throw;
  } catch (const ConfigError& e) {
    throw StageError(name, FailureClass::config, e.what());
  } catch (const Error& e) {
    throw StageError(name, fclass, e.what());
  }
}

std::optional<std::uint64_t> env_seed_override() {
  const char* text = std::getenv("V2S_LAB_SEED");
  if (!text || !*text) return std::nullopt;
  try {
    std::size_t used = 0;
    const unsigned long long v = std::stoull(text, &used);
    if (used != std::string(text).size()) throw std::invalid_argument(text);
    return static_cast<std::uint64_t>(v);
  } catch (const std::exception&) {
    throw ConfigError("V2S_LAB_SEED is not an unsigned integer");
  }
}

std::string read_text_file(const std::string& path) {
  const auto bytes = detail::read_file(path);
  return std::string(bytes.begin(), bytes.end());
}

TrainingConfig load_training_config(const std::string& path,
                                    const TrainingConfig& base = TrainingConfig{}) {
  TrainingConfig config = base;
  if (!path.empty())
    config = phase("config", FailureClass::config,
                   [&] { return training_config_from_json(read_text_file(path), base); });
  if (const auto seed = env_seed_override()) config.seed = *seed;
  return config;
}

struct CorpusWithHash {
  Corpus corpus;
  std::uint64_t hash;
};

CorpusWithHash load_corpus_with_hash(const std::string& path) {
  return phase("load-corpus", FailureClass::data, [&] {
    const auto bytes = detail::read_file(path);
    return CorpusWithHash{load_corpus(bytes), hash_bytes(bytes)};
  });
}

ArchSpec resolve_arch(const std::string& preset, ModelRole role, const Corpus& corpus) {
  if (preset == "full") return full_arch(role);
  if (preset == "desk")
    return desk_arch(role, corpus.feature_dim(), corpus.spec.n_speakers, corpus.spec.n_phonemes);
  throw ConfigError("unknown arch preset '" + preset + "' (expected desk or full)");
}

void check_speaker_pair(const Corpus& corpus, int source, int target) {
  phase("config", FailureClass::config, [&] {
    const int s = corpus.spec.n_speakers;
    if (source < 0 || source >= s || target < 0 || target >= s)
      throw ConfigError("speaker ids must lie in [0, " + std::to_string(s) + ")");
    if (source == target) throw ConfigError("source and target speakers must differ");
    return 0;
  });
}

LoadedModel load_role_checked(const std::string& path, ModelRole role) {
  return phase("load-model", FailureClass::data, [&] {
    LoadedModel m = load_model_file(path);
    if (m.arch.role != role)
      throw ValidationError(path + " holds a " + role_name(m.arch.role) + " model, expected " +
                            role_name(role));
    return m;
  });
}

void save_trained(const TrainResult& trained, ModelRole role, const std::string& out,
                  const TrainingConfig& config, std::uint64_t corpus_hash) {
  phase("save-model", FailureClass::data, [&] {
    ModelMeta meta{config.epochs, config.seed, trained.history.epoch_loss.back(), corpus_hash,
                   fnv1a(training_config_to_json(config))};
    save_model_file(trained.net, role, meta, out);
    const std::string jsonl = history_to_jsonl(trained.history);
    detail::write_file(out + ".history.jsonl",
                       std::vector<std::uint8_t>(jsonl.begin(), jsonl.end()));
    std::cout << jsonl;
    return 0;
  });
}

struct CliOptions {
  // corpus
  std::string corpus_spec_path, corpus_out;
  // shared trainer flags
  std::string config_path, corpus_path, model_out, arch_preset = "desk";
  // train-paravc
  std::string utts = "all";
  int source = 0;
  int target = 1;
  // attack
  std::string asv_path, asr_path;
  std::optional<double> omega;
  // evaluate
  std::string vc_path, report_out, method = "VC";
  int eval_utts = 0;
  bool force = false;
  // report
  std::vector<std::string> report_inputs;
  std::string table_out;
  // model inspect
  std::string inspect_path;
  // experiment
  std::string experiment_config_path, out_dir;
  int parallel = 1;
};

int cmd_corpus(const CliOptions& opt) {
  CorpusSpec spec = phase("config", FailureClass::config, [&] {
    return corpus_spec_from_json(read_text_file(opt.corpus_spec_path));
  });
  if (const auto seed = env_seed_override()) spec.seed = *seed;
  const Corpus corpus = synth_corpus(spec);
  phase("save-corpus", FailureClass::data, [&] {
    save_corpus_file(corpus, opt.corpus_out);
    return 0;
  });
  std::cout << "wrote " << opt.corpus_out << " (" << corpus.utterances.size() << " utterances, S="
            << spec.n_speakers << " P=" << spec.n_phonemes << " D=" << 2 * spec.static_dim
            << ")\n";
  return 0;
}

int cmd_model_inspect(const CliOptions& opt) {
  const LoadedModel model =
      phase("load-model", FailureClass::data, [&] { return load_model_file(opt.inspect_path); });
  std::cout << describe_model(model);
  return 0;
}

int cmd_train_classifier(const CliOptions& opt, ModelRole role) {
  const auto [corpus, corpus_hash] = load_corpus_with_hash(opt.corpus_path);
  const TrainingConfig config =
      load_training_config(opt.config_path, classifier_training_defaults());
  const ArchSpec arch = resolve_arch(opt.arch_preset, role, corpus);
  const TrainResult trained = phase("train", FailureClass::training, [&] {
    return role == ModelRole::asv ? train_asv(corpus, arch, config)
                                  : train_asr(corpus, arch, config);
  });
  save_trained(trained, role, opt.model_out, config, corpus_hash);
  return 0;
}

int cmd_train_paravc(const CliOptions& opt) {
  const auto [corpus, corpus_hash] = load_corpus_with_hash(opt.corpus_path);
  check_speaker_pair(corpus, opt.source, opt.target);
  const TrainingConfig config = load_training_config(opt.config_path);
  const ArchSpec arch = resolve_arch(opt.arch_preset, ModelRole::vc, corpus);

  const PairSplit split = phase("pairs", FailureClass::data, [&] {
    return split_parallel_pairs(corpus, opt.source, opt.target);
  });
  std::span<const UtterancePair> pairs(split.train);
  if (opt.utts != "all") {
    int k = 0;
    try {
      k = std::stoi(opt.utts);
    } catch (const std::exception&) {
      throw StageError("config", FailureClass::config,
                       "--utts must be a positive integer or 'all'");
    }
    if (k < 1) throw StageError("config", FailureClass::config, "--utts must be >= 1");
    pairs = pairs.subspan(0, std::min<std::size_t>(pairs.size(), static_cast<std::size_t>(k)));
  }

  const FeatureNormalizer norm = FeatureNormalizer::fit(corpus);
  const TrainResult trained = phase("train", FailureClass::training, [&] {
    return train_parallel_vc(pairs, arch, config, norm);
  });
  save_trained(trained, ModelRole::vc, opt.model_out, config, corpus_hash);
  return 0;
}

int cmd_attack(const CliOptions& opt) {
  const auto [corpus, corpus_hash] = load_corpus_with_hash(opt.corpus_path);
  check_speaker_pair(corpus, opt.source, opt.target);
  TrainingConfig config = load_training_config(opt.config_path);
  if (opt.omega.has_value()) config.omega = *opt.omega;
  const ArchSpec arch = resolve_arch(opt.arch_preset, ModelRole::vc, corpus);

  const LoadedModel asv = load_role_checked(opt.asv_path, ModelRole::asv);
  const LoadedModel asr = load_role_checked(opt.asr_path, ModelRole::asr);

  const FeatureNormalizer norm = FeatureNormalizer::fit(corpus);
  const CorpusSplit source_split = split_speaker(corpus, opt.source);
  const TrainResult trained = phase("train", FailureClass::training, [&] {
    const SpeakerCode code = one_hot(opt.target, corpus.spec.n_speakers);
    return train_v2s(source_split.train, code, asv.net, asr.net, arch, config, norm);
  });
  save_trained(trained, ModelRole::vc, opt.model_out, config, corpus_hash);
  return 0;
}

int cmd_evaluate(const CliOptions& opt) {
  const auto bytes =
      phase("load-corpus", FailureClass::data, [&] { return detail::read_file(opt.corpus_path); });
  const Corpus corpus = phase("load-corpus", FailureClass::data, [&] {
    return load_corpus(bytes);
  });
  const std::uint64_t corpus_hash = hash_bytes(bytes);
  check_speaker_pair(corpus, opt.source, opt.target);

  const LoadedModel vc = load_role_checked(opt.vc_path, ModelRole::vc);
  const LoadedModel asv = load_role_checked(opt.asv_path, ModelRole::asv);
  const LoadedModel asr = load_role_checked(opt.asr_path, ModelRole::asr);

  if (!opt.force) {
    phase("hash-check", FailureClass::data, [&] {
      for (const auto* m : {&vc, &asv, &asr}) {
        if ((*m).meta.corpus_hash != corpus_hash)
          throw ValidationError("model corpus hash " + hash_hex((*m).meta.corpus_hash) +
                                " does not match corpus " + hash_hex(corpus_hash) +
                                " (use --force to evaluate anyway)");
      }
      return 0;
    });
  }

  return phase("evaluate", FailureClass::evaluation, [&] {
    const FeatureNormalizer norm = FeatureNormalizer::fit(corpus);
    const PairSplit pairs = split_parallel_pairs(corpus, opt.source, opt.target);
    std::vector<const Utterance*> sources, references;
    for (const auto& [x, y] : pairs.eval) {
      sources.push_back(x);
      references.push_back(y);
    }

    ConditionLabel label;
    label.method = opt.method;
    label.omega = opt.omega;
    label.train_utterances = opt.eval_utts;
    label.source = opt.source;
    label.target = opt.target;

    EvalReport report;
    report.corpus_hash = hash_hex(corpus_hash);
    report.config_hash = hash_hex(vc.meta.config_hash);
    report.conditions.push_back(evaluate_condition(label, vc.net, asv.net, asr.net, sources,
                                                   one_hot(opt.target, corpus.spec.n_speakers),
                                                   norm, references));
    emit_report(report, opt.report_out);
    std::cout << report_to_table(report);
    return 0;
  });
}

int cmd_report(const CliOptions& opt) {
  std::vector<EvalReport> inputs;
  for (const auto& path : opt.report_inputs)
    inputs.push_back(phase("load-report", FailureClass::data,
                           [&] { return report_from_json(read_text_file(path)); }));

  return phase("report", FailureClass::evaluation, [&] {
    EvalReport combined;
    combined.corpus_hash = inputs.front().corpus_hash;
    std::string hashes;
    for (const auto& r : inputs) {
      if (!opt.force && r.corpus_hash != combined.corpus_hash)
        throw ValidationError("reports come from different corpora (use --force to merge)");
      hashes += r.config_hash;
      for (const auto& c : r.conditions) combined.conditions.push_back(c);
    }
    combined.config_hash = hash_hex(fnv1a(hashes));
    emit_report(combined, opt.report_out, opt.table_out);
    std::cout << report_to_table(combined);
    return 0;
  });
}

int cmd_experiment(const CliOptions& opt) {
  ExperimentConfig config = phase("config", FailureClass::config, [&] {
    return experiment_config_from_json(read_text_file(opt.experiment_config_path));
  });
  if (!opt.out_dir.empty()) config.output_dir = opt.out_dir;
  if (const auto seed = env_seed_override()) config.seed = *seed;

  const ExperimentResult result = run_experiment(config, opt.parallel);
  std::cout << "corpus:  " << result.corpus_file << "\n";
  std::cout << "asv:     " << result.asv_file << "\n";
  std::cout << "asr:     " << result.asr_file << "\n";
  for (const auto& f : result.condition_files) std::cout << "vc:      " << f << "\n";
  std::cout << "report:  " << result.report_json << "\n";
  std::cout << read_text_file(result.report_table);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"v2s-lab: voice-conversion attack experiments against a frozen speaker verifier"};
  app.require_subcommand(1);
  CliOptions opt;

  auto* corpus = app.add_subcommand("corpus", "Generate a synthetic corpus file");
  corpus->add_option("--spec", opt.corpus_spec_path, "Corpus spec JSON")->required();
  corpus->add_option("--out", opt.corpus_out, "Output .v2sc path")->required();

  auto* model = app.add_subcommand("model", "Checkpoint utilities");
  auto* inspect = model->add_subcommand("inspect", "Print architecture and metadata");
  inspect->add_option("file", opt.inspect_path, "Checkpoint .v2sm path")->required();
  model->require_subcommand(1);

  const auto add_trainer_flags = [&opt](CLI::App* cmd) {
    cmd->add_option("--config", opt.config_path, "Training config JSON");
    cmd->add_option("--corpus", opt.corpus_path, "Corpus .v2sc path")->required();
    cmd->add_option("--out", opt.model_out, "Output .v2sm path")->required();
    cmd->add_option("--arch", opt.arch_preset, "Architecture preset: desk or full");
  };

  auto* train_asv_cmd = app.add_subcommand("train-asv", "Train the speaker classifier");
  add_trainer_flags(train_asv_cmd);

  auto* train_asr_cmd = app.add_subcommand("train-asr", "Train the phoneme classifier");
  add_trainer_flags(train_asr_cmd);

  auto* paravc = app.add_subcommand("train-paravc", "Train the parallel VC baseline");
  add_trainer_flags(paravc);
  paravc->add_option("--utts", opt.utts, "Training pairs: a count or 'all'");
  paravc->add_option("--source", opt.source, "Source speaker id");
  paravc->add_option("--target", opt.target, "Target speaker id")->required();

  auto* attack = app.add_subcommand("attack", "Train the V2S attack converter");
  add_trainer_flags(attack);
  attack->add_option("--source", opt.source, "Source speaker id");
  attack->add_option("--target", opt.target, "Target speaker id")->required();
  attack->add_option("--omega", opt.omega, "Retention-term weight override");
  attack->add_option("--asv", opt.asv_path, "Frozen speaker classifier .v2sm")->required();
  attack->add_option("--asr", opt.asr_path, "Frozen phoneme classifier .v2sm")->required();

  auto* evaluate = app.add_subcommand("evaluate", "Evaluate a converter on held-out utterances");
  evaluate->add_option("--vc", opt.vc_path, "Converter .v2sm")->required();
  evaluate->add_option("--asv", opt.asv_path, "Speaker classifier .v2sm")->required();
  evaluate->add_option("--asr", opt.asr_path, "Phoneme classifier .v2sm")->required();
  evaluate->add_option("--corpus", opt.corpus_path, "Corpus .v2sc path")->required();
  evaluate->add_option("--source", opt.source, "Source speaker id");
  evaluate->add_option("--target", opt.target, "Target speaker id")->required();
  evaluate->add_option("--out", opt.report_out, "Output report.json path")->required();
  evaluate->add_option("--method", opt.method, "Condition label");
  evaluate->add_option("--omega", opt.omega, "Condition omega label");
  evaluate->add_option("--utts", opt.eval_utts, "Condition training-size label");
  evaluate->add_flag("--force", opt.force, "Skip the corpus-hash consistency check");

  auto* report = app.add_subcommand("report", "Merge evaluation reports into one table");
  report->add_option("--in", opt.report_inputs, "Input report.json files")
      ->required()
      ->expected(-1);
  report->add_option("--out", opt.report_out, "Combined report.json path")->required();
  report->add_option("--table", opt.table_out, "Optional plain-text table path");
  report->add_flag("--force", opt.force, "Merge reports from different corpora");

  auto* experiment = app.add_subcommand("experiment", "Run a full experiment from a config file");
  experiment->add_option("--config", opt.experiment_config_path, "Experiment config JSON")
      ->required();
  experiment->add_option("--out-dir", opt.out_dir, "Override the config's output directory");
  experiment->add_option("--parallel", opt.parallel, "Run up to N conditions concurrently");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (corpus->parsed()) return cmd_corpus(opt);
    if (model->parsed() && inspect->parsed()) return cmd_model_inspect(opt);
    if (train_asv_cmd->parsed()) return cmd_train_classifier(opt, ModelRole::asv);
    if (train_asr_cmd->parsed()) return cmd_train_classifier(opt, ModelRole::asr);
    if (paravc->parsed()) return cmd_train_paravc(opt);
    if (attack->parsed()) return cmd_attack(opt);
    if (evaluate->parsed()) return cmd_evaluate(opt);
    if (report->parsed()) return cmd_report(opt);
    if (experiment->parsed()) return cmd_experiment(opt);
  } catch (const StageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return static_cast<int>(e.failure_class());
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
