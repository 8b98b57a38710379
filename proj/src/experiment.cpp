#include "v2s/experiment.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <future>
#include <json.hpp>

#include "v2s/detail/binio.hpp"
#include "v2s/rng.hpp"

namespace v2s {

namespace fs = std::filesystem;

Condition Condition::parse(const std::string& text) {
  Condition c;
  c.raw = text;
  if (text == "v2s") {
    c.kind = Kind::v2s;
    return c;
  }
  if (text.rfind("v2s-omega-", 0) == 0) {
    c.kind = Kind::v2s;
    const std::string num = text.substr(10);
    try {
      std::size_t used = 0;
      c.omega = std::stod(num, &used);
      if (used != num.size()) throw std::invalid_argument(num);
    } catch (const std::exception&) {
      throw ConfigError("cannot parse omega in condition '" + text + "'");
    }
    if (*c.omega < 0.0) throw ConfigError("omega must be non-negative in '" + text + "'");
    return c;
  }
  if (text == "paravc-all") {
    c.kind = Kind::paravc;
    c.utterances = 0;
    return c;
  }
  if (text.rfind("paravc-", 0) == 0) {
    c.kind = Kind::paravc;
    const std::string num = text.substr(7);
    try {
      std::size_t used = 0;
      c.utterances = std::stoi(num, &used);
      if (used != num.size()) throw std::invalid_argument(num);
    } catch (const std::exception&) {
      throw ConfigError("cannot parse utterance count in condition '" + text + "'");
    }
    if (c.utterances < 1) throw ConfigError("utterance count must be >= 1 in '" + text + "'");
    return c;
  }
  throw ConfigError("unknown condition '" + text +
                    "' (expected paravc-<n>, paravc-all, v2s, or v2s-omega-<w>)");
}

void ExperimentConfig::validate() const {
  if (corpus_spec.has_value() == !corpus_path.empty())
    throw ConfigError("config must provide exactly one of corpus.spec and corpus.path");
  if (arch_preset != "desk" && arch_preset != "full")
    throw ConfigError("arch preset must be 'desk' or 'full'");
  if (source == target) throw ConfigError("source and target speakers must differ");
  if (source < 0 || target < 0) throw ConfigError("speaker ids must be non-negative");
  if (conditions.empty()) throw ConfigError("config lists no conditions");
  for (std::size_t i = 0; i < conditions.size(); ++i)
    for (std::size_t j = i + 1; j < conditions.size(); ++j)
      if (conditions[i].raw == conditions[j].raw)
        throw ConfigError("condition '" + conditions[i].raw + "' is listed twice");
  if (output_dir.empty()) throw ConfigError("output_dir must be set");
  asv_training.validate();
  asr_training.validate();
  vc_training.validate();
}

namespace {

TrainingConfig training_from_json_obj(const nlohmann::json& j, const TrainingConfig& base,
                                      bool& seed_set) {
  TrainingConfig config = base;
  for (const auto& [key, value] : j.items()) {
    if (key == "learning_rate") config.learning_rate = value.get<double>();
    else if (key == "epochs") config.epochs = value.get<int>();
    else if (key == "omega") config.omega = value.get<double>();
    else if (key == "batch_size") config.batch_size = value.get<int>();
    else if (key == "shuffle") config.shuffle = value.get<bool>();
    else if (key == "seed") {
      config.seed = value.get<std::uint64_t>();
      seed_set = true;
    } else {
      throw ConfigError("unknown training field: " + key);
    }
  }
  return config;
}

nlohmann::json training_to_json_obj(const TrainingConfig& c, bool seed_set) {
  nlohmann::json j{{"learning_rate", c.learning_rate}, {"epochs", c.epochs},
                   {"omega", c.omega},                 {"batch_size", c.batch_size},
                   {"shuffle", c.shuffle}};
  if (seed_set) j["seed"] = c.seed;
  return j;
}

}  // namespace

ExperimentConfig experiment_config_from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("experiment config is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("experiment config must be a JSON object");

  ExperimentConfig config;
  try {
    for (const auto& [key, value] : j.items()) {
      if (key == "seed") config.seed = value.get<std::uint64_t>();
      else if (key == "output_dir") config.output_dir = value.get<std::string>();
      else if (key == "source") config.source = value.get<int>();
      else if (key == "target") config.target = value.get<int>();
      else if (key == "arch") config.arch_preset = value.get<std::string>();
      else if (key == "corpus") {
        if (!value.is_object()) throw ConfigError("'corpus' must be an object");
        for (const auto& [ck, cv] : value.items()) {
          if (ck == "path") config.corpus_path = cv.get<std::string>();
          else if (ck == "spec") config.corpus_spec = corpus_spec_from_json(cv.dump());
          else throw ConfigError("unknown corpus field: " + ck);
        }
      } else if (key == "training") {
        if (!value.is_object()) throw ConfigError("'training' must be an object");
        for (const auto& [tk, tv] : value.items()) {
          if (tk == "asv")
            config.asv_training =
                training_from_json_obj(tv, config.asv_training, config.asv_seed_set);
          else if (tk == "asr")
            config.asr_training =
                training_from_json_obj(tv, config.asr_training, config.asr_seed_set);
          else if (tk == "vc")
            config.vc_training = training_from_json_obj(tv, config.vc_training, config.vc_seed_set);
          else throw ConfigError("unknown training stage: " + tk);
        }
      } else if (key == "conditions") {
        for (const auto& cv : value) config.conditions.push_back(Condition::parse(cv.get<std::string>()));
      } else {
        throw ConfigError("unknown experiment config field: " + key);
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("experiment config field has the wrong type: ") + e.what());
  }
  config.validate();
  return config;
}

std::string experiment_config_to_json(const ExperimentConfig& config) {
  nlohmann::json j;
  j["seed"] = config.seed;
  j["output_dir"] = config.output_dir;
  j["source"] = config.source;
  j["target"] = config.target;
  j["arch"] = config.arch_preset;
  if (config.corpus_spec.has_value())
    j["corpus"] = {{"spec", nlohmann::json::parse(corpus_spec_to_json(*config.corpus_spec))}};
  else
    j["corpus"] = {{"path", config.corpus_path}};
  j["training"] = {{"asv", training_to_json_obj(config.asv_training, config.asv_seed_set)},
                   {"asr", training_to_json_obj(config.asr_training, config.asr_seed_set)},
                   {"vc", training_to_json_obj(config.vc_training, config.vc_seed_set)}};
  j["conditions"] = nlohmann::json::array();
  for (const auto& c : config.conditions) j["conditions"].push_back(c.raw);
  return j.dump(2) + "\n";
}

std::uint64_t hash_bytes(const std::vector<std::uint8_t>& bytes) {
  return fnv1a(std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
}

std::string hash_hex(std::uint64_t hash) {
  char buf[20];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(hash));
  return buf;
}

std::string canonical_config_json(const ExperimentConfig& config) {
  nlohmann::json j = nlohmann::json::parse(experiment_config_to_json(config));
  j.erase("output_dir");
  return j.dump(2) + "\n";
}

std::string config_hash_hex(const ExperimentConfig& config) {
  return hash_hex(fnv1a(canonical_config_json(config)));
}

std::string history_to_jsonl(const TrainingHistory& history) {
  std::string out;
  const auto line = [&out](int epoch, double loss, double metric) {
    nlohmann::json j{{"epoch", epoch}, {"loss", loss}, {"metric", metric}};
    out += j.dump();
    out += "\n";
  };
  line(0, history.initial_loss, history.initial_metric);
  for (std::size_t e = 0; e < history.epoch_loss.size(); ++e)
    line(static_cast<int>(e) + 1, history.epoch_loss[e], history.epoch_metric[e]);
  return out;
}

namespace {

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path);
  out << text;
  if (!out) throw IoError("failed to write: " + path);
}

struct ConditionOutput {
  ConditionEval eval;
  std::string model_file;
};

template <typename Fn>
auto run_stage(const std::string& stage, FailureClass fclass, Fn&& fn) {
  try {
    return fn();
  } catch (const StageError&) {
    throw;
  } catch (const ConfigError& e) {
    throw StageError(stage, FailureClass::config, e.what());
  } catch (const Error& e) {
    throw StageError(stage, fclass, e.what());
  }
}

}  // namespace

ExperimentResult run_experiment(const ExperimentConfig& config, int parallel) {
  config.validate();
  if (parallel < 1) throw ConfigError("parallel must be >= 1");

  const std::string config_hash = config_hash_hex(config);
  const std::uint64_t config_hash_u64 = fnv1a(canonical_config_json(config));
  const fs::path out_dir(config.output_dir);
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw StageError("setup", FailureClass::config,
                           "cannot create output dir " + out_dir.string() + ": " + ec.message());

  ExperimentResult result;

  // Corpus: generate (with a stage-derived seed) or load.
  Corpus corpus = run_stage("corpus", FailureClass::data, [&] {
    if (config.corpus_spec.has_value()) {
      CorpusSpec spec = *config.corpus_spec;
      spec.seed = mix_seed(config.seed, "corpus");
      return synth_corpus(spec);
    }
    return load_corpus_file(config.corpus_path);
  });
  const std::vector<std::uint8_t> corpus_bytes = save_corpus(corpus);
  const std::uint64_t corpus_hash = hash_bytes(corpus_bytes);
  result.corpus_file = (out_dir / "corpus.v2sc").string();
  run_stage("corpus", FailureClass::data, [&] {
    detail::write_file(result.corpus_file, corpus_bytes);
    return 0;
  });

  if (config.source >= corpus.spec.n_speakers || config.target >= corpus.spec.n_speakers)
    throw StageError("corpus", FailureClass::config,
                     "source/target ids exceed the corpus speaker count");

  const FeatureNormalizer norm = FeatureNormalizer::fit(corpus);
  const int feature_dim = corpus.feature_dim();
  const auto arch_for = [&](ModelRole role) {
    return config.arch_preset == "full"
               ? full_arch(role)
               : desk_arch(role, feature_dim, corpus.spec.n_speakers, corpus.spec.n_phonemes);
  };

  // Frozen classifiers.
  TrainingConfig asv_cfg = config.asv_training;
  if (!config.asv_seed_set) asv_cfg.seed = mix_seed(config.seed, "train-asv");
  const TrainResult asv = run_stage("train-asv", FailureClass::training, [&] {
    return train_asv(corpus, arch_for(ModelRole::asv), asv_cfg);
  });
  result.asv_file = (out_dir / "asv.v2sm").string();
  save_model_file(asv.net, ModelRole::asv,
                  {asv_cfg.epochs, asv_cfg.seed, asv.history.epoch_loss.back(), corpus_hash,
                   config_hash_u64},
                  result.asv_file);
  write_text((out_dir / "asv.history.jsonl").string(), history_to_jsonl(asv.history));

  TrainingConfig asr_cfg = config.asr_training;
  if (!config.asr_seed_set) asr_cfg.seed = mix_seed(config.seed, "train-asr");
  const TrainResult asr = run_stage("train-asr", FailureClass::training, [&] {
    return train_asr(corpus, arch_for(ModelRole::asr), asr_cfg);
  });
  result.asr_file = (out_dir / "asr.v2sm").string();
  save_model_file(asr.net, ModelRole::asr,
                  {asr_cfg.epochs, asr_cfg.seed, asr.history.epoch_loss.back(), corpus_hash,
                   config_hash_u64},
                  result.asr_file);
  write_text((out_dir / "asr.history.jsonl").string(), history_to_jsonl(asr.history));

  // Per-condition VC training and evaluation.
  const CorpusSplit source_split = split_speaker(corpus, config.source);
  const PairSplit pair_split = split_parallel_pairs(corpus, config.source, config.target);
  const SpeakerCode target_code = one_hot(config.target, corpus.spec.n_speakers);

  std::vector<const Utterance*> eval_sources;
  std::vector<const Utterance*> eval_references;
  for (const auto& [x, y] : pair_split.eval) {
    eval_sources.push_back(x);
    eval_references.push_back(y);
  }

  const auto run_condition = [&](const Condition& cond) -> ConditionOutput {
    const std::string stage = cond.raw;
    return run_stage(stage, FailureClass::training, [&]() -> ConditionOutput {
      TrainingConfig c = config.vc_training;
      ConditionLabel label;
      label.source = config.source;
      label.target = config.target;
      TrainResult trained = [&] {
        if (cond.kind == Condition::Kind::paravc) {
          std::span<const UtterancePair> pairs(pair_split.train);
          if (cond.utterances > 0)
            pairs = pairs.subspan(0, std::min<std::size_t>(pairs.size(),
                                                           static_cast<std::size_t>(cond.utterances)));
          if (!config.vc_seed_set) c.seed = mix_seed(config.seed, stage);
          label.method = "ParaVC";
          label.train_utterances = static_cast<int>(pairs.size());
          return train_parallel_vc(pairs, arch_for(ModelRole::vc), c, norm);
        }
        if (cond.omega.has_value()) c.omega = *cond.omega;
        if (!config.vc_seed_set) c.seed = mix_seed(config.seed, stage);
        label.method = "V2S";
        label.omega = c.omega;
        label.train_utterances = static_cast<int>(source_split.train.size());
        return train_v2s(source_split.train, target_code, asv.net, asr.net,
                         arch_for(ModelRole::vc), c, norm);
      }();

      ConditionOutput out;
      out.eval = run_stage(stage, FailureClass::evaluation, [&] {
        return evaluate_condition(label, trained.net, asv.net, asr.net, eval_sources,
                                  target_code, norm, eval_references);
      });

      const std::string file = (out_dir / (label.key() + ".v2sm")).string();
      save_model_file(trained.net, ModelRole::vc,
                      {c.epochs, c.seed, trained.history.epoch_loss.back(), corpus_hash,
                       config_hash_u64},
                      file);
      write_text((out_dir / (label.key() + ".history.jsonl")).string(),
                 history_to_jsonl(trained.history));
      out.model_file = file;
      return out;
    });
  };

  std::vector<ConditionOutput> outputs(config.conditions.size());
  if (parallel <= 1 || config.conditions.size() <= 1) {
    for (std::size_t i = 0; i < config.conditions.size(); ++i)
      outputs[i] = run_condition(config.conditions[i]);
  } else {
    std::vector<std::future<ConditionOutput>> futures(config.conditions.size());
    std::size_t next = 0;
    std::size_t in_flight = 0;
    std::size_t joined = 0;
    std::exception_ptr failure;
    while (joined < config.conditions.size()) {
      while (next < config.conditions.size() && in_flight < static_cast<std::size_t>(parallel)) {
        const Condition& cond = config.conditions[next];
        futures[next] = std::async(std::launch::async, [&run_condition, cond] {
          return run_condition(cond);
        });
        ++next;
        ++in_flight;
      }
      try {
        outputs[joined] = futures[joined].get();
      } catch (...) {
        if (!failure) failure = std::current_exception();
      }
      ++joined;
      --in_flight;
    }
    if (failure) std::rethrow_exception(failure);
  }

  EvalReport report;
  report.config_hash = config_hash;
  report.corpus_hash = hash_hex(corpus_hash);
  for (auto& out : outputs) {
    report.conditions.push_back(std::move(out.eval));
    result.condition_files.push_back(out.model_file);
  }

  result.report_json = (out_dir / "report.json").string();
  result.report_table = (out_dir / "report.txt").string();
  run_stage("report", FailureClass::evaluation, [&] {
    emit_report(report, result.report_json, result.report_table);
    return 0;
  });
  return result;
}

}  // namespace v2s
