#pragma once

#include <optional>
#include <string>
#include <vector>

#include "v2s/eval.hpp"

namespace v2s {

// Exit-code classes for CLI failures.
enum class FailureClass : int { config = 1, data = 2, training = 3, evaluation = 4 };

// A pipeline stage failed; carries the stage name and failure class so the
// CLI can report it and pick the right exit code. Artifacts from completed
// stages stay on disk.
class StageError : public Error {
 public:
  StageError(std::string stage, FailureClass fclass, const std::string& what)
      : Error("stage '" + stage + "' failed: " + what),
        stage_(std::move(stage)),
        fclass_(fclass) {}

  const std::string& stage() const { return stage_; }
  FailureClass failure_class() const { return fclass_; }

 private:
  std::string stage_;
  FailureClass fclass_;
};

// One requested experiment condition.
struct Condition {
  enum class Kind { paravc, v2s };
  Kind kind = Kind::v2s;
  int utterances = 0;            // ParaVC training-pair budget; 0 = all
  std::optional<double> omega;   // V2S override; unset = vc training config omega
  std::string raw;               // as written in the config

  static Condition parse(const std::string& text);
};

// Whole-experiment description: corpus source, architecture preset family,
// per-stage training configs, the speaker pair, and the condition list.
struct ExperimentConfig {
  std::uint64_t seed = 7;
  std::string output_dir = "out";
  std::optional<CorpusSpec> corpus_spec;  // generate...
  std::string corpus_path;                // ...or load; exactly one is set
  std::string arch_preset = "desk";       // "desk" | "full"
  TrainingConfig asv_training = classifier_training_defaults();
  TrainingConfig asr_training = classifier_training_defaults();
  TrainingConfig vc_training;
  bool asv_seed_set = false, asr_seed_set = false, vc_seed_set = false;
  int source = 0;
  int target = 1;
  std::vector<Condition> conditions;

  void validate() const;
};

ExperimentConfig experiment_config_from_json(const std::string& text);

std::string experiment_config_to_json(const ExperimentConfig& config);

// Canonical form for hashing: output_dir is excluded so the same experiment
// keeps its identity wherever the artifacts land.
std::string canonical_config_json(const ExperimentConfig& config);
std::string config_hash_hex(const ExperimentConfig& config);

std::uint64_t hash_bytes(const std::vector<std::uint8_t>& bytes);
std::string hash_hex(std::uint64_t hash);

struct ExperimentResult {
  std::string corpus_file;
  std::string asv_file;
  std::string asr_file;
  std::vector<std::string> condition_files;
  std::string report_json;
  std::string report_table;
};

// Runs corpus -> train-asv/train-asr -> per-condition VC training ->
// evaluation -> report. Reruns with the same config overwrite the same
// artifacts deterministically. `parallel` > 1 trains/evaluates independent
// conditions concurrently.
ExperimentResult run_experiment(const ExperimentConfig& config, int parallel = 1);

// Per-epoch history as JSON lines: {"epoch":0,...} is the pre-training
// measurement, then one line per epoch.
std::string history_to_jsonl(const TrainingHistory& history);

}  // namespace v2s
