#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "v2s/corpus.hpp"
#include "v2s/pipeline.hpp"

namespace v2s {

// How well converted utterances fool the speaker classifier. Per utterance
// the frame posteriors/top-1 hits are averaged; the returned values average
// over utterances.
struct DeceptionMetrics {
  double posterior_mean = 0.0;
  double top1_rate = 0.0;
};
DeceptionMetrics deception_metrics(const Network& vc, const Network& asv,
                                   std::span<const Utterance* const> utterances,
                                   const SpeakerCode& target, const FeatureNormalizer& norm);

// Mean over utterances of the posteriorgram MSE between R(x) and R(G(x)).
double retention_mse(const Network& vc, const Network& asr,
                     std::span<const Utterance* const> utterances,
                     const FeatureNormalizer& norm);

// Mel-cepstral distortion in dB over the static coefficients (the first
// D/2 columns): mean over frames of (10/ln 10) * sqrt(2 * sum_d diff^2).
double mcd(const FeatureSequence& a, const FeatureSequence& b);

struct ConditionLabel {
  std::string method;           // "ParaVC", "V2S", ...
  std::optional<double> omega;  // set for attack conditions
  int train_utterances = 0;
  int source = 0;
  int target = 0;

  std::string key() const;  // stable sort/identity key
};

struct UtteranceEval {
  double target_posterior_mean = 0.0;
  double target_top1_rate = 0.0;
  double retention_mse = 0.0;
  std::optional<double> mcd_vs_target;  // only with a parallel reference
  double mcd_vs_source = 0.0;
};

struct ConditionEval {
  ConditionLabel label;
  UtteranceEval aggregate;  // mean of the per-utterance rows
  std::vector<UtteranceEval> per_utterance;
};

struct EvalReport {
  int schema_version = 1;
  std::string config_hash;
  std::string corpus_hash;
  std::vector<ConditionEval> conditions;
};

// Full evaluation of one converted condition on held-out source utterances.
// `references` (parallel target utterances aligned with `sources`) enable
// mcd_vs_target; pass an empty span when none exist.
ConditionEval evaluate_condition(const ConditionLabel& label, const Network& vc,
                                 const Network& asv, const Network& asr,
                                 std::span<const Utterance* const> sources,
                                 const SpeakerCode& target, const FeatureNormalizer& norm,
                                 std::span<const Utterance* const> references = {});

// Deterministic serialization: sorted condition keys, fixed field order.
std::string report_to_json(const EvalReport& report);
std::string report_to_table(const EvalReport& report);

// Writes report.json and, when table_path is non-empty, a plain-text table.
void emit_report(const EvalReport& report, const std::string& json_path,
                 const std::string& table_path = "");

EvalReport report_from_json(const std::string& text);

}  // namespace v2s
