#include "v2s/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <json.hpp>
#include <sstream>

namespace v2s {

namespace {

void require_frozen_classifiers(const Network& asv_or_asr, const char* what) {
  if (asv_or_asr.trainable())
    throw ContractError(std::string(what) + " must be frozen for evaluation");
}

struct FrameScore {
  double posterior_mean;
  double top1_rate;
};

FrameScore score_posterior(const Matrix& posterior, int target) {
  FrameScore s{posterior.col(target).mean(), 0.0};
  int hits = 0;
  for (Eigen::Index t = 0; t < posterior.rows(); ++t) {
    Eigen::Index best = 0;
    posterior.row(t).maxCoeff(&best);
    if (static_cast<int>(best) == target) ++hits;
  }
  s.top1_rate = static_cast<double>(hits) / static_cast<double>(posterior.rows());
  return s;
}

}  // namespace

DeceptionMetrics deception_metrics(const Network& vc, const Network& asv,
                                   std::span<const Utterance* const> utterances,
                                   const SpeakerCode& target, const FeatureNormalizer& norm) {
  require_frozen_classifiers(asv, "asv");
  if (utterances.empty()) throw ValidationError("no utterances to evaluate");
  if (target.count() != asv.output_dim())
    throw ShapeError("speaker code size does not match asv output dim");

  DeceptionMetrics out;
  for (const Utterance* u : utterances) {
    const Matrix converted = network_forward(vc, norm.apply(u->features.frames));
    const FrameScore s = score_posterior(network_forward(asv, converted), target.index());
    out.posterior_mean += s.posterior_mean;
    out.top1_rate += s.top1_rate;
  }
  out.posterior_mean /= static_cast<double>(utterances.size());
  out.top1_rate /= static_cast<double>(utterances.size());
  return out;
}

double retention_mse(const Network& vc, const Network& asr,
                     std::span<const Utterance* const> utterances,
                     const FeatureNormalizer& norm) {
  require_frozen_classifiers(asr, "asr");
  if (utterances.empty()) throw ValidationError("no utterances to evaluate");

  double sum = 0.0;
  for (const Utterance* u : utterances) {
    const Matrix x = norm.apply(u->features.frames);
    const Matrix converted = network_forward(vc, x);
    sum += mse_loss(network_forward(asr, converted), network_forward(asr, x)).value;
  }
  return sum / static_cast<double>(utterances.size());
}

double mcd(const FeatureSequence& a, const FeatureSequence& b) {
  if (a.frames.rows() != b.frames.rows() || a.frames.cols() != b.frames.cols())
    throw ShapeError("mcd requires equal shapes");
  if (a.dim() % 2 != 0) throw ShapeError("mcd requires statics + deltas (even dim)");
  const Eigen::Index statics = a.frames.cols() / 2;
  const double scale = 10.0 / std::log(10.0);
  double sum = 0.0;
  for (Eigen::Index t = 0; t < a.frames.rows(); ++t) {
    const double sq =
        (a.frames.row(t).head(statics) - b.frames.row(t).head(statics)).squaredNorm();
    sum += scale * std::sqrt(2.0 * sq);
  }
  return sum / static_cast<double>(a.frames.rows());
}

std::string ConditionLabel::key() const {
  char buf[96];
  if (omega.has_value())
    std::snprintf(buf, sizeof buf, "%s-w%g-%03dutt-s%d-t%d", method.c_str(), *omega,
                  train_utterances, source, target);
  else
    std::snprintf(buf, sizeof buf, "%s-%03dutt-s%d-t%d", method.c_str(), train_utterances,
                  source, target);
  return buf;
}

ConditionEval evaluate_condition(const ConditionLabel& label, const Network& vc,
                                 const Network& asv, const Network& asr,
                                 std::span<const Utterance* const> sources,
                                 const SpeakerCode& target, const FeatureNormalizer& norm,
                                 std::span<const Utterance* const> references) {
  require_frozen_classifiers(asv, "asv");
  require_frozen_classifiers(asr, "asr");
  if (sources.empty()) throw ValidationError("no utterances to evaluate");
  if (!references.empty() && references.size() != sources.size())
    throw ShapeError("reference count does not match source count");

  ConditionEval cond;
  cond.label = label;
  cond.per_utterance.reserve(sources.size());

  for (std::size_t i = 0; i < sources.size(); ++i) {
    const Utterance* u = sources[i];
    const Matrix x = norm.apply(u->features.frames);
    const Matrix converted = network_forward(vc, x);

    UtteranceEval row;
    const FrameScore s = score_posterior(network_forward(asv, converted), target.index());
    row.target_posterior_mean = s.posterior_mean;
    row.target_top1_rate = s.top1_rate;
    row.retention_mse = mse_loss(network_forward(asr, converted), network_forward(asr, x)).value;

    FeatureSequence converted_raw{norm.invert(converted), u->features.frame_shift_ms};
    row.mcd_vs_source = mcd(converted_raw, u->features);
    if (!references.empty()) {
      const Utterance* ref = references[i];
      if (ref->features.frames.rows() != converted_raw.frames.rows())
        throw ShapeError("reference utterance " + std::to_string(i) + " is not frame-aligned");
      row.mcd_vs_target = mcd(converted_raw, ref->features);
    }
    cond.per_utterance.push_back(row);
  }

  const double n = static_cast<double>(cond.per_utterance.size());
  double mcd_target_sum = 0.0;
  for (const auto& row : cond.per_utterance) {
    cond.aggregate.target_posterior_mean += row.target_posterior_mean / n;
    cond.aggregate.target_top1_rate += row.target_top1_rate / n;
    cond.aggregate.retention_mse += row.retention_mse / n;
    cond.aggregate.mcd_vs_source += row.mcd_vs_source / n;
    if (row.mcd_vs_target.has_value()) mcd_target_sum += *row.mcd_vs_target / n;
  }
  if (!references.empty()) cond.aggregate.mcd_vs_target = mcd_target_sum;
  return cond;
}

namespace {

nlohmann::json metrics_to_json(const UtteranceEval& m) {
  nlohmann::json j{{"target_posterior_mean", m.target_posterior_mean},
                   {"target_top1_rate", m.target_top1_rate},
                   {"retention_mse", m.retention_mse},
                   {"mcd_vs_source", m.mcd_vs_source}};
  j["mcd_vs_target"] = m.mcd_vs_target.has_value() ? nlohmann::json(*m.mcd_vs_target)
                                                   : nlohmann::json(nullptr);
  return j;
}

UtteranceEval metrics_from_json(const nlohmann::json& j) {
  UtteranceEval m;
  m.target_posterior_mean = j.at("target_posterior_mean").get<double>();
  m.target_top1_rate = j.at("target_top1_rate").get<double>();
  m.retention_mse = j.at("retention_mse").get<double>();
  m.mcd_vs_source = j.at("mcd_vs_source").get<double>();
  if (!j.at("mcd_vs_target").is_null()) m.mcd_vs_target = j.at("mcd_vs_target").get<double>();
  return m;
}

void validate_metrics(const UtteranceEval& m, const std::string& where) {
  const auto bad_rate = [](double r) { return !(r >= 0.0 && r <= 1.0); };
  if (bad_rate(m.target_posterior_mean) || bad_rate(m.target_top1_rate))
    throw ValidationError(where + ": rates must lie in [0, 1]");
  if (m.retention_mse < 0.0 || m.mcd_vs_source < 0.0 ||
      (m.mcd_vs_target.has_value() && *m.mcd_vs_target < 0.0))
    throw ValidationError(where + ": distances must be non-negative");
}

}  // namespace

std::string report_to_json(const EvalReport& report) {
  if (report.conditions.empty()) throw ValidationError("report has no conditions");

  std::vector<const ConditionEval*> ordered;
  ordered.reserve(report.conditions.size());
  for (const auto& c : report.conditions) ordered.push_back(&c);
  std::sort(ordered.begin(), ordered.end(), [](const ConditionEval* a, const ConditionEval* b) {
    return a->label.key() < b->label.key();
  });

  nlohmann::json j;
  j["schema_version"] = report.schema_version;
  j["config_hash"] = report.config_hash;
  j["corpus_hash"] = report.corpus_hash;
  j["conditions"] = nlohmann::json::array();
  for (const ConditionEval* c : ordered) {
    validate_metrics(c->aggregate, "condition " + c->label.key());
    nlohmann::json jc;
    jc["key"] = c->label.key();
    jc["method"] = c->label.method;
    jc["omega"] = c->label.omega.has_value() ? nlohmann::json(*c->label.omega)
                                             : nlohmann::json(nullptr);
    jc["train_utterances"] = c->label.train_utterances;
    jc["source"] = c->label.source;
    jc["target"] = c->label.target;
    jc["aggregate"] = metrics_to_json(c->aggregate);
    jc["per_utterance"] = nlohmann::json::array();
    for (const auto& row : c->per_utterance) {
      validate_metrics(row, "condition " + c->label.key());
      jc["per_utterance"].push_back(metrics_to_json(row));
    }
    j["conditions"].push_back(std::move(jc));
  }
  return j.dump(2) + "\n";
}

EvalReport report_from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("report is not valid JSON: ") + e.what());
  }
  EvalReport report;
  try {
    report.schema_version = j.at("schema_version").get<int>();
    report.config_hash = j.at("config_hash").get<std::string>();
    report.corpus_hash = j.at("corpus_hash").get<std::string>();
    for (const auto& jc : j.at("conditions")) {
      ConditionEval c;
      c.label.method = jc.at("method").get<std::string>();
      if (!jc.at("omega").is_null()) c.label.omega = jc.at("omega").get<double>();
      c.label.train_utterances = jc.at("train_utterances").get<int>();
      c.label.source = jc.at("source").get<int>();
      c.label.target = jc.at("target").get<int>();
      c.aggregate = metrics_from_json(jc.at("aggregate"));
      for (const auto& row : jc.at("per_utterance")) c.per_utterance.push_back(metrics_from_json(row));
      report.conditions.push_back(std::move(c));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("report JSON is malformed: ") + e.what());
  }
  return report;
}

std::string report_to_table(const EvalReport& report) {
  if (report.conditions.empty()) throw ValidationError("report has no conditions");

  std::vector<const ConditionEval*> ordered;
  for (const auto& c : report.conditions) ordered.push_back(&c);
  std::sort(ordered.begin(), ordered.end(), [](const ConditionEval* a, const ConditionEval* b) {
    return a->label.key() < b->label.key();
  });

  std::ostringstream os;
  char line[160];
  std::snprintf(line, sizeof line, "%-28s %10s %8s %12s %10s %10s\n", "condition", "posterior",
                "top1", "retention", "mcd_tgt", "mcd_src");
  os << line;
  for (const ConditionEval* c : ordered) {
    const auto& m = c->aggregate;
    char mcd_tgt[16];
    if (m.mcd_vs_target.has_value())
      std::snprintf(mcd_tgt, sizeof mcd_tgt, "%10.3f", *m.mcd_vs_target);
    else
      std::snprintf(mcd_tgt, sizeof mcd_tgt, "%10s", "-");
    std::snprintf(line, sizeof line, "%-28s %10.4f %8.4f %12.6f %s %10.3f\n",
                  c->label.key().c_str(), m.target_posterior_mean, m.target_top1_rate,
                  m.retention_mse, mcd_tgt, m.mcd_vs_source);
    os << line;
  }
  return os.str();
}

void emit_report(const EvalReport& report, const std::string& json_path,
                 const std::string& table_path) {
  const std::string json = report_to_json(report);
  {
    std::ofstream out(json_path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open for writing: " + json_path);
    out << json;
    if (!out) throw IoError("failed to write: " + json_path);
  }
  if (!table_path.empty()) {
    std::ofstream out(table_path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open for writing: " + table_path);
    out << report_to_table(report);
    if (!out) throw IoError("failed to write: " + table_path);
  }
}

}  // namespace v2s
