#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

namespace fs = std::filesystem;

namespace {

struct CommandResult {
  int exit_code;
  std::string output;  // stdout + stderr
};

CommandResult run_cli(const std::string& args) {
  const std::string out_path =
      (fs::temp_directory_path() / "v2s_cli_capture.txt").string();
  const std::string command =
      std::string(V2S_LAB_BINARY) + " " + args + " > " + out_path + " 2>&1";
  const int status = std::system(command.c_str());

  CommandResult result;
  result.exit_code = WEXITSTATUS(status);
  std::ifstream in(out_path);
  std::stringstream buffer;
  buffer << in.rdbuf();
  result.output = buffer.str();
  return result;
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << text;
}

struct Workspace {
  fs::path dir;

  Workspace() {
    dir = fs::temp_directory_path() / "v2s_cli_test";
    fs::remove_all(dir);
    fs::create_directories(dir);

    write_text(dir / "corpus_spec.json", R"({
      "n_speakers": 3,
      "n_phonemes": 5,
      "static_dim": 5,
      "utterances_per_speaker": 8,
      "min_frames": 20,
      "max_frames": 30,
      "seed": 11
    })");
    write_text(dir / "train.json", R"({"epochs": 4, "seed": 3})");
  }

  std::string path(const std::string& name) const { return (dir / name).string(); }
};

const Workspace& workspace() {
  static Workspace w;
  return w;
}

}  // namespace

TEST_CASE("--help enumerates every subcommand") {
  const CommandResult r = run_cli("--help");
  CHECK(r.exit_code == 0);
  for (const char* name : {"corpus", "train-asv", "train-asr", "train-paravc", "attack",
                           "evaluate", "report", "experiment", "model"})
    CHECK(r.output.find(name) != std::string::npos);
}

TEST_CASE("subcommand help lists the documented flags") {
  CHECK(run_cli("attack --help").output.find("--omega") != std::string::npos);
  CHECK(run_cli("attack --help").output.find("--target") != std::string::npos);
  CHECK(run_cli("train-paravc --help").output.find("--utts") != std::string::npos);
  CHECK(run_cli("evaluate --help").output.find("--force") != std::string::npos);
  CHECK(run_cli("experiment --help").output.find("--parallel") != std::string::npos);
}

TEST_CASE("unknown flags are a config failure") {
  const CommandResult r = run_cli("corpus --nope");
  CHECK(r.exit_code == 1);
}

TEST_CASE("corpus then trainers then evaluate runs end to end") {
  const Workspace& w = workspace();

  const CommandResult gen =
      run_cli("corpus --spec " + w.path("corpus_spec.json") + " --out " + w.path("c.v2sc"));
  CHECK(gen.exit_code == 0);
  CHECK(fs::exists(w.dir / "c.v2sc"));

  const std::string shared =
      " --config " + w.path("train.json") + " --corpus " + w.path("c.v2sc");
  const CommandResult asv =
      run_cli("train-asv" + shared + " --out " + w.path("asv.v2sm"));
  CHECK(asv.exit_code == 0);
  CHECK(asv.output.find("\"epoch\":0") != std::string::npos);

  const CommandResult asr =
      run_cli("train-asr" + shared + " --out " + w.path("asr.v2sm"));
  CHECK(asr.exit_code == 0);

  const CommandResult paravc = run_cli("train-paravc" + shared + " --utts 5 --target 1 --out " +
                                       w.path("paravc.v2sm"));
  CHECK(paravc.exit_code == 0);

  const CommandResult attack =
      run_cli("attack" + shared + " --target 2 --omega 0.01 --asv " + w.path("asv.v2sm") +
              " --asr " + w.path("asr.v2sm") + " --out " + w.path("v2s.v2sm"));
  CHECK(attack.exit_code == 0);

  const CommandResult inspect = run_cli("model inspect " + w.path("v2s.v2sm"));
  CHECK(inspect.exit_code == 0);
  CHECK(inspect.output.find("role: vc") != std::string::npos);

  const CommandResult eval =
      run_cli("evaluate --vc " + w.path("v2s.v2sm") + " --asv " + w.path("asv.v2sm") +
              " --asr " + w.path("asr.v2sm") + " --corpus " + w.path("c.v2sc") +
              " --source 0 --target 2 --method V2S --omega 0.01 --out " +
              w.path("eval.json"));
  CHECK(eval.exit_code == 0);
  CHECK(fs::exists(w.dir / "eval.json"));

  const CommandResult merged =
      run_cli("report --in " + w.path("eval.json") + " " + w.path("eval.json") + " --out " +
              w.path("merged.json") + " --table " + w.path("merged.txt"));
  CHECK(merged.exit_code == 0);
  CHECK(fs::exists(w.dir / "merged.txt"));
}

TEST_CASE("out-of-range speaker ids are a config failure") {
  const Workspace& w = workspace();
  const CommandResult r =
      run_cli("attack --corpus " + w.path("c.v2sc") + " --target 99 --asv " + w.path("asv.v2sm") +
              " --asr " + w.path("asr.v2sm") + " --out " + w.path("nope.v2sm"));
  CHECK(r.exit_code == 1);
  CHECK(r.output.find("speaker ids") != std::string::npos);
}

TEST_CASE("missing corpus path exits with the data code and names the path") {
  const Workspace& w = workspace();
  const CommandResult r = run_cli("train-asv --corpus " + w.path("missing.v2sc") + " --out " +
                                  w.path("x.v2sm"));
  CHECK(r.exit_code == 2);
  CHECK(r.output.find("missing.v2sc") != std::string::npos);
}

TEST_CASE("evaluate refuses mixed-hash inputs unless forced") {
  const Workspace& w = workspace();

  // A second corpus with a different seed; models trained on the first.
  write_text(w.dir / "spec2.json", R"({
    "n_speakers": 3,
    "n_phonemes": 5,
    "static_dim": 5,
    "utterances_per_speaker": 8,
    "min_frames": 20,
    "max_frames": 30,
    "seed": 12
  })");
  const CommandResult gen =
      run_cli("corpus --spec " + w.path("spec2.json") + " --out " + w.path("c2.v2sc"));
  REQUIRE(gen.exit_code == 0);

  const std::string eval_args = "evaluate --vc " + w.path("v2s.v2sm") + " --asv " +
                                w.path("asv.v2sm") + " --asr " + w.path("asr.v2sm") +
                                " --corpus " + w.path("c2.v2sc") +
                                " --source 0 --target 2 --out " + w.path("eval2.json");
  const CommandResult refused = run_cli(eval_args);
  CHECK(refused.exit_code == 2);
  CHECK(refused.output.find("hash") != std::string::npos);

  const CommandResult forced = run_cli(eval_args + " --force");
  CHECK(forced.exit_code == 0);
}

TEST_CASE("experiment runs end to end and reruns byte-identically") {
  const Workspace& w = workspace();
  write_text(w.dir / "experiment.json", R"({
    "seed": 21,
    "output_dir": ")" + w.path("exp") + R"(",
    "corpus": {"spec": {
      "n_speakers": 3, "n_phonemes": 5, "static_dim": 5,
      "utterances_per_speaker": 8, "min_frames": 20, "max_frames": 30
    }},
    "arch": "desk",
    "training": {
      "asv": {"epochs": 4}, "asr": {"epochs": 4}, "vc": {"epochs": 4}
    },
    "source": 0,
    "target": 2,
    "conditions": ["paravc-5", "v2s", "v2s-omega-0"]
  })");

  const CommandResult first =
      run_cli("experiment --config " + w.path("experiment.json"));
  CHECK(first.exit_code == 0);
  REQUIRE(fs::exists(w.dir / "exp" / "report.json"));
  const std::string report1 = slurp(w.dir / "exp" / "report.json");
  CHECK(report1.find("\"V2S-w0.01") != std::string::npos);
  CHECK(report1.find("\"V2S-w0-") != std::string::npos);
  CHECK(report1.find("\"ParaVC-005utt") != std::string::npos);

  const CommandResult second =
      run_cli("experiment --config " + w.path("experiment.json"));
  CHECK(second.exit_code == 0);
  CHECK(slurp(w.dir / "exp" / "report.json") == report1);

  // The same config routed to another directory gives the same bytes.
  const CommandResult redirected = run_cli("experiment --config " + w.path("experiment.json") +
                                           " --out-dir " + w.path("exp2"));
  CHECK(redirected.exit_code == 0);
  CHECK(slurp(w.dir / "exp2" / "report.json") == report1);

  // Concurrent condition execution must not change the result.
  const CommandResult parallel = run_cli("experiment --config " + w.path("experiment.json") +
                                         " --out-dir " + w.path("exp_par") + " --parallel 3");
  CHECK(parallel.exit_code == 0);
  CHECK(slurp(w.dir / "exp_par" / "report.json") == report1);
}

TEST_CASE("V2S_LAB_SEED overrides the configured seed") {
  const Workspace& w = workspace();
  const std::string base =
      "corpus --spec " + w.path("corpus_spec.json") + " --out " + w.path("seeded.v2sc");
  REQUIRE(run_cli(base).exit_code == 0);
  const std::string original = slurp(w.dir / "seeded.v2sc");

  const std::string env_cmd = "V2S_LAB_SEED=999 " + std::string(V2S_LAB_BINARY) +
                              " corpus --spec " + w.path("corpus_spec.json") + " --out " +
                              w.path("seeded2.v2sc") + " > /dev/null 2>&1";
  REQUIRE(WEXITSTATUS(std::system(env_cmd.c_str())) == 0);
  CHECK(slurp(w.dir / "seeded2.v2sc") != original);
}

TEST_CASE("experiment with a missing corpus file reports the data stage") {
  const Workspace& w = workspace();
  write_text(w.dir / "bad_experiment.json", R"({
    "corpus": {"path": ")" + w.path("nowhere.v2sc") + R"("},
    "source": 0, "target": 1, "conditions": ["v2s"],
    "output_dir": ")" + w.path("bad_exp") + R"("
  })");
  const CommandResult r = run_cli("experiment --config " + w.path("bad_experiment.json"));
  CHECK(r.exit_code == 2);
  CHECK(r.output.find("nowhere.v2sc") != std::string::npos);
}

TEST_CASE("a failing condition exits with the training code and keeps earlier artifacts") {
  const Workspace& w = workspace();
  write_text(w.dir / "diverging.json", R"({
    "seed": 33,
    "output_dir": ")" + w.path("diverge") + R"(",
    "corpus": {"spec": {"n_speakers": 3, "n_phonemes": 5, "static_dim": 5,
                        "utterances_per_speaker": 8, "min_frames": 20, "max_frames": 30}},
    "training": {"asv": {"epochs": 2}, "asr": {"epochs": 2},
                 "vc": {"epochs": 3, "learning_rate": 1e200}},
    "source": 0, "target": 1,
    "conditions": ["paravc-5"]
  })");
  const CommandResult r = run_cli("experiment --config " + w.path("diverging.json"));
  CHECK(r.exit_code == 3);
  CHECK(r.output.find("paravc-5") != std::string::npos);
  // The classifier stages completed before the failure; their checkpoints stay.
  CHECK(fs::exists(w.dir / "diverge" / "asv.v2sm"));
  CHECK(fs::exists(w.dir / "diverge" / "asr.v2sm"));
  CHECK_FALSE(fs::exists(w.dir / "diverge" / "report.json"));
}

TEST_CASE("malformed experiment config exits with the config code") {
  const Workspace& w = workspace();
  write_text(w.dir / "broken.json", "{\"conditions\": [\"warp-drive\"]}");
  const CommandResult r = run_cli("experiment --config " + w.path("broken.json"));
  CHECK(r.exit_code == 1);
  CHECK(r.output.find("warp-drive") != std::string::npos);
}
