// Command-line front end for the annotation pipeline: synthetic corpora,
// box generation, pseudo-labeling, training, evaluation and experiment
// matrices. Exit codes: 0 success, 2 input error, 3 backend unavailable,
// 4 artifact missing, 5 contract violation.

#include <CLI11.hpp>

#include <iostream>
#include <string>

#include <json.hpp>

#include "saml/error.hpp"
#include "saml/harness.hpp"
#include "saml/metrics.hpp"

namespace {

struct CommonArgs {
  std::string config_path;
  uint64_t seed = 0;
  bool seed_set = false;
  int jobs = 1;
  bool resume = false;
};

saml::harness::PipelineConfig load(const CommonArgs& args) {
  auto cfg = saml::harness::load_config(args.config_path);
  if (args.seed_set) cfg.seed = args.seed;
  return cfg;
}

void add_common(CLI::App* cmd, CommonArgs& args, bool needs_config = true) {
  auto* opt = cmd->add_option("--config", args.config_path, "pipeline config JSON");
  if (needs_config) opt->required();
  cmd->add_option("--seed", args.seed, "override the global seed")
      ->each([&args](const std::string&) { args.seed_set = true; });
  cmd->add_option("--jobs", args.jobs, "worker threads for per-patch stages")
      ->check(CLI::PositiveNumber);
  cmd->add_flag("--resume", args.resume, "skip already-completed patches");
}

void print_error(const char* kind, const std::exception& e) {
  nlohmann::ordered_json j;
  j["error"] = kind;
  j["message"] = e.what();
  std::cerr << j.dump() << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"weak-to-strong annotation pipeline for multi-class cell segmentation"};
  app.require_subcommand(1);

  CommonArgs args;
  std::string report_in;
  std::string report_pooling = "micro";

  auto* synth = app.add_subcommand("synth", "generate a synthetic corpus");
  add_common(synth, args);
  auto* boxes = app.add_subcommand("boxes", "derive box prompts from instance masks");
  add_common(boxes, args);
  auto* pseudo = app.add_subcommand("pseudolabel", "segment box prompts into pseudo-labels");
  add_common(pseudo, args);
  auto* train = app.add_subcommand("train", "train the multi-class segmenter");
  add_common(train, args);
  auto* evaluate = app.add_subcommand("evaluate", "score a checkpoint on the test split");
  add_common(evaluate, args);
  auto* matrix = app.add_subcommand("matrix", "run the method x annotation experiment matrix");
  add_common(matrix, args);

  auto* report = app.add_subcommand("report", "render a report.csv as a table");
  report->add_option("--in", report_in, "report.csv path")->required();
  report->add_option("--pooling", report_pooling, "micro|macro");

  CLI11_PARSE(app, argc, argv);

  try {
    saml::harness::RunOptions opts{args.resume, args.jobs};
    if (synth->parsed()) {
      saml::harness::run_synth(load(args));
    } else if (boxes->parsed()) {
      saml::harness::run_boxes(load(args));
    } else if (pseudo->parsed()) {
      saml::harness::run_pseudolabel(load(args), opts);
    } else if (train->parsed()) {
      saml::harness::run_train(load(args));
    } else if (evaluate->parsed()) {
      auto rep = saml::harness::run_evaluate(load(args), opts);
      std::cout << saml::metrics::format_report_table(rep);
    } else if (matrix->parsed()) {
      auto rep = saml::harness::run_matrix(load(args), opts);
      std::cout << saml::metrics::format_report_table(rep);
    } else if (report->parsed()) {
      auto rep = saml::metrics::load_report(report_in);
      if (report_pooling != "micro" && report_pooling != "macro") {
        throw saml::InputError("--pooling must be micro or macro");
      }
      rep.pooling = report_pooling;
      std::cout << saml::metrics::format_report_table(rep);
    }
  } catch (const saml::InputError& e) {
    print_error("input", e);
    return 2;
  } catch (const saml::BackendUnavailableError& e) {
    print_error("backend_unavailable", e);
    return 3;
  } catch (const saml::ArtifactMissingError& e) {
    print_error("artifact_missing", e);
    return 4;
  } catch (const saml::ContractViolationError& e) {
    print_error("contract_violation", e);
    return 5;
  } catch (const std::exception& e) {
    print_error("internal", e);
    return 1;
  }
  return 0;
}
