// Copyright 2026 The medcorr Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

// Command-line driver: ingest -> index -> compile -> predict -> evaluate ->
// report, plus replay-verify for fixture caches.
//
// Exit codes: 0 success, 1 validation or usage error, 2 internal or
// gateway failure (including replay cache misses).

#include <CLI11.hpp>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "medcorr/config.hpp"
#include "medcorr/corpus.hpp"
#include "medcorr/error.hpp"
#include "medcorr/gateway.hpp"
#include "medcorr/live_client.hpp"
#include "medcorr/metrics.hpp"
#include "medcorr/optimize.hpp"
#include "medcorr/pipelines.hpp"
#include "medcorr/prediction.hpp"
#include "medcorr/retrieval.hpp"

namespace medcorr::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUser = 1;
inline constexpr int kExitInternal = 2;

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot read '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::string& path, std::string_view data) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ValidationError("cannot write '" + path + "'");
  out.write(data.data(), static_cast<std::streamsize>(data.size()));
  if (!out) throw Error("write to '" + path + "' failed");
}

inline RecordFormat format_for(const std::string& path, const std::string& explicit_format) {
  std::string f = explicit_format;
  if (f.empty()) {
    const auto ext = std::filesystem::path(path).extension().string();
    f = (ext == ".csv" || ext == ".tsv") ? "csv" : "jsonl";
  }
  if (f == "csv") return RecordFormat::kDelimited;
  if (f == "jsonl") return RecordFormat::kJsonLines;
  throw ValidationError("unknown dataset format '" + f + "' (expected csv or jsonl)");
}

inline std::vector<ClinicalRecord> load_records(const std::string& path, const std::string& format = "") {
  return parse_clinical_records(read_file(path), format_for(path, format));
}

inline Environment process_environment() {
  Environment env;
  for (const char* key : {"MEDCORR_API_KEY", "MEDCORR_BASE_URL"}) {
    if (const char* v = std::getenv(key)) env[key] = v;
  }
  return env;
}

inline std::unique_ptr<Gateway> make_gateway(const EngineConfig& c) {
  GatewayOptions opts;
  opts.concurrency = c.gateway.concurrency;
  opts.generation = {c.gateway.model, c.gateway.temperature, c.gateway.top_p, c.gateway.max_tokens};
  std::shared_ptr<ReplayCache> record_to;
  if (c.gateway.backend == "replay") {
    if (c.gateway.cache_path.empty()) throw ValidationError("replay backend needs gateway.cache_path");
    auto cache = std::make_shared<ReplayCache>(c.gateway.cache_path);
    return std::make_unique<Gateway>(std::make_unique<ReplayBackend>(cache), opts);
  }
  if (c.gateway.record && !c.gateway.cache_path.empty()) {
    record_to = std::make_shared<ReplayCache>(c.gateway.cache_path);
  }
  if (c.gateway.backend == "scripted") {
    if (c.gateway.script_path.empty()) throw ValidationError("scripted backend needs gateway.script_path");
    nlohmann::json rules;
    try {
      rules = nlohmann::json::parse(read_file(c.gateway.script_path));
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError("scripted rules '" + c.gateway.script_path + "': " + e.what());
    }
    return std::make_unique<Gateway>(ScriptedBackend::from_rules(rules), opts, record_to);
  }
  LiveClientOptions live;
  live.base_url = c.gateway.base_url;
  live.api_key = c.gateway.api_key;
  live.max_attempts = c.gateway.max_attempts;
  live.timeout = std::chrono::seconds(c.gateway.timeout_seconds);
  return std::make_unique<Gateway>(std::make_unique<LiveBackend>(live), opts, record_to);
}

inline std::shared_ptr<const TfidfIndex> load_index(const std::string& path) {
  if (path.empty()) throw ValidationError("the ms pipeline needs --index");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("index '" + path + "': " + e.what());
  }
  return std::make_shared<const TfidfIndex>(TfidfIndex::from_json(j));
}

inline nlohmann::ordered_json parse_json_file(const std::string& path) {
  try {
    return nlohmann::ordered_json::parse(read_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("'" + path + "' is not valid JSON: " + e.what());
  }
}

inline std::vector<std::size_t> parse_sizes(const std::string& s) {
  std::vector<std::size_t> out;
  std::stringstream ss(s);
  std::string part;
  while (std::getline(ss, part, ',')) {
    try {
      std::size_t used = 0;
      const long v = std::stol(part, &used);
      if (used != part.size() || v < 0) throw std::invalid_argument(part);
      out.push_back(static_cast<std::size_t>(v));
    } catch (const std::exception&) {
      throw ValidationError("--split expects three non-negative integers like 80,40,40");
    }
  }
  if (out.size() != 3) throw ValidationError("--split expects three non-negative integers like 80,40,40");
  return out;
}

/// Shared gateway overrides for commands that talk to an LM.
struct GatewayFlags {
  std::string backend;
  std::string cache;
  std::string script;

  void add_to(CLI::App* cmd) {
    cmd->add_option("--backend", backend, "Override gateway.backend (live, replay, scripted)");
    cmd->add_option("--cache", cache, "Override gateway.cache_path");
    cmd->add_option("--script", script, "Override gateway.script_path");
  }

  void apply(EngineConfig& c) const {
    if (!backend.empty()) c.gateway.backend = backend;
    if (!cache.empty()) c.gateway.cache_path = cache;
    if (!script.empty()) c.gateway.script_path = script;
    c.validate();
  }
};

inline int run_command(const std::vector<std::string>& argv, std::ostream& out, std::ostream& err,
                       const Environment& env) {
  CLI::App app{"medcorr: clinical-text error detection and correction engine", "medcorr"};
  app.require_subcommand(1);
  std::string config_path;
  app.add_option("--config", config_path, "Engine configuration file (JSON)");

  // ingest
  struct {
    std::string input, format, out, out_format, split, train_out, val_out, test_out;
    std::uint64_t seed = 0;
    bool stratified = false;
  } ingest;
  auto* c_ingest = app.add_subcommand("ingest", "Validate a clinical dataset, normalize it and optionally split it");
  c_ingest->add_option("--input", ingest.input, "Dataset file (csv or jsonl)")->required();
  c_ingest->add_option("--format", ingest.format, "Input format: csv or jsonl (default: by extension)");
  c_ingest->add_option("--out", ingest.out, "Write the normalized dataset here");
  c_ingest->add_option("--out-format", ingest.out_format, "Format of --out: csv or jsonl (default: by extension)");
  c_ingest->add_option("--split", ingest.split, "Split sizes train,val,test (e.g. 80,40,40)");
  c_ingest->add_option("--seed", ingest.seed, "Split seed");
  c_ingest->add_flag("--stratified", ingest.stratified, "Keep the error share equal across splits");
  c_ingest->add_option("--train-out", ingest.train_out, "Training split output");
  c_ingest->add_option("--val-out", ingest.val_out, "Validation split output");
  c_ingest->add_option("--test-out", ingest.test_out, "Test split output");

  // index build
  struct {
    std::string corpus, out;
  } index;
  auto* c_index = app.add_subcommand("index", "Retrieval index commands");
  c_index->require_subcommand(1);
  auto* c_index_build = c_index->add_subcommand("build", "Build a TF-IDF index over an MCQ corpus");
  c_index_build->add_option("--corpus", index.corpus, "MCQ corpus (json-lines)")->required();
  c_index_build->add_option("--out", index.out, "Index file to write")->required();

  // compile
  struct {
    std::string pipeline, train, val, index, optimizer, out, report_out, format;
    std::optional<std::uint64_t> seed;
    GatewayFlags gw;
  } compile;
  auto* c_compile = app.add_subcommand("compile", "Compile a pipeline's prompts and demos against its metrics");
  c_compile->add_option("--pipeline", compile.pipeline, "ms or uw (default: pipeline.selector)");
  c_compile->add_option("--train", compile.train, "Training records")->required();
  c_compile->add_option("--val", compile.val, "Validation records")->required();
  c_compile->add_option("--format", compile.format, "Dataset format: csv or jsonl (default: by extension)");
  c_compile->add_option("--index", compile.index, "Retrieval index (ms pipeline)");
  c_compile->add_option("--optimizer", compile.optimizer, "random_search or mipro");
  c_compile->add_option("--seed", compile.seed, "Override optimize.seed");
  c_compile->add_option("--out", compile.out, "Compiled pipeline file")->required();
  c_compile->add_option("--report-out", compile.report_out, "Compile report file (JSON)");
  compile.gw.add_to(c_compile);

  // predict
  struct {
    std::string pipeline, compiled, index, input, format, out, trace_out;
    bool strict = false;
    GatewayFlags gw;
  } predict;
  auto* c_predict = app.add_subcommand("predict", "Run a pipeline over a dataset");
  c_predict->add_option("--pipeline", predict.pipeline, "ms or uw (default: pipeline.selector)");
  c_predict->add_option("--compiled", predict.compiled, "Compiled pipeline (default: zero-shot)");
  c_predict->add_option("--index", predict.index, "Retrieval index (ms pipeline)");
  c_predict->add_option("--input", predict.input, "Records to predict");
  c_predict->add_option("--format", predict.format, "Dataset format: csv or jsonl (default: by extension)");
  c_predict->add_option("--out", predict.out, "Predictions file (csv)");
  c_predict->add_option("--trace-out", predict.trace_out, "Trace file (json-lines)");
  c_predict->add_flag("--strict", predict.strict, "Abort on the first failed record");
  predict.gw.add_to(c_predict);

  // evaluate
  struct {
    std::string pred, gold, out, format;
    std::vector<std::string> scorers;
    std::size_t batch_size = 32;
    bool strict = false;
  } evaluate_cmd;
  auto* c_eval = app.add_subcommand("evaluate", "Score predictions against gold labels");
  c_eval->add_option("--pred", evaluate_cmd.pred, "Predictions file (csv)")->required();
  c_eval->add_option("--gold", evaluate_cmd.gold, "Gold dataset or predictions-shaped csv")->required();
  c_eval->add_option("--format", evaluate_cmd.format, "Gold dataset format: csv or jsonl");
  c_eval->add_option("--out", evaluate_cmd.out, "Score report (JSON)")->required();
  c_eval->add_option("--scorer", evaluate_cmd.scorers, "External scorer NAME=URL, e.g. bertscore=http://host:8000");
  c_eval->add_option("--batch-size", evaluate_cmd.batch_size, "Pairs per external scorer request");
  c_eval->add_flag("--strict", evaluate_cmd.strict, "Fail when an external scorer fails");

  // report
  struct {
    std::string in, format = "table", out;
  } report;
  auto* c_report = app.add_subcommand("report", "Render a score report");
  c_report->add_option("--in", report.in, "Score report (JSON)")->required();
  c_report->add_option("--format", report.format, "table, json or markdown");
  c_report->add_option("--out", report.out, "Write here instead of standard output");

  // replay-verify
  struct {
    std::string trace;
    GatewayFlags gw;
  } verify;
  auto* c_verify = app.add_subcommand("replay-verify", "Check that a trace replays byte-identically from the cache");
  c_verify->add_option("--trace", verify.trace, "Trace file written by predict")->required();
  verify.gw.add_to(c_verify);

  std::vector<std::string> args(argv.begin() + (argv.empty() ? 0 : 1), argv.end());
  std::reverse(args.begin(), args.end());
  try {
    app.parse(args);
  } catch (const CLI::CallForHelp& e) {
    app.exit(e, out, err);
    return kExitOk;
  } catch (const CLI::CallForAllHelp& e) {
    app.exit(e, out, err);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    app.exit(e, err, err);
    err << app.help();
    return kExitUser;
  }

  try {
    EngineConfig config = config_path.empty() ? parse_config("", env) : load_config(config_path, env);

    if (c_ingest->parsed()) {
      auto records = load_records(ingest.input, ingest.format);
      err << "ingest: " << records.size() << " records valid\n";
      if (!ingest.out.empty()) {
        write_file(ingest.out, serialize_clinical_records(records, format_for(ingest.out, ingest.out_format)));
      }
      if (!ingest.split.empty()) {
        const auto sz = parse_sizes(ingest.split);
        if (ingest.train_out.empty() || ingest.val_out.empty() || ingest.test_out.empty()) {
          throw ValidationError("--split needs --train-out, --val-out and --test-out");
        }
        const auto split = split_dataset(records, {sz[0], sz[1], sz[2]}, ingest.seed,
                                         ingest.stratified ? SplitMode::kFlagStratified : SplitMode::kPlain);
        write_file(ingest.train_out, serialize_clinical_records(split.train, format_for(ingest.train_out, "")));
        write_file(ingest.val_out, serialize_clinical_records(split.validation, format_for(ingest.val_out, "")));
        write_file(ingest.test_out, serialize_clinical_records(split.test, format_for(ingest.test_out, "")));
        err << "ingest: split " << split.train.size() << "/" << split.validation.size() << "/"
            << split.test.size() << " with seed " << ingest.seed << "\n";
      }
      return kExitOk;
    }

    if (c_index_build->parsed()) {
      auto corpus = parse_mcq_corpus(read_file(index.corpus));
      const auto idx = build_index(std::move(corpus));
      write_file(index.out, idx.to_json().dump() + "\n");
      err << "index: " << idx.size() << " documents, " << idx.terms().size() << " terms\n";
      return kExitOk;
    }

    if (c_compile->parsed()) {
      compile.gw.apply(config);
      const std::string kind = compile.pipeline.empty() ? config.pipeline.selector : compile.pipeline;
      const auto train = load_records(compile.train, compile.format);
      const auto val = load_records(compile.val, compile.format);
      CompileSettings s;
      s.seed = compile.seed.value_or(config.optimize.seed);
      s.n_candidates = config.optimize.n_candidates;
      s.demos_per_stage = config.optimize.demos_per_stage;
      s.max_demos = config.optimize.max_demos;
      s.n_instruction_proposals = config.optimize.instruction_proposals;
      s.concurrency = config.gateway.concurrency;
      const PassThresholds th{config.optimize.pass_threshold_binary, config.optimize.pass_threshold_rouge_l};
      auto gw = make_gateway(config);
      auto pick = [&](const std::string& configured) {
        const std::string name = compile.optimizer.empty() ? configured : compile.optimizer;
        if (name == "random_search") return Optimizer::kRandomSearch;
        if (name == "mipro") return Optimizer::kMipro;
        throw ValidationError("unknown optimizer '" + name + "'");
      };
      nlohmann::ordered_json doc;
      std::vector<CompileReport> reports;
      if (kind == "ms") {
        MsPipeline base;
        base.index = load_index(compile.index.empty() ? config.paths.index : compile.index);
        base.gate_enabled = config.pipeline.ms_gate;
        base.gate_threshold = config.pipeline.gate_threshold;
        for (const auto& st : MsPipeline::all_stages()) base.program(st).max_demos = s.max_demos;
        auto [compiled, reps] = compile_ms(base, train, val, s, *gw, pick(config.optimize.ms_optimizer), th);
        doc = to_json(compiled);
        reports = std::move(reps);
      } else if (kind == "uw") {
        UwPipeline base;
        base.gate_threshold = config.pipeline.gate_threshold;
        for (const auto& st : UwPipeline::all_stages()) base.program(st).max_demos = s.max_demos;
        auto [compiled, reps] = compile_uw(base, train, val, s, *gw, pick(config.optimize.uw_optimizer), th);
        doc = to_json(compiled);
        reports = std::move(reps);
      } else {
        throw ValidationError("unknown pipeline '" + kind + "' (expected ms or uw)");
      }
      write_file(compile.out, doc.dump(2) + "\n");
      if (!compile.report_out.empty()) {
        nlohmann::ordered_json rj = nlohmann::ordered_json::array();
        for (const auto& r : reports) rj.push_back(to_json(r));
        write_file(compile.report_out, rj.dump(2) + "\n");
      }
      for (const auto& r : reports) {
        for (const auto& w : r.warnings) err << "warning: " << w << "\n";
        err << "compile: " << r.optimizer << " on " << r.metric << " [";
        for (std::size_t i = 0; i < r.stages.size(); ++i) err << (i ? "," : "") << r.stages[i];
        err << "]: winner " << r.winner_id << " validation " << r.winner().validation_score << " (baseline "
            << r.candidates.front().validation_score << ")\n";
      }
      return kExitOk;
    }

    if (c_predict->parsed()) {
      predict.gw.apply(config);
      const std::string kind = predict.pipeline.empty() ? config.pipeline.selector : predict.pipeline;
      const std::string input = predict.input.empty() ? config.paths.datasets : predict.input;
      const std::string out_path = predict.out.empty() ? config.paths.outputs : predict.out;
      const std::string compiled_path = predict.compiled.empty() ? config.paths.compiled : predict.compiled;
      if (input.empty()) throw ValidationError("predict needs --input");
      if (out_path.empty()) throw ValidationError("predict needs --out");
      const auto records = load_records(input, predict.format);
      const bool strict = predict.strict || config.pipeline.strict;
      auto gw = make_gateway(config);
      std::vector<Prediction> preds;
      if (kind == "ms") {
        MsPipeline p;
        if (!compiled_path.empty()) p = pipeline_from_json<MsPipeline>(parse_json_file(compiled_path), "ms");
        else {
          p.gate_enabled = config.pipeline.ms_gate;
          p.gate_threshold = config.pipeline.gate_threshold;
        }
        p.index = load_index(predict.index.empty() ? config.paths.index : predict.index);
        preds = predict_batch(p, records, *gw, config.gateway.concurrency, strict);
      } else if (kind == "uw") {
        UwPipeline p;
        if (!compiled_path.empty()) p = pipeline_from_json<UwPipeline>(parse_json_file(compiled_path), "uw");
        else p.gate_threshold = config.pipeline.gate_threshold;
        preds = predict_batch(p, records, *gw, config.gateway.concurrency, strict);
      } else {
        throw ValidationError("unknown pipeline '" + kind + "' (expected ms or uw)");
      }
      write_file(out_path, serialize_predictions(preds));
      if (!predict.trace_out.empty()) {
        std::string t;
        for (const auto& p : preds) {
          t += trace_to_json(p).dump(-1, ' ', false, nlohmann::json::error_handler_t::replace);
          t.push_back('\n');
        }
        write_file(predict.trace_out, t);
      }
      std::size_t failed = 0;
      for (const auto& p : preds) {
        if (p.failed) {
          ++failed;
          err << "warning: record '" << p.record_id << "' failed: " << p.error << "\n";
        }
      }
      err << "predict: " << preds.size() << " records, " << failed << " failed\n";
      return kExitOk;
    }

    if (c_eval->parsed()) {
      const auto preds = parse_predictions(read_file(evaluate_cmd.pred));
      const std::string graw = read_file(evaluate_cmd.gold);
      const auto golds = looks_like_predictions_table(graw)
                             ? parse_predictions(graw)
                             : gold_rows(parse_clinical_records(graw, format_for(evaluate_cmd.gold, evaluate_cmd.format)));
      EvaluateOptions opts;
      opts.strict = evaluate_cmd.strict;
      for (const auto& s : evaluate_cmd.scorers) {
        const auto eq = s.find('=');
        if (eq == std::string::npos || eq == 0) throw ValidationError("--scorer expects NAME=URL, got '" + s + "'");
        opts.scorers.push_back(std::make_shared<HttpScorer>(s.substr(0, eq), s.substr(eq + 1), evaluate_cmd.batch_size));
      }
      const auto rep = evaluate(preds, golds, opts);
      write_file(evaluate_cmd.out, to_json(rep).dump(2) + "\n");
      for (const auto& [name, why] : rep.unavailable) err << "note: " << name << " unavailable: " << why << "\n";
      err << "evaluate: flag accuracy " << rep.flag_accuracy << ", sentence accuracy " << rep.sentence_accuracy << "\n";
      return kExitOk;
    }

    if (c_report->parsed()) {
      ReportFormat f;
      if (report.format == "table") f = ReportFormat::kTable;
      else if (report.format == "json") f = ReportFormat::kJson;
      else if (report.format == "markdown") f = ReportFormat::kMarkdown;
      else throw ValidationError("unknown report format '" + report.format + "'");
      const auto rep = score_report_from_json(parse_json_file(report.in));
      const std::string text = render_report(rep, f);
      if (report.out.empty()) out << text;
      else write_file(report.out, text);
      return kExitOk;
    }

    if (c_verify->parsed()) {
      verify.gw.apply(config);
      if (config.gateway.backend != "replay") throw ValidationError("replay-verify needs the replay backend");
      auto gw = make_gateway(config);
      const std::string raw = read_file(verify.trace);
      std::size_t checked = 0, mismatched = 0;
      std::istringstream lines(raw);
      std::string line;
      std::size_t n = 0;
      while (std::getline(lines, line)) {
        ++n;
        if (is_blank(line)) continue;
        nlohmann::json j;
        try {
          j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
          throw ValidationError("trace line " + std::to_string(n) + ": " + e.what());
        }
        for (const auto& st : j.at("stages")) {
          for (const auto& call : st.at("calls")) {
            const LmRequest req = request_from_json(call.at("request"));
            const std::string key = canonical_key(req);
            if (key != call.at("key").get<std::string>()) {
              ++mismatched;
              err << "mismatch: trace line " << n << " stage " << st.at("stage").get<std::string>()
                  << ": stored key differs from recomputed key " << key << "\n";
              continue;
            }
            const auto resp = gw->complete(req);
            ++checked;
            if (resp.text != call.at("completion").get<std::string>()) {
              ++mismatched;
              err << "mismatch: trace line " << n << " stage " << st.at("stage").get<std::string>() << " key " << key
                  << "\n";
            }
          }
        }
      }
      err << "replay-verify: " << checked << " calls checked, " << mismatched << " mismatched\n";
      return mismatched == 0 ? kExitOk : kExitUser;
    }
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUser;
  } catch (const CacheMissError& e) {
    err << "error: " << e.what() << " (the replay cache does not cover this request; re-record or fix the fixture)\n";
    return kExitInternal;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitInternal;
  }
  return kExitInternal;
}

}  // namespace medcorr::cli
