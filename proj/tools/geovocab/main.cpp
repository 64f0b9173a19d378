#include <cstdio>
#include <iostream>

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "geovocab/cli/commands.hpp"

namespace fs = std::filesystem;
using namespace geovocab;

namespace {

struct GatewayFlags {
  std::string api_url;
  std::string model;
  std::string api_key_env;
  int max_retries = -1;
  int timeout_ms = -1;
  int max_concurrent = -1;

  GatewayConfig resolve(const std::string& mock_fixtures) const {
    auto config = GatewayConfig::from_env();
    if (!api_url.empty()) config.endpoint_url = api_url;
    if (!model.empty()) config.model_name = model;
    if (!api_key_env.empty()) config.api_key_env_name = api_key_env;
    if (max_retries >= 0) config.max_retries = max_retries;
    if (timeout_ms >= 0) config.timeout_ms = timeout_ms;
    if (max_concurrent >= 0) config.max_concurrent_requests = max_concurrent;
    if (!mock_fixtures.empty()) config.mock_fixture_dir = mock_fixtures;
    return config;
  }
};

void add_gateway_flags(CLI::App* cmd, GatewayFlags& flags) {
  cmd->add_option("--api-url", flags.api_url, "Chat-completions endpoint (default $GEOVOCAB_API_URL)");
  cmd->add_option("--model", flags.model, "Model name (default $GEOVOCAB_MODEL)");
  cmd->add_option("--api-key-env", flags.api_key_env, "Environment variable holding the API key");
  cmd->add_option("--max-retries", flags.max_retries, "Retries on 429/5xx/timeouts");
  cmd->add_option("--timeout-ms", flags.timeout_ms, "Per-request timeout");
  cmd->add_option("--max-concurrent", flags.max_concurrent, "In-flight request limit");
}

void add_alignment_flags(CLI::App* cmd, std::string& similarity, std::vector<std::string>& always_include,
                         std::string& upsample, std::vector<std::size_t>& target) {
  cmd->add_option("--similarity", similarity, "cosine or dot")->check(CLI::IsMember({"cosine", "dot"}));
  cmd->add_option("--always-include", always_include, "Categories kept in every candidate set");
  cmd->add_option("--upsample", upsample, "none or nearest")->check(CLI::IsMember({"none", "nearest"}));
  cmd->add_option("--target-size", target, "Upsampling target: H W")->expected(2);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"geovocab: knowledge-guided adaptive vocabularies for open-vocabulary land-cover segmentation"};
  app.require_subcommand(1);

  std::string pool = "loveda";
  std::string mock_fixtures;
  int jobs = 4;
  std::string log_level = "info";
  std::string prompts_dir;
  app.add_option("--pool", pool, "Category pool file or built-in name (loveda, gid5)");
  app.add_option("--mock-fixtures", mock_fixtures, "Serve model replies from this fixture directory");
  app.add_option("--jobs", jobs, "Concurrent work items")->check(CLI::PositiveNumber);
  app.add_option("--log-level", log_level, "trace, debug, info, warn, error, off")
      ->check(CLI::IsMember({"trace", "debug", "info", "warn", "error", "critical", "off"}));
  app.add_option("--prompts", prompts_dir, "Prompt template directory");

  GatewayFlags gateway_flags;

  // distill
  auto* distill = app.add_subcommand("distill", "Build category interpretation standards");
  fs::path distill_out;
  std::string pairs_file;
  distill->add_option("-o,--out", distill_out, "Standards JSON to write")->required();
  distill->add_option("--pairs", pairs_file, "JSON list of [name, name] pairs; skips pair proposal")
      ->check(CLI::ExistingFile);
  add_gateway_flags(distill, gateway_flags);

  // reason
  auto* reason = app.add_subcommand("reason", "Run the reasoning chain per image and write traces");
  std::vector<fs::path> reason_inputs;
  fs::path reason_standards;
  fs::path reason_out;
  bool keep_going = false;
  reason->add_option("images", reason_inputs, "Image files or directories")->required();
  reason->add_option("-s,--standards", reason_standards, "Standards JSON")->required()->check(CLI::ExistingFile);
  reason->add_option("-o,--out", reason_out, "Trace output directory")->required();
  reason->add_flag("--keep-going", keep_going, "Exit 0 when some images fail; failures go to failures.json");
  add_gateway_flags(reason, gateway_flags);

  // segment
  auto* seg = app.add_subcommand("segment", "Restricted pixel-to-text alignment for one feature map");
  cli::SegmentOptions seg_options;
  std::string seg_trace;
  std::string seg_similarity = "cosine";
  std::string seg_upsample = "none";
  std::vector<std::string> seg_always;
  std::vector<std::size_t> seg_target;
  seg->add_option("-f,--features", seg_options.features, "(H, W, D) f4 feature tensor")->required();
  seg->add_option("-e,--embeddings", seg_options.embeddings, "(K, D) f4 text embeddings")->required();
  seg->add_option("--sidecar", seg_options.sidecar, "Embedding row/category sidecar JSON")->required();
  seg->add_option("-t,--trace", seg_trace, "Trace whose vocabulary restricts the candidates");
  seg->add_flag("--full-pool", seg_options.full_pool, "Use every pool category");
  seg->add_option("-o,--out", seg_options.out, "Label raster to write")->required();
  add_alignment_flags(seg, seg_similarity, seg_always, seg_upsample, seg_target);

  // eval
  auto* eval = app.add_subcommand("eval", "Score predicted rasters against ground truth");
  cli::EvalOptions eval_options;
  std::string eval_traces;
  std::string eval_format = "text";
  std::string eval_out;
  eval->add_option("--pred", eval_options.pred_dir, "Prediction raster directory")->required();
  eval->add_option("--gt", eval_options.gt_dir, "Ground-truth raster directory")->required();
  eval->add_option("--traces", eval_traces, "Trace directory; enables Cat. Acc.");
  eval->add_option("--format", eval_format, "text, json or csv")->check(CLI::IsMember({"text", "json", "csv"}));
  eval->add_option("-o,--out", eval_out, "Also write the report here");

  // pipeline
  auto* pipeline = app.add_subcommand("pipeline", "Reason, segment and evaluate a corpus from a config file");
  fs::path pipeline_config;
  std::string pipeline_mode;
  std::string pipeline_out;
  pipeline->add_option("config", pipeline_config, "Pipeline config JSON")->required();
  pipeline->add_option("--mode", pipeline_mode, "Override the configured mode")
      ->check(CLI::IsMember({"full_pool_baseline", "mllm_descriptions_only", "gr_cot"}));
  pipeline->add_option("-o,--out", pipeline_out, "Override the configured output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : cli::exit_code_for(Error(ErrorCode::ConfigError, e.what()));
  }

  auto logger = spdlog::stderr_color_mt("geovocab");
  spdlog::set_default_logger(logger);
  spdlog::set_level(spdlog::level::from_str(log_level));
  spdlog::set_pattern("[%l] %v");

  try {
    cli::CommonOptions common;
    common.pool = pool;
    common.gateway = gateway_flags.resolve(mock_fixtures);
    common.jobs = jobs;
    if (!prompts_dir.empty()) common.prompts_dir = prompts_dir;

    if (*distill) {
      cli::DistillOptions options{common, distill_out, std::nullopt};
      if (!pairs_file.empty()) options.pairs_file = pairs_file;
      const auto outcome = cli::cmd_distill(options);
      for (const auto& w : outcome.warnings) spdlog::warn("{}", w);
    } else if (*reason) {
      cli::ReasonOptions options{common, reason_inputs, reason_standards, reason_out, keep_going};
      const auto outcome = cli::cmd_reason(options);
      for (const auto& t : outcome.traces) std::cout << t.string() << "\n";
    } else if (*seg) {
      seg_options.pool = pool;
      if (!seg_trace.empty()) seg_options.trace = seg_trace;
      seg_options.alignment.similarity = similarity_from_string(seg_similarity);
      seg_options.alignment.always_include = seg_always;
      seg_options.alignment.upsample = upsample_from_string(seg_upsample);
      if (seg_target.size() == 2) {
        seg_options.alignment.target_height = seg_target[0];
        seg_options.alignment.target_width = seg_target[1];
      }
      seg_options.alignment.jobs = jobs;
      cli::cmd_segment(seg_options);
    } else if (*eval) {
      eval_options.pool = pool;
      eval_options.jobs = jobs;
      eval_options.format = report_format_from_string(eval_format);
      if (!eval_traces.empty()) eval_options.traces_dir = eval_traces;
      if (!eval_out.empty()) eval_options.out = eval_out;
      std::cout << cli::cmd_eval(eval_options).rendered;
    } else if (*pipeline) {
      auto config = cli::PipelineConfig::load(pipeline_config);
      if (!pipeline_mode.empty()) config.mode = cli::mode_from_string(pipeline_mode);
      if (!pipeline_out.empty()) config.output_dir = pipeline_out;
      if (!mock_fixtures.empty()) config.gateway.mock_fixture_dir = mock_fixtures;
      if (app.get_option("--jobs")->count() > 0) config.jobs = jobs;
      if (!prompts_dir.empty()) config.prompts_dir = prompts_dir;
      const auto outcome = cli::cmd_pipeline(config);
      if (outcome.report) std::cout << render_report(*outcome.report, ReportFormat::TextTable);
      std::cout << "manifest digest " << outcome.digest << "\n";
    }
  } catch (const Error& e) {
    spdlog::error("{}", e.what());
    return cli::exit_code_for(e);
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return 1;
  }
  return cli::kExitOk;
}
