#pragma once

#include <chrono>
#include <ctime>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "vquant/errors.hpp"
#include "vquant/ptq.hpp"
#include "vquant/quant.hpp"
#include "vquant/shard.hpp"
#include "vquant/train.hpp"
#include "vquant/version.hpp"

namespace vquant {

using nlohmann::json;

// Reports deliberately carry no timestamps: rerunning a command with the same
// inputs reproduces them byte for byte. Wall-clock times live in the manifest.

inline std::string format_double(double v) {
  std::ostringstream out;
  out.precision(12);
  out << v;
  return out.str();
}

inline json to_json(const QuantErrorStats& stats) {
  return json{{"mse", stats.mse},
              {"max_abs", stats.max_abs},
              {"small_max_abs", stats.small_max_abs}};
}

inline json config_json(const QuantConfig& cfg) {
  return json{{"bits", cfg.bits},
              {"ratio", cfg.large_ratio},
              {"mode", to_string(cfg.mode)},
              {"range", to_string(cfg.range_policy)},
              {"outlier_bits", cfg.outlier_precision == OutlierPrecision::Bits16 ? 16 : 32}};
}

inline json to_json(const TrainReport& report) {
  json epochs = json::array();
  for (const auto& e : report.epochs) {
    epochs.push_back({{"epoch", e.epoch},
                      {"phase", e.phase},
                      {"loss", e.loss},
                      {"acc", e.accuracy},
                      {"stored_bytes", e.stored_activation_bytes}});
  }
  return json{{"version", kToolkitVersion},
              {"seed", report.seed},
              {"diverged", report.diverged},
              {"divergence_message", report.divergence_message},
              {"final", {{"loss", report.final_loss()}, {"acc", report.final_accuracy()}}},
              {"epochs", epochs}};
}

inline std::string train_report_csv(const TrainReport& report) {
  std::ostringstream out;
  out << "epoch,phase,loss,acc,stored_bytes\n";
  for (const auto& e : report.epochs) {
    out << e.epoch << ',' << e.phase << ',' << format_double(e.loss) << ','
        << format_double(e.accuracy) << ',' << e.stored_activation_bytes << '\n';
  }
  return out.str();
}

inline json to_json(const DivergenceReport& report) {
  return json{{"workers", report.workers},
              {"global_outliers", report.global_outliers},
              {"local_outliers", report.local_outliers},
              {"jaccard", report.jaccard},
              {"mse_local", report.mse_local},
              {"mse_global", report.mse_global},
              {"mse_ratio", report.mse_ratio}};
}

inline std::string divergence_csv(const DivergenceReport& r) {
  std::ostringstream out;
  out << "workers,global_outliers,local_outliers,jaccard,mse_local,mse_global,mse_ratio\n";
  out << r.workers << ',' << r.global_outliers << ',' << r.local_outliers << ','
      << format_double(r.jaccard) << ',' << format_double(r.mse_local) << ','
      << format_double(r.mse_global) << ',' << format_double(r.mse_ratio) << '\n';
  return out.str();
}

inline json candidate_json(const CandidateResult& c) {
  return json{{"label", c.config.label()},
              {"weight_bits", c.config.weight_bits},
              {"act_bits", c.config.act_bits},
              {"weight_ratio", c.config.weight_ratio},
              {"act_ratio", c.config.act_ratio},
              {"acc_before_finetune", c.accuracy_before},
              {"acc", c.accuracy},
              {"memory_fraction", c.memory_fraction}};
}

inline json to_json(const SweepResult& result) {
  json candidates = json::array();
  for (const auto& c : result.candidates) candidates.push_back(candidate_json(c));
  return json{{"version", kToolkitVersion},
              {"float_acc", result.float_accuracy},
              {"target_acc", result.target_accuracy},
              {"none_qualify", result.none_qualify},
              {"selected", result.selected},
              {"selected_label", result.candidates[result.selected].config.label()},
              {"candidates", candidates}};
}

inline std::string sweep_csv(const SweepResult& result) {
  std::ostringstream out;
  out << "label,weight_bits,act_bits,weight_ratio,act_ratio,acc_before_finetune,acc,"
         "memory_fraction,selected\n";
  for (std::size_t i = 0; i < result.candidates.size(); ++i) {
    const auto& c = result.candidates[i];
    out << c.config.label() << ',' << c.config.weight_bits << ',' << c.config.act_bits << ','
        << format_double(c.config.weight_ratio) << ',' << format_double(c.config.act_ratio)
        << ',' << format_double(c.accuracy_before) << ',' << format_double(c.accuracy) << ','
        << format_double(c.memory_fraction) << ','
        << ((i == result.selected && !result.none_qualify) ? 1 : 0) << '\n';
  }
  return out.str();
}

// Execution record written next to every report. Timestamps live here and
// only here.
struct RunManifest {
  std::string command;
  json config = json::object();
  std::uint64_t seed = 0;
  std::string started_at;
  std::string finished_at;
  std::vector<std::string> outputs;
};

inline std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buffer[32];
  std::strftime(buffer, sizeof(buffer), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buffer;
}

inline json to_json(const RunManifest& m) {
  return json{{"version", kToolkitVersion}, {"command", m.command}, {"config", m.config},
              {"seed", m.seed},             {"started_at", m.started_at},
              {"finished_at", m.finished_at}, {"outputs", m.outputs}};
}

inline void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw FormatError(path + ": cannot open for writing");
  out << text;
  if (!out) throw FormatError(path + ": write failed");
}

inline void write_json_file(const std::string& path, const json& value) {
  write_text_file(path, value.dump(2) + "\n");
}

}  // namespace vquant
