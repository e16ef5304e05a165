#pragma once

#include <optional>
#include <string>
#include <vector>

#include "vquant/errors.hpp"
#include "vquant/quant.hpp"

namespace vquant {

// One annealing phase: a storage config for quantized activation storage, or
// full precision when the config is absent.
struct TrainPhase {
  int epochs = 0;
  std::optional<QuantConfig> config;

  std::string label() const {
    if (!config.has_value()) return "F";
    std::string s = std::to_string(config->bits) + ":";
    const double percent = config->large_ratio * 100.0;
    const auto rounded = static_cast<long long>(percent * 1000.0 + 0.5);
    if (rounded % 1000 == 0) {
      s += std::to_string(rounded / 1000);
    } else {
      std::string frac = std::to_string(percent);
      frac.erase(frac.find_last_not_of('0') + 1);
      if (!frac.empty() && frac.back() == '.') frac.pop_back();
      s += frac;
    }
    return s;
  }
};

struct AnnealSchedule {
  std::vector<TrainPhase> phases;

  void validate(int total_epochs) const {
    if (phases.empty()) throw ConfigError("schedule has no phases");
    int covered = 0;
    for (const auto& phase : phases) {
      if (phase.epochs < 1) throw ConfigError("every schedule phase needs at least one epoch");
      if (phase.config.has_value()) phase.config->validate();
      covered += phase.epochs;
    }
    if (covered != total_epochs)
      throw ConfigError("schedule covers " + std::to_string(covered) + " epochs, expected " +
                        std::to_string(total_epochs));
  }

  std::size_t phase_index(int epoch) const {
    int start = 0;
    for (std::size_t i = 0; i < phases.size(); ++i) {
      if (epoch < start + phases[i].epochs) return i;
      start += phases[i].epochs;
    }
    throw StateError("epoch " + std::to_string(epoch) + " beyond the schedule");
  }

  const TrainPhase& phase_for_epoch(int epoch) const { return phases[phase_index(epoch)]; }

  static AnnealSchedule constant(int total_epochs, std::optional<QuantConfig> config) {
    AnnealSchedule s;
    s.phases.push_back({total_epochs, std::move(config)});
    return s;
  }
};

// Parses schedule strings like "F,3:2,2:0": comma-separated phases, each
// either "F" (full precision) or "K:AR" with AR in percent. Phases split the
// epochs evenly, remainder to the last phase.
inline AnnealSchedule parse_schedule(const std::string& text, int total_epochs, QuantMode mode,
                                     OutlierPrecision precision = OutlierPrecision::Bits32) {
  if (total_epochs < 1) throw ConfigError("epoch count must be positive");
  std::vector<std::string> tokens;
  std::string current;
  for (char c : text) {
    if (c == ',') {
      tokens.push_back(current);
      current.clear();
    } else if (!std::isspace(static_cast<unsigned char>(c))) {
      current.push_back(c);
    }
  }
  tokens.push_back(current);
  if (static_cast<int>(tokens.size()) > total_epochs)
    throw ConfigError("schedule has more phases than epochs");

  AnnealSchedule schedule;
  const int base = total_epochs / static_cast<int>(tokens.size());
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    const std::string& token = tokens[i];
    TrainPhase phase;
    phase.epochs = (i + 1 == tokens.size())
                       ? total_epochs - base * static_cast<int>(tokens.size() - 1)
                       : base;
    if (token == "F" || token == "f") {
      schedule.phases.push_back(std::move(phase));
      continue;
    }
    const auto colon = token.find(':');
    if (colon == std::string::npos || colon == 0 || colon + 1 == token.size())
      throw ConfigError("bad schedule token '" + token + "' (expected F or K:AR)");
    QuantConfig cfg;
    try {
      std::size_t used = 0;
      cfg.bits = std::stoi(token.substr(0, colon), &used);
      if (used != colon) throw std::invalid_argument(token);
      const std::string ratio = token.substr(colon + 1);
      cfg.large_ratio = std::stod(ratio, &used) / 100.0;
      if (used != ratio.size()) throw std::invalid_argument(token);
    } catch (const std::exception&) {
      throw ConfigError("bad schedule token '" + token + "' (expected F or K:AR)");
    }
    cfg.mode = mode;
    cfg.range_policy = RangePolicy::Nonnegative;
    cfg.outlier_precision = precision;
    try {
      cfg.validate();
    } catch (const ConfigError& e) {
      throw ConfigError("bad schedule token '" + token + "': " + e.what());
    }
    phase.config = cfg;
    schedule.phases.push_back(std::move(phase));
  }
  return schedule;
}

}  // namespace vquant
