#pragma once
#ifndef FAIREQUITY_METRICS_HPP
#define FAIREQUITY_METRICS_HPP

#include <algorithm>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fairequity/error.hpp"
#include "fairequity/selector.hpp"

namespace fairequity {

/// Floor applied to normalized quality so S_i / Q_i stays finite.
inline constexpr double kQualityFloor = 0.01;

/// Q_i = n_class * (1 - p_noisy), scaled by the class count and mapped
/// affinely from [0.5, 1] onto [0, 1], floored at kQualityFloor.
inline double data_quality(std::uint32_t n_class, double p_noisy, std::uint32_t num_classes_total) {
  if (num_classes_total < 1 || n_class < 1 || n_class > num_classes_total)
    throw Error("metrics", "n_class must lie in [1, " + std::to_string(num_classes_total) + "]");
  if (!(p_noisy >= 0.0 && p_noisy <= 1.0)) throw Error("metrics", "p_noisy must lie in [0, 1]");
  const double raw = static_cast<double>(n_class) * (1.0 - p_noisy);
  const double scaled = raw / static_cast<double>(num_classes_total);
  return std::clamp((scaled - 0.5) / 0.5, kQualityFloor, 1.0);
}

struct FairnessInput {
  double participation = 0.0;  // S_i
  double quality = 1.0;        // Q_i
};

/// Jain's index over the quality-weighted ratios r_i = S_i / Q_i.
inline double jain_fairness_index(std::span<const FairnessInput> inputs) {
  if (inputs.empty()) throw Error("metrics", "JFI of an empty population");
  double sum = 0.0;
  double sum_sq = 0.0;
  for (const auto& in : inputs) {
    if (!(in.quality > 0.0)) throw Error("metrics", "quality must be > 0");
    if (!(in.participation >= 0.0)) throw Error("metrics", "participation must be >= 0");
    const double r = in.participation / in.quality;
    sum += r;
    sum_sq += r * r;
  }
  if (sum_sq == 0.0) throw Error("metrics", "JFI undefined when nobody participated");
  return (sum * sum) / (static_cast<double>(inputs.size()) * sum_sq);
}

struct RoundMetric {
  Round round = 0;
  double elapsed_s = 0.0;  // cumulative
  double accuracy = 0.0;
  double loss = 0.0;
};

struct ConvergenceRecord {
  std::vector<RoundMetric> rounds;

  void append(const RoundMetric& m) {
    if (!rounds.empty() && m.elapsed_s < rounds.back().elapsed_s)
      throw Error("metrics", "elapsed time must be nondecreasing");
    rounds.push_back(m);
  }
};

/// RA_A: first round whose accuracy reaches A.
inline std::optional<Round> rounds_to_accuracy(const ConvergenceRecord& record, double target) {
  for (const auto& m : record.rounds)
    if (m.accuracy >= target) return m.round;
  return std::nullopt;
}

/// TA_A: elapsed time at the first round whose accuracy reaches A.
inline std::optional<double> time_to_accuracy(const ConvergenceRecord& record, double target) {
  for (const auto& m : record.rounds)
    if (m.accuracy >= target) return m.elapsed_s;
  return std::nullopt;
}

inline double max_accuracy(const ConvergenceRecord& record) {
  double best = 0.0;
  for (const auto& m : record.rounds) best = std::max(best, m.accuracy);
  return best;
}

/// Population variance.
inline double variance(std::span<const double> values) {
  if (values.empty()) return 0.0;
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= static_cast<double>(values.size());
  double acc = 0.0;
  for (double v : values) acc += (v - mean) * (v - mean);
  return acc / static_cast<double>(values.size());
}

/// Median; the mean of the middle pair for even sizes. Infinite entries
/// sort last, so "never reached" samples can take part.
inline double median(std::vector<double> values) {
  if (values.empty()) throw Error("metrics", "median of an empty set");
  std::sort(values.begin(), values.end());
  const std::size_t mid = values.size() / 2;
  if (values.size() % 2 == 1) return values[mid];
  return (values[mid - 1] + values[mid]) / 2.0;
}

}  // namespace fairequity

#endif  // FAIREQUITY_METRICS_HPP
