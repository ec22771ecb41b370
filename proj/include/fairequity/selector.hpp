#pragma once
#ifndef FAIREQUITY_SELECTOR_HPP
#define FAIREQUITY_SELECTOR_HPP

// Fair client selection: the sampling equalizer and the client tracker
// records it consults every round.
//
// A round plan is built in four stages, each drawing from what the previous
// stages left over:
//   1. on every lambda-th round, never-utilized clients (ascending id),
//      capped by min(lambda_max, Slots_a);
//   2. overlooked clients (G_i >= Gap_max, T_i < N_Cmax) in descending G_i,
//      capped by min(m, remaining Slots_a);
//   3. filter of everything else by Gap_min, N_Cmax, suspension and
//      availability;
//   4. uniform random fill without replacement up to n.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fairequity/error.hpp"
#include "fairequity/random.hpp"

namespace fairequity {

using ClientId = std::uint32_t;
using Round = std::uint32_t;

struct ClientTrackerRecord {
  ClientId client_id = 0;
  std::uint32_t times_selected = 0;  // T_i
  std::uint32_t gap = 0;             // G_i, rounds since last selection (or since round 0)
  bool ever_selected = false;
  Round suspended_until = 0;  // 0 = not suspended; inclusive end round otherwise
  bool available = true;      // availability for the round being planned

  // Audit counters, maintained by update_tracker.
  std::uint32_t rounds_suspended = 0;
  std::uint32_t rounds_unavailable = 0;

  bool is_suspended(Round round_k) const { return suspended_until != 0 && round_k <= suspended_until; }
  bool eligible(Round round_k) const { return available && !is_suspended(round_k); }
};

struct SelectionConfig {
  std::uint32_t total_clients = 100;  // K
  std::uint32_t per_round = 10;       // n
  std::uint32_t max_selections = 12;  // N_Cmax
  std::uint32_t min_selections = 5;   // N_Cmin
  std::uint32_t gap_min = 2;
  std::uint32_t gap_max = 11;
  std::uint32_t lambda = 5;            // interval for unutilized-client injection
  std::uint32_t lambda_max = 2;        // unutilized clients per injection round
  std::uint32_t overlooked_cap = 6;    // m
  double slots_fraction = 0.6;         // share of n reserved as Slots_a

  void validate() const {
    auto fail = [](const std::string& msg) { throw Error("selector", "invalid SelectionConfig: " + msg); };
    if (total_clients == 0) fail("total_clients must be >= 1");
    if (per_round == 0) fail("per_round must be >= 1");
    if (per_round > total_clients) fail("per_round exceeds total_clients");
    if (min_selections < 1) fail("N_Cmin must be >= 1");
    if (min_selections > max_selections) fail("N_Cmin exceeds N_Cmax");
    if (gap_min < 1) fail("Gap_min must be >= 1");
    if (gap_max <= gap_min) fail("Gap_max must exceed Gap_min");
    if (lambda < 1) fail("lambda must be >= 1");
    if (static_cast<std::uint64_t>(lambda_max) + overlooked_cap > per_round)
      fail("lambda_max + m exceeds per_round");
    if (!(slots_fraction >= 0.0 && slots_fraction <= 1.0)) fail("slots_fraction must lie in [0, 1]");
  }
};

struct RoundPlan {
  Round round_k = 0;
  std::vector<ClientId> selected;  // forced_unutilized, then forced_overlooked, then random_fill
  std::vector<ClientId> forced_unutilized;
  std::vector<ClientId> forced_overlooked;
  std::vector<ClientId> random_fill;
  bool underfilled = false;

  bool contains(ClientId id) const { return std::find(selected.begin(), selected.end(), id) != selected.end(); }
};

inline std::vector<ClientTrackerRecord> make_tracker(std::uint32_t total_clients) {
  std::vector<ClientTrackerRecord> records(total_clients);
  for (std::uint32_t i = 0; i < total_clients; ++i) records[i].client_id = i;
  return records;
}

/// Per-round budget shared by both forced-inclusion paths: ceil(fraction * n).
inline std::uint32_t slots_available(const SelectionConfig& cfg, Round /*round_k*/) {
  // The epsilon absorbs representation error such as 0.3 * 10 = 3.0000000000000004.
  const double raw = cfg.slots_fraction * static_cast<double>(cfg.per_round);
  const auto slots = static_cast<std::uint32_t>(std::ceil(raw - 1e-9));
  return std::min(slots, cfg.per_round);
}

namespace detail {

inline void check_records(std::span<const ClientTrackerRecord> records, const SelectionConfig& cfg) {
  if (records.size() != cfg.total_clients)
    throw Error("selector", "tracker covers " + std::to_string(records.size()) + " clients, config expects " +
                                std::to_string(cfg.total_clients));
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (records[i].client_id != i) throw Error("selector", "tracker records must be indexed by client_id");
  }
}

}  // namespace detail

/// Plans round `round_k` (1-based). Never throws for an over-constrained
/// state: a short plan comes back with `underfilled` set instead.
inline RoundPlan select_round(std::span<const ClientTrackerRecord> records, const SelectionConfig& cfg,
                              Round round_k, Rng& rng) {
  cfg.validate();
  detail::check_records(records, cfg);
  if (round_k < 1) throw Error("selector", "rounds are numbered from 1");

  RoundPlan plan;
  plan.round_k = round_k;
  std::vector<bool> taken(records.size(), false);
  std::uint32_t slots = slots_available(cfg, round_k);

  if (round_k % cfg.lambda == 0) {
    const std::uint32_t max_unutilized = std::min(cfg.lambda_max, slots);
    for (const auto& r : records) {
      if (plan.forced_unutilized.size() >= max_unutilized) break;
      if (!r.ever_selected && r.eligible(round_k)) {
        plan.forced_unutilized.push_back(r.client_id);
        taken[r.client_id] = true;
      }
    }
    slots -= static_cast<std::uint32_t>(plan.forced_unutilized.size());
  }

  const std::uint32_t max_overlooked = std::min(cfg.overlooked_cap, slots);
  if (max_overlooked > 0) {
    std::vector<const ClientTrackerRecord*> overdue;
    for (const auto& r : records) {
      if (!taken[r.client_id] && r.eligible(round_k) && r.gap >= cfg.gap_max && r.times_selected < cfg.max_selections)
        overdue.push_back(&r);
    }
    std::stable_sort(overdue.begin(), overdue.end(),
                     [](const auto* a, const auto* b) { return a->gap > b->gap; });
    for (std::size_t i = 0; i < overdue.size() && i < max_overlooked; ++i) {
      plan.forced_overlooked.push_back(overdue[i]->client_id);
      taken[overdue[i]->client_id] = true;
    }
  }

  // Gap_min governs re-selection; a client that never took part has no
  // previous round to keep its distance from.
  std::vector<ClientId> pool;
  for (const auto& r : records) {
    if (taken[r.client_id] || !r.eligible(round_k)) continue;
    if (r.times_selected >= cfg.max_selections) continue;
    if (r.ever_selected && r.gap < cfg.gap_min) continue;
    pool.push_back(r.client_id);
  }

  const std::size_t forced = plan.forced_unutilized.size() + plan.forced_overlooked.size();
  const std::size_t remaining = cfg.per_round > forced ? cfg.per_round - forced : 0;
  if (pool.size() < remaining) plan.underfilled = true;
  plan.random_fill = rng.sample_without_replacement(std::move(pool), remaining);

  plan.selected.reserve(forced + plan.random_fill.size());
  plan.selected.insert(plan.selected.end(), plan.forced_unutilized.begin(), plan.forced_unutilized.end());
  plan.selected.insert(plan.selected.end(), plan.forced_overlooked.begin(), plan.forced_overlooked.end());
  plan.selected.insert(plan.selected.end(), plan.random_fill.begin(), plan.random_fill.end());
  return plan;
}

/// Baseline FedAvg sampling: uniform n among eligible clients, no tracker
/// constraints.
inline RoundPlan select_random(std::span<const ClientTrackerRecord> records, std::uint32_t per_round, Round round_k,
                               Rng& rng) {
  RoundPlan plan;
  plan.round_k = round_k;
  std::vector<ClientId> pool;
  for (const auto& r : records)
    if (r.eligible(round_k)) pool.push_back(r.client_id);
  if (pool.size() < per_round) plan.underfilled = true;
  plan.random_fill = rng.sample_without_replacement(std::move(pool), per_round);
  plan.selected = plan.random_fill;
  return plan;
}

/// Applies a finished round to the tracker. `selection_cap` is N_Cmax for
/// the fair policy; pass the numeric maximum for uncapped baselines.
inline std::vector<ClientTrackerRecord> update_tracker(std::vector<ClientTrackerRecord> records, const RoundPlan& plan,
                                                       std::uint32_t selection_cap) {
  std::vector<bool> chosen(records.size(), false);
  for (ClientId id : plan.selected) {
    if (id >= records.size()) throw Error("selector", "plan names unknown client " + std::to_string(id));
    if (chosen[id]) throw Error("selector", "plan selects client " + std::to_string(id) + " twice");
    if (records[id].times_selected >= selection_cap)
      throw Error("selector", "plan selects client " + std::to_string(id) + " beyond N_Cmax");
    chosen[id] = true;
  }
  for (auto& r : records) {
    if (r.is_suspended(plan.round_k)) ++r.rounds_suspended;
    if (!r.available) ++r.rounds_unavailable;
    if (chosen[r.client_id]) {
      ++r.times_selected;
      r.gap = 0;
      r.ever_selected = true;
    } else {
      ++r.gap;
    }
  }
  return records;
}

inline std::vector<ClientTrackerRecord> update_tracker(std::vector<ClientTrackerRecord> records, const RoundPlan& plan,
                                                       const SelectionConfig& cfg) {
  return update_tracker(std::move(records), plan, cfg.max_selections);
}

// --- end-of-training audit -------------------------------------------------

enum class ViolationCause { none, suspension, unavailability, capacity, selector };

inline const char* to_string(ViolationCause c) {
  switch (c) {
    case ViolationCause::none: return "none";
    case ViolationCause::suspension: return "suspension";
    case ViolationCause::unavailability: return "unavailability";
    case ViolationCause::capacity: return "capacity";
    case ViolationCause::selector: return "selector";
  }
  return "unknown";
}

struct ClientAudit {
  ClientId client_id = 0;
  std::uint32_t times_selected = 0;
  bool below_min = false;
  bool above_max = false;
  ViolationCause cause = ViolationCause::none;
};

struct AuditReport {
  std::vector<ClientAudit> clients;
  std::uint32_t lower_violations = 0;
  std::uint32_t upper_violations = 0;
  std::uint32_t selector_attributed = 0;

  std::uint32_t violations() const { return lower_violations + upper_violations; }
};

/// Checks N_Cmin <= T_i <= N_Cmax for every client. A miss is attributed to
/// suspension, then unavailability, then raw capacity (K * N_Cmin > n * rounds);
/// anything left over is charged to the selector.
inline AuditReport end_of_training_audit(std::span<const ClientTrackerRecord> records, const SelectionConfig& cfg,
                                         std::uint32_t total_rounds) {
  AuditReport report;
  const bool capacity_short = static_cast<std::uint64_t>(cfg.total_clients) * cfg.min_selections >
                              static_cast<std::uint64_t>(cfg.per_round) * total_rounds;
  for (const auto& r : records) {
    ClientAudit a;
    a.client_id = r.client_id;
    a.times_selected = r.times_selected;
    a.below_min = r.times_selected < cfg.min_selections;
    a.above_max = r.times_selected > cfg.max_selections;
    if (a.below_min || a.above_max) {
      if (r.rounds_suspended > 0)
        a.cause = ViolationCause::suspension;
      else if (r.rounds_unavailable > 0)
        a.cause = ViolationCause::unavailability;
      else if (a.below_min && capacity_short)
        a.cause = ViolationCause::capacity;
      else
        a.cause = ViolationCause::selector;
    }
    report.lower_violations += a.below_min;
    report.upper_violations += a.above_max;
    report.selector_attributed += a.cause == ViolationCause::selector;
    report.clients.push_back(a);
  }
  return report;
}

}  // namespace fairequity

#endif  // FAIREQUITY_SELECTOR_HPP
