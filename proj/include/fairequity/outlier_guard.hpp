#pragma once
#ifndef FAIREQUITY_OUTLIER_GUARD_HPP
#define FAIREQUITY_OUTLIER_GUARD_HPP

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "fairequity/error.hpp"
#include "fairequity/selector.hpp"

namespace fairequity {

struct GuardConfig {
  double accuracy_threshold_pct = 5.0;  // Acc_th, relative drop vs previous round
  double loss_threshold_pct = 5.0;      // Loss_th, relative rise vs previous round
  std::uint32_t qualifying_rounds = 3;  // X_n, cumulative
  std::uint32_t suspension_rounds = 10; // ST_n
  bool decay_on_clean = false;          // reset counts of participants in a clean round

  void validate() const {
    auto fail = [](const std::string& msg) { throw Error("outlier_guard", "invalid GuardConfig: " + msg); };
    if (!(accuracy_threshold_pct > 0.0)) fail("Acc_th must be > 0");
    if (!(loss_threshold_pct > 0.0)) fail("Loss_th must be > 0");
    if (qualifying_rounds < 1) fail("X_n must be >= 1");
    if (suspension_rounds < 1) fail("ST_n must be >= 1");
  }
};

/// Global metrics observed after aggregating round `round_k`.
struct PerformanceEvent {
  Round round_k = 0;
  double accuracy = 0.0;
  double loss = 0.0;
  std::vector<ClientId> participants;
};

enum class FlagReason { accuracy, loss };

inline const char* to_string(FlagReason r) { return r == FlagReason::accuracy ? "ACC_TH" : "LOSS_TH"; }

struct FlagEntry {
  Round round_k = 0;
  FlagReason reason = FlagReason::accuracy;
};

struct ClientSuspicion {
  std::uint32_t qualifying_round_count = 0;
  std::optional<Round> suspension_end;
  std::vector<FlagEntry> flag_history;
  std::uint32_t times_suspended = 0;
};

struct Suspension {
  ClientId client_id = 0;
  Round until = 0;
  FlagReason reason = FlagReason::accuracy;
};

/// Outcome of one record_round call.
struct GuardVerdict {
  std::optional<double> accuracy_delta;  // absolute, current minus previous
  std::optional<double> loss_delta;
  std::optional<FlagReason> reason;      // set iff the round qualified
  std::vector<Suspension> newly_suspended;
};

class SuspicionLedger {
 public:
  explicit SuspicionLedger(std::uint32_t total_clients) : clients_(total_clients) {}

  std::size_t size() const { return clients_.size(); }

  const ClientSuspicion& at(ClientId id) const {
    if (id >= clients_.size()) throw Error("outlier_guard", "unknown client " + std::to_string(id));
    return clients_[id];
  }

  std::optional<Round> last_round() const { return last_round_; }

  /// True iff the client is serving a suspension that covers `round_k`
  /// (end round inclusive).
  bool is_suspended(ClientId id, Round round_k) const {
    const auto& c = at(id);
    return c.suspension_end.has_value() && round_k <= *c.suspension_end;
  }

  Round suspension_end_or_zero(ClientId id) const { return at(id).suspension_end.value_or(0); }

  /// Feeds the metrics of one round. The first event only sets the baseline;
  /// later events must arrive in consecutive round order.
  GuardVerdict record_round(const PerformanceEvent& event, const GuardConfig& cfg) {
    cfg.validate();
    for (ClientId id : event.participants) at(id);
    if (last_round_ && event.round_k != *last_round_ + 1)
      throw Error("outlier_guard", "event for round " + std::to_string(event.round_k) + " after round " +
                                       std::to_string(*last_round_));

    GuardVerdict verdict;
    if (last_round_) {
      verdict.accuracy_delta = event.accuracy - prev_accuracy_;
      verdict.loss_delta = event.loss - prev_loss_;
      const bool acc_hit =
          prev_accuracy_ > 0.0 && *verdict.accuracy_delta / prev_accuracy_ <= -cfg.accuracy_threshold_pct / 100.0;
      const bool loss_hit = prev_loss_ > 0.0 && *verdict.loss_delta / prev_loss_ >= cfg.loss_threshold_pct / 100.0;
      if (acc_hit)
        verdict.reason = FlagReason::accuracy;
      else if (loss_hit)
        verdict.reason = FlagReason::loss;
    }

    if (verdict.reason) {
      for (ClientId id : event.participants) {
        auto& c = clients_[id];
        ++c.qualifying_round_count;
        c.flag_history.push_back({event.round_k, *verdict.reason});
        if (c.qualifying_round_count >= cfg.qualifying_rounds) {
          c.suspension_end = event.round_k + cfg.suspension_rounds;
          c.qualifying_round_count = 0;
          ++c.times_suspended;
          verdict.newly_suspended.push_back({id, *c.suspension_end, *verdict.reason});
        }
      }
    } else if (cfg.decay_on_clean && last_round_) {
      for (ClientId id : event.participants) clients_[id].qualifying_round_count = 0;
    }

    last_round_ = event.round_k;
    prev_accuracy_ = event.accuracy;
    prev_loss_ = event.loss;
    return verdict;
  }

 private:
  std::vector<ClientSuspicion> clients_;
  std::optional<Round> last_round_;
  double prev_accuracy_ = 0.0;
  double prev_loss_ = 0.0;
};

inline bool is_suspended(const SuspicionLedger& ledger, ClientId id, Round round_k) {
  return ledger.is_suspended(id, round_k);
}

}  // namespace fairequity

#endif  // FAIREQUITY_OUTLIER_GUARD_HPP
