#ifndef MAADV_ATTACK_RESULT_HPP
#define MAADV_ATTACK_RESULT_HPP

#include <cstddef>
#include <optional>
#include <vector>

#include "event_core.hpp"

namespace maadv {

struct DistanceMetrics {
  double chamfer = 0.0;
  double hausdorff = 0.0;
  double l2 = 0.0;

  friend bool operator==(const DistanceMetrics&, const DistanceMetrics&) = default;
};

struct LambdaStep {
  double lambda = 0.0;
  double lo = 0.0;
  double hi = 0.0;
  bool success = false;
  double chamfer = 0.0;  // best successful chamfer at this lambda, 0 when unsuccessful

  friend bool operator==(const LambdaStep&, const LambdaStep&) = default;
};

// One successful iterate seen during the search (kept only when requested).
struct CandidateRecord {
  std::size_t binary_step = 0;
  std::size_t iteration = 0;
  double chamfer = 0.0;

  friend bool operator==(const CandidateRecord&, const CandidateRecord&) = default;
};

struct AttackResult {
  std::optional<EventStream> best_adv;
  bool success = false;
  int label = 0;
  DistanceMetrics metrics;
  std::vector<LambdaStep> lambda_trace;
  std::size_t iterations_used = 0;
  std::vector<CandidateRecord> candidates;

  friend bool operator==(const AttackResult&, const AttackResult&) = default;
};

}  // namespace maadv

#endif  // MAADV_ATTACK_RESULT_HPP
