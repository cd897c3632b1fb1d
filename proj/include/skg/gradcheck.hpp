#pragma once

// Central-difference check of the full model gradient at toy sizes.

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "skg/model.hpp"

namespace skg {

struct GradCheckOptions {
  std::size_t embed_dim = 6;
  std::size_t hidden_dim = 8;
  std::size_t gcn_layers = 3;
  std::size_t num_labels = 4;
  std::size_t nodes = 5;
  FusionMode fusion = FusionMode::Concat;
  Nonlinearity nonlinearity = Nonlinearity::Relu;
  HeadKind head = HeadKind::Softmax;
  bool trainable_embeddings = false;
  std::uint64_t seed = 0;
  double eps = 1e-5;
  double tolerance = 1e-4;
  // Relative errors are taken against max(|analytic|, |numeric|, floor).
  double floor = 1e-6;
  // Corrupts one backward rule (testing the checker itself).
  std::optional<Op> fault;
  double fault_scale = 1.5;
};

struct GroupResult {
  std::string name;  // parameter name
  std::size_t scalars = 0;
  double max_rel_error = 0.0;
  bool passed = true;
};

struct GradCheckReport {
  std::string fusion;
  std::vector<GroupResult> groups;

  bool passed() const;
  double max_rel_error() const;
};

GradCheckReport gradient_check(const GradCheckOptions& options);

// fusion,group,scalars,max_rel_error,status
void write_gradcheck_report(std::ostream& out, const std::vector<GradCheckReport>& reports);

}  // namespace skg
