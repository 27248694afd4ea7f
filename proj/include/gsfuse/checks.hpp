#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "gsfuse/grad_check.hpp"
#include "gsfuse/model.hpp"
#include "gsfuse/trainer.hpp"

namespace gsfuse::checks {

/// Scalar losses whose parameter gradients are checked end to end.
enum class LossTerm : std::uint8_t { Forecast, Ctr, Tok, Gate, Total };
inline constexpr std::array<LossTerm, 5> kLossTerms = {LossTerm::Forecast, LossTerm::Ctr, LossTerm::Tok,
                                                       LossTerm::Gate, LossTerm::Total};

std::string_view term_name(LossTerm term);  // forecast, ctr, tok, gate, total
LossTerm term_from_name(std::string_view name);

/// Micro model: F = 16, H = L = 3, one decoder block, two heads.
ModelConfig micro_model();

struct LossCheck {
  LossTerm term;
  train::Stage stage;
  std::uint64_t seed;
  GradCheckReport report;
};

/// Options the checks are run with by default: step 1e-4, 8 coordinates per tensor.
GradCheckOptions default_options();

/// Central differences (fourth order) over every parameter of a micro model on a batch of
/// `batch` synthetic instances. Stop-gradient points (the gate inputs and the
/// Granger utility) are held at their base-point values, matching what the
/// analytic gradient treats as constant. The forecast term is checked in the
/// given stage; the others only exist in the joint stage.
LossCheck check_loss(LossTerm term, train::Stage stage, std::uint64_t seed, std::size_t batch = 2,
                     const GradCheckOptions& options = default_options());

/// Every term (forecast under all three stages) over `seeds` seeds starting at first_seed.
std::vector<LossCheck> check_all(std::size_t seeds, std::uint64_t first_seed = 1,
                                 const GradCheckOptions& options = default_options());

}  // namespace gsfuse::checks
