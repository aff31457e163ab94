#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sparseshot/losses.hpp"

namespace sparseshot {

/// max(1e-6 absolute, 1e-4 relative) agreement between analytic and numeric derivatives.
bool gradients_agree(double analytic, double numeric, double abs_tol = 1e-6, double rel_tol = 1e-4);

struct GradcheckResult {
    std::string name;
    std::size_t checked = 0;
    std::size_t skipped = 0;  ///< coordinates whose +-h probe crossed a kink or gate
    std::size_t failures = 0;
    double worst_abs_error = 0.0;
    bool passed() const noexcept { return failures == 0 && checked > 0; }
};

/// Central differences (h = 1e-5) of batch_loss w.r.t. every logit over `trials`
/// random (logits, labels, membership, theta) draws.
GradcheckResult check_loss_gradients(const LossParams& params, std::size_t trials, std::uint64_t seed,
                                     std::size_t side = 4);

/// Central differences of batch_loss(forward(params)) w.r.t. every scorer parameter.
GradcheckResult check_model_gradients(const LossParams& params, std::uint64_t seed, std::size_t side = 12,
                                      std::size_t hidden = 8, std::size_t kernel = 5);

/// Every loss variant through both checks.
std::vector<GradcheckResult> run_gradcheck_suite(std::size_t trials, std::uint64_t seed);

}  // namespace sparseshot
