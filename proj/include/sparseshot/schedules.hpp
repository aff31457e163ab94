#pragma once

#include <cstddef>
#include <string_view>

namespace sparseshot {

enum class ScheduleKind { Fixed, Linear, Sigmoid, LiteralSigmoid };

std::string_view to_string(ScheduleKind k);
/// fixed, linear, sigmoid, literal-sigmoid. Throws InvalidConfig.
ScheduleKind parse_schedule_kind(std::string_view name);

/// Trajectory of the exclusivity threshold over optimizer steps.
///
///   Fixed:          theta = rho_max
///   Linear:         theta = rho_max * s/T
///   Sigmoid:        theta = rho_max * sigmoid(k * s/T - k/2)   (runs from ~0 to ~rho_max)
///   LiteralSigmoid: theta = sigmoid(rho_max * s/T)             (runs from 0.5 to sigmoid(rho_max))
struct ScheduleSpec {
    ScheduleKind kind = ScheduleKind::Sigmoid;
    double rho_max = 0.75;
    double steepness = 12.0;
    std::size_t total_steps = 1;

    void validate() const;
};

/// Threshold at optimizer step `step` in [0, total_steps], clamped to [0,1].
/// Throws RangeError when step > total_steps.
double threshold_at(const ScheduleSpec& spec, std::size_t step);

}  // namespace sparseshot
