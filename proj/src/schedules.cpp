#include "sparseshot/schedules.hpp"

#include <algorithm>
#include <cctype>
#include <string>

#include "sparseshot/errors.hpp"
#include "sparseshot/losses.hpp"

namespace sparseshot {

std::string_view to_string(ScheduleKind k) {
    switch (k) {
        case ScheduleKind::Fixed: return "fixed";
        case ScheduleKind::Linear: return "linear";
        case ScheduleKind::Sigmoid: return "sigmoid";
        case ScheduleKind::LiteralSigmoid: return "literal-sigmoid";
    }
    return "?";
}

ScheduleKind parse_schedule_kind(std::string_view name) {
    std::string key;
    for (char c : name) key.push_back(c == '_' ? '-' : static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    for (auto k : {ScheduleKind::Fixed, ScheduleKind::Linear, ScheduleKind::Sigmoid, ScheduleKind::LiteralSigmoid})
        if (key == to_string(k)) return k;
    throw InvalidConfig("unknown schedule '" + std::string(name) + "'");
}

void ScheduleSpec::validate() const {
    if (!(rho_max > 0.0 && rho_max <= 1.0)) throw InvalidConfig("rho_max must lie in (0,1]");
    if (total_steps < 1) throw InvalidConfig("total_steps must be >= 1");
    if (!(steepness > 0.0)) throw InvalidConfig("steepness must be > 0");
}

double threshold_at(const ScheduleSpec& spec, std::size_t step) {
    spec.validate();
    if (step > spec.total_steps)
        throw RangeError("step " + std::to_string(step) + " beyond schedule length " +
                         std::to_string(spec.total_steps));
    const double progress = static_cast<double>(step) / static_cast<double>(spec.total_steps);
    double theta = 0.0;
    switch (spec.kind) {
        case ScheduleKind::Fixed: theta = spec.rho_max; break;
        case ScheduleKind::Linear: theta = spec.rho_max * progress; break;
        case ScheduleKind::Sigmoid:
            theta = spec.rho_max * sigmoid(spec.steepness * progress - spec.steepness / 2.0);
            break;
        case ScheduleKind::LiteralSigmoid: theta = sigmoid(spec.rho_max * progress); break;
    }
    return std::clamp(theta, 0.0, 1.0);
}

}  // namespace sparseshot
