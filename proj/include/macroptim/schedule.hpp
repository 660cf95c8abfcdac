#pragma once

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace macroptim {

enum class ScheduleKind { constant, linear_warmup_cosine };

inline ScheduleKind schedule_kind_from_string(const std::string &name) {
    if (name == "constant") return ScheduleKind::constant;
    if (name == "linear_warmup_cosine") return ScheduleKind::linear_warmup_cosine;
    throw std::invalid_argument("unknown schedule kind '" + name + "'");
}

struct LrSchedule {
    ScheduleKind kind = ScheduleKind::constant;
    double base_lr = 0.01;
    long warmup_steps = 0;
    long total_steps = 1;
    double final_lr_ratio = 1.0;

    void validate() const {
        if (!(base_lr > 0.0)) throw std::invalid_argument("base_lr must be positive");
        if (kind == ScheduleKind::linear_warmup_cosine) {
            if (warmup_steps > total_steps) {
                throw std::invalid_argument("warmup_steps must not exceed total_steps");
            }
            if (!(final_lr_ratio > 0.0) || final_lr_ratio > 1.0) {
                throw std::invalid_argument("final_lr_ratio must lie in (0, 1]");
            }
        }
    }
};

// Linear ramp to base_lr over the warmup, cosine from base_lr down to
// base_lr * final_lr_ratio over the remainder. The first warmup step uses
// base_lr/warmup_steps rather than 0 so that every step moves.
inline double lr_at(const LrSchedule &schedule, long t) {
    if (t >= schedule.total_steps && schedule.kind != ScheduleKind::constant) {
        throw std::invalid_argument("lr_at: step " + std::to_string(t) +
                                    " is past total_steps " + std::to_string(schedule.total_steps));
    }
    if (schedule.kind == ScheduleKind::constant) return schedule.base_lr;
    if (t < schedule.warmup_steps) {
        const long tt = t < 1 ? 1 : t;
        return schedule.base_lr * static_cast<double>(tt) / schedule.warmup_steps;
    }
    const double final_lr = schedule.base_lr * schedule.final_lr_ratio;
    const long span = schedule.total_steps - schedule.warmup_steps;
    if (span <= 0) return schedule.base_lr;
    const double phase = static_cast<double>(t - schedule.warmup_steps) / span;
    return final_lr + (schedule.base_lr - final_lr) * 0.5 * (1.0 + std::cos(std::numbers::pi * phase));
}

} // namespace macroptim
