#pragma once

#include <stdexcept>
#include <string>

namespace alloflow {

enum class ScheduleKind { linear };

struct ScheduleCoeffs {
    double a;   // data coefficient a_t
    double b;   // noise coefficient b_t
    double da;  // a'_t
    double db;  // b'_t
};

// Flow coefficients over t in [0,1]; t=0 is data, t=1 is noise
// (a_0 = 1, b_0 = 0, a_1 = 0, b_1 = 1).
struct Schedule {
    ScheduleKind kind = ScheduleKind::linear;

    ScheduleCoeffs eval(double t) const {
        if (!(t >= 0.0 && t <= 1.0))
            throw std::invalid_argument("Schedule::eval: t=" + std::to_string(t) + " outside [0,1]");
        switch (kind) {
            case ScheduleKind::linear:
                return {1.0 - t, t, -1.0, 1.0};
        }
        throw std::logic_error("Schedule::eval: unknown kind");
    }

    // schedule signal-to-noise ratio a_t^2 / b_t^2
    double snr(double t) const {
        const ScheduleCoeffs c = eval(t);
        if (c.b == 0.0) throw std::invalid_argument("Schedule::snr: undefined at b_t = 0");
        return (c.a * c.a) / (c.b * c.b);
    }
};

}  // namespace alloflow
