#include "shiftopt/hpo/hyperband.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "shiftopt/shift_quant.hpp"

namespace shiftopt {

HyperBandSchedule build_schedule(int min_fidelity, int max_fidelity, int eta) {
    if (min_fidelity < 1 || max_fidelity < min_fidelity || eta < 2) {
        std::ostringstream oss;
        oss << "build_schedule: invalid parameters (min " << min_fidelity << ", max "
            << max_fidelity << ", eta " << eta << ")";
        throw std::invalid_argument(oss.str());
    }

    // s_max = floor(log_eta(max/min)), computed in integers.
    int s_max = 0;
    long long span = min_fidelity;
    while (span * eta <= max_fidelity) {
        span *= eta;
        ++s_max;
    }

    HyperBandSchedule schedule;
    schedule.eta = eta;
    schedule.min_fidelity = min_fidelity;
    schedule.max_fidelity = max_fidelity;

    for (int s = s_max; s >= 0; --s) {
        // n_c = ceil((s_max+1)/(s+1) * eta^s), exact in integer arithmetic.
        long long eta_s = 1;
        for (int i = 0; i < s; ++i) eta_s *= eta;
        const long long n0 = ((s_max + 1) * eta_s + s) / (s + 1);

        HyperBandBracket bracket;
        long long n = n0;
        long long eta_i = 1;  // eta^i
        for (int i = 0; i <= s && n >= 1; ++i, eta_i *= eta) {
            // fidelity = round(max_f * eta^(i-s)) as an exact rational.
            const double f_real = static_cast<double>(max_fidelity) *
                                  static_cast<double>(eta_i) / static_cast<double>(eta_s);
            int f = static_cast<int>(round_half_even(f_real));
            f = std::max(f, min_fidelity);
            f = std::min(f, max_fidelity);
            bracket.rounds.push_back({static_cast<int>(n), f});
            n /= eta;
        }
        schedule.brackets.push_back(std::move(bracket));
    }

    // Construction sanity: cohorts strictly shrink, fidelities strictly grow,
    // final rounds run at max fidelity.
    for (const auto& bracket : schedule.brackets) {
        for (std::size_t i = 1; i < bracket.rounds.size(); ++i) {
            if (bracket.rounds[i].num_configs >= bracket.rounds[i - 1].num_configs ||
                bracket.rounds[i].fidelity <= bracket.rounds[i - 1].fidelity)
                throw std::logic_error("build_schedule: bracket rounds not strictly ordered");
        }
        if (bracket.rounds.back().fidelity != max_fidelity)
            throw std::logic_error("build_schedule: bracket does not end at max fidelity");
    }
    return schedule;
}

std::vector<std::size_t> promote(const std::vector<double>& scalars, int eta) {
    if (scalars.empty()) throw std::invalid_argument("promote: empty round results");
    if (eta < 2) throw std::invalid_argument("promote: eta must be >= 2");
    std::vector<std::size_t> order(scalars.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return scalars[a] < scalars[b]; });
    order.resize(scalars.size() / static_cast<std::size_t>(eta));
    std::sort(order.begin(), order.end());  // survivors keep submission order
    return order;
}

}  // namespace shiftopt
