#pragma once

#include "latflow/heights.hpp"
#include "latflow/lattice.hpp"
#include "latflow/mc.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace latflow {

struct EscapeConfig {
    Dimensions dims{1, 1};
    double t = 1.0;
    int N = 1;
    double delta = 1.0;
    double M = 10.0;          // Q = {tilde_alpha <= M}; infinity keeps every point
    double resolution = 0.0;  // cell side; 0 means e^{-(m+n)tN}
    std::uint64_t mc_samples = 0; // used when the full grid is too large; 0 forbids Monte Carlo
    RngSpec rng;
    std::optional<HeightFunction> height; // default_height(dims, t) when empty

    void validate() const;
    double cell_side() const;
    HeightFunction height_function() const;
    nlohmann::json to_json() const;
};

/// Fraction of l in 1..N with tilde_alpha(g_{tl} u_s x0) > M.
double escape_fraction(const Lattice& x0, const Matrix& s, const EscapeConfig& cfg);

inline constexpr double kFullGridLimit = 1e8;

struct CellSurvey {
    std::string mode;          // "full-grid" or "monte-carlo"
    double resolution = 0.0;   // requested side r
    std::int64_t per_axis = 0; // ceil(2 / r) cells along each axis
    double total = 0.0;        // per_axis^{mn} cells
    double occupied = 0.0;     // cell count; for Monte Carlo, escaping fraction times total
    std::optional<double> occupied_std_error;
    std::uint64_t samples = 0;
    double c_x = 1.0;
    double bound = 0.0;        // C(x) t^{3N} e^{(m+n-delta) mn t N}
    double slack = 1.0;        // 2^{mn}, cubes versus balls
    bool pass = false;         // occupied <= bound * slack

    nlohmann::json to_json() const;
};

/// Covering count of Z_x(Q, N, t, delta) over (-1, 1)^{mn} with one probe per
/// cell center, or uniform probes when the grid exceeds kFullGridLimit.
CellSurvey survey(const Lattice& x0, const EscapeConfig& cfg);

void write_survey_csv(std::ostream& out, const std::vector<CellSurvey>& rows);

struct DimensionEstimate {
    std::vector<int> ladder; // N values
    std::vector<double> resolutions;
    std::vector<double> counts;
    double fitted_dim = 0.0; // clamped to [0, mn]
    double raw_slope = 0.0;
    bool empty = false;      // fewer than two nonzero counts
    double theory = 0.0;     // (m+n-delta) mn/(m+n) + 3 log t / ((m+n) t)
    std::vector<CellSurvey> surveys;

    nlohmann::json to_json() const;
    void write_csv(std::ostream& out) const;
};

/// Least-squares slope of log count against log(1/r) with r = e^{-(m+n)tN}
/// over the ladder of N (at least three values).
DimensionEstimate dimension_estimate(const Lattice& x0, const EscapeConfig& cfg, const std::vector<int>& ladder);

struct DimensionBound {
    std::int64_t num = 0;
    std::int64_t den = 1;
    double value = 0.0;
    nlohmann::json to_json() const;
};

/// mn - delta mn/(m+n) as a reduced fraction, delta = delta_num/delta_den in (0, 1].
DimensionBound theoretical_bound(const Dimensions& dims, std::int64_t delta_num, std::int64_t delta_den);

} // namespace latflow
