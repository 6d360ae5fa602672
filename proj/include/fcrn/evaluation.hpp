#pragma once

#include <span>
#include <vector>

#include "fcrn/survival_data.hpp"

namespace fcrn {

/// Brier score curve over evaluation times with its trapezoidal average.
struct ScoreCurve {
    std::vector<double> times;
    std::vector<double> scores;
    double ibs = 0.0;
};

/// Uncensored Brier score for cause m at interval index l:
/// mean over subjects of (1{interval(T_i) <= l, R_i = m} - F_i)^2.
/// `cif_at_l[i]` is subject i's predicted F_m(t_l).
double brier(int l, std::span<const double> cif_at_l, const Dataset& ds, const TimeGrid& grid, int cause);

/// IPCW Brier score. Subjects still at risk after t_l contribute (0 - F)^2 / G(l); subjects with an
/// event by t_l contribute (1{R_i = m} - F)^2 / G(interval(T_i) - 1); subjects censored by t_l
/// contribute 0. Normalised by N.
double brier_ipcw(int l, std::span<const double> cif_at_l, const Dataset& ds, const TimeGrid& grid, int cause,
                  const CensoringSurvival& g);

/// Trapezoidal integral of the curve divided by (t_max - t_0). Also stores the result in curve.ibs.
double ibs(ScoreCurve& curve);
double ibs(std::span<const double> times, std::span<const double> scores);

/// BS^c at cuts t_l in [t0, t_max] for one cause. `cif[i][l]` is subject i's F_m(t_l), l = 0..L.
ScoreCurve score_curve(const std::vector<std::vector<double>>& cif, const Dataset& ds, const TimeGrid& grid,
                       int cause, const CensoringSurvival& g, double t0, double t_max);

/// Running trapezoidal average of the curve up to each point (first entry equals the first score).
std::vector<double> cumulative_ibs(const ScoreCurve& curve);

}  // namespace fcrn
