#include "fcrn/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>

#include "fcrn/error.hpp"

namespace fcrn {

namespace {

void check_sizes(std::span<const double> cif_at_l, const Dataset& ds) {
    if (cif_at_l.size() != ds.size()) throw invalid_argument("brier: one prediction per subject required");
}

}  // namespace

double brier(int l, std::span<const double> cif_at_l, const Dataset& ds, const TimeGrid& grid, int cause) {
    check_sizes(cif_at_l, ds);
    if (ds.empty()) return 0.0;
    double total = 0.0;
    for (std::size_t i = 0; i < ds.size(); ++i) {
        const auto& s = ds.subjects[i];
        const bool happened = assign_interval_open(s.time, grid) <= l && s.cause == cause;
        const double d = (happened ? 1.0 : 0.0) - cif_at_l[i];
        total += d * d;
    }
    return total / static_cast<double>(ds.size());
}

double brier_ipcw(int l, std::span<const double> cif_at_l, const Dataset& ds, const TimeGrid& grid, int cause,
                  const CensoringSurvival& g) {
    check_sizes(cif_at_l, ds);
    if (ds.empty()) return 0.0;
    bool clamped = false;
    auto weight_of = [&](int k) {
        double v = g.at(k);
        if (v < kCensoringFloor) {
            v = kCensoringFloor;
            clamped = true;
        }
        return v;
    };
    double total = 0.0;
    for (std::size_t i = 0; i < ds.size(); ++i) {
        const auto& s = ds.subjects[i];
        const int li = assign_interval_open(s.time, grid);
        const double f = cif_at_l[i];
        if (li > l) {
            total += f * f / weight_of(l);
        } else if (s.event()) {
            const double d = (s.cause == cause ? 1.0 : 0.0) - f;
            total += d * d / weight_of(li - 1);
        }
    }
    if (clamped) std::cerr << "warning: censoring survival below floor; clamped to " << kCensoringFloor << "\n";
    return total / static_cast<double>(ds.size());
}

double ibs(std::span<const double> times, std::span<const double> scores) {
    if (times.size() != scores.size()) throw invalid_argument("ibs: times and scores differ in length");
    if (times.size() < 2) throw invalid_argument("ibs: need at least 2 evaluation times");
    const double span = times.back() - times.front();
    if (!(span > 0.0)) throw invalid_argument("ibs: t_max must exceed t_0");
    double area = 0.0;
    for (std::size_t k = 1; k < times.size(); ++k) area += 0.5 * (scores[k] + scores[k - 1]) * (times[k] - times[k - 1]);
    return area / span;
}

double ibs(ScoreCurve& curve) {
    curve.ibs = ibs(curve.times, curve.scores);
    return curve.ibs;
}

ScoreCurve score_curve(const std::vector<std::vector<double>>& cif, const Dataset& ds, const TimeGrid& grid, int cause,
                       const CensoringSurvival& g, double t0, double t_max) {
    if (!(t_max > t0)) throw invalid_argument("score_curve: t_max must exceed t_0");
    if (t_max > grid.max_time() + 1e-9 * grid.width()) throw out_of_range("score_curve: horizon beyond the prediction grid");
    if (cif.size() != ds.size()) throw invalid_argument("score_curve: one CIF per subject required");
    ScoreCurve curve;
    std::vector<double> at_l(ds.size());
    for (int l = 0; l <= grid.intervals(); ++l) {
        const double t = grid.cut(l);
        if (t < t0 - 1e-12 || t > t_max + 1e-9 * grid.width()) continue;
        for (std::size_t i = 0; i < ds.size(); ++i) at_l[i] = cif[i].at(static_cast<std::size_t>(l));
        curve.times.push_back(t);
        curve.scores.push_back(brier_ipcw(l, at_l, ds, grid, cause, g));
    }
    ibs(curve);
    return curve;
}

std::vector<double> cumulative_ibs(const ScoreCurve& curve) {
    std::vector<double> out(curve.times.size(), 0.0);
    if (curve.times.empty()) return out;
    out[0] = curve.scores[0];
    double area = 0.0;
    for (std::size_t k = 1; k < curve.times.size(); ++k) {
        area += 0.5 * (curve.scores[k] + curve.scores[k - 1]) * (curve.times[k] - curve.times[k - 1]);
        out[k] = area / (curve.times[k] - curve.times[0]);
    }
    return out;
}

}  // namespace fcrn
