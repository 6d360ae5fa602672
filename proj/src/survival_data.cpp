#include "fcrn/survival_data.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "fcrn/error.hpp"

namespace fcrn {

void FunctionalCurve::validate() const {
    if (taus.size() != values.size()) {
        throw data_error("curve '" + name + "': taus and values differ in length");
    }
    if (taus.size() < 2) {
        throw data_error("curve '" + name + "': needs at least 2 sample points");
    }
    for (std::size_t j = 0; j < taus.size(); ++j) {
        if (!(taus[j] >= 0.0 && taus[j] <= 1.0)) {
            throw data_error("curve '" + name + "': tau outside [0, 1]");
        }
        if (j > 0 && !(taus[j] > taus[j - 1])) {
            throw data_error("curve '" + name + "': taus not strictly increasing");
        }
        if (!std::isfinite(values[j])) {
            throw data_error("curve '" + name + "': non-finite value");
        }
    }
}

bool SubjectRecord::has_missing() const noexcept {
    return std::find(missing_mask.begin(), missing_mask.end(), true) != missing_mask.end();
}

int Dataset::max_cause() const noexcept {
    int m = 0;
    for (const auto& s : subjects) m = std::max(m, s.cause);
    return m;
}

std::size_t Dataset::missing_count() const noexcept {
    std::size_t n = 0;
    for (const auto& s : subjects) n += std::count(s.missing_mask.begin(), s.missing_mask.end(), true);
    return n;
}

double Dataset::max_time() const noexcept {
    double t = 0.0;
    for (const auto& s : subjects) t = std::max(t, s.time);
    return t;
}

void Dataset::validate(int num_causes) const {
    const std::size_t p = num_covariates();
    for (const auto& s : subjects) {
        if (s.x.size() != p || s.missing_mask.size() != p) {
            throw data_error("subject '" + s.id + "': expected " + std::to_string(p) + " covariates");
        }
        if (!(s.time >= 0.0) || !std::isfinite(s.time)) {
            throw data_error("subject '" + s.id + "': time must be finite and nonnegative");
        }
        if (s.cause < 0 || s.cause > num_causes) {
            throw data_error("subject '" + s.id + "': cause " + std::to_string(s.cause) +
                             " outside 0.." + std::to_string(num_causes));
        }
        for (std::size_t j = 0; j < p; ++j) {
            if (!s.missing_mask[j] && !std::isfinite(s.x[j])) {
                throw data_error("subject '" + s.id + "': non-finite covariate " + covariate_names[j]);
            }
        }
        if (s.curves.size() != num_signals()) {
            throw data_error("subject '" + s.id + "': expected " + std::to_string(num_signals()) +
                             " functional curves");
        }
        for (std::size_t k = 0; k < s.curves.size(); ++k) {
            if (s.curves[k].name != signal_names[k]) {
                throw data_error("subject '" + s.id + "': curve order mismatch at " + signal_names[k]);
            }
            s.curves[k].validate();
        }
    }
}

Dataset Dataset::subset(std::span<const std::size_t> indices) const {
    Dataset out;
    out.covariate_names = covariate_names;
    out.signal_names = signal_names;
    out.subjects.reserve(indices.size());
    for (auto i : indices) out.subjects.push_back(subjects.at(i));
    return out;
}

TimeGrid::TimeGrid(double width, int intervals) : width_(width), intervals_(intervals) {
    if (!(width > 0.0) || intervals < 1) throw invalid_argument("time grid needs width > 0 and L >= 1");
}

std::vector<double> TimeGrid::cuts() const {
    std::vector<double> c(intervals_ + 1);
    for (int l = 0; l <= intervals_; ++l) c[l] = cut(l);
    return c;
}

TimeGrid build_time_grid(double max_time, double width) {
    if (!(max_time > 0.0) || !(width > 0.0)) {
        throw invalid_argument("build_time_grid: max_time and width must be positive");
    }
    int l = std::max(1, static_cast<int>(std::ceil(max_time / width)));
    while (l > 1 && width * (l - 1) >= max_time) --l;
    while (width * l < max_time) ++l;
    return TimeGrid(width, l);
}

int assign_interval_open(double time, const TimeGrid& grid) {
    if (!(time >= 0.0)) throw out_of_range("assign_interval: negative or NaN time");
    if (time > grid.max_time()) return grid.intervals() + 1;
    int l = std::max(1, static_cast<int>(std::ceil(time / grid.width())));
    l = std::min(l, grid.intervals());
    while (l > 1 && time <= grid.cut(l - 1)) --l;
    while (time > grid.cut(l)) ++l;
    return l;
}

int assign_interval(double time, const TimeGrid& grid) {
    const int l = assign_interval_open(time, grid);
    if (l > grid.intervals()) {
        throw out_of_range("assign_interval: time " + std::to_string(time) + " beyond grid end " +
                           std::to_string(grid.max_time()));
    }
    return l;
}

std::vector<std::size_t> PersonPeriodTable::risk_set_sizes(int intervals) const {
    std::vector<std::size_t> sizes(intervals + 1, 0);
    for (const auto& r : rows) {
        if (r.interval >= 1 && r.interval <= intervals) ++sizes[r.interval];
    }
    return sizes;
}

PersonPeriodTable augment_cause_specific(const Dataset& ds, const TimeGrid& grid, int num_causes) {
    PersonPeriodTable table;
    table.kind = RowKind::CauseSpecific;
    table.num_causes = num_causes;
    for (std::size_t i = 0; i < ds.size(); ++i) {
        const auto& s = ds.subjects[i];
        if (s.cause < 0 || s.cause > num_causes) {
            throw invalid_argument("augment_cause_specific: subject '" + s.id + "' has cause " +
                                   std::to_string(s.cause) + " > M = " + std::to_string(num_causes));
        }
        const int last = assign_interval(s.time, grid);
        for (int t = 1; t < last; ++t) table.rows.push_back({i, t, 0, 1.0});
        table.rows.push_back({i, last, s.cause, 1.0});
    }
    return table;
}

double CensoringSurvival::at(int l) const {
    if (l < 0) return 1.0;
    if (l >= static_cast<int>(g.size())) return g.back();
    return g[l];
}

CensoringSurvival censoring_survival(const Dataset& ds, const TimeGrid& grid) {
    const int L = grid.intervals();
    // Subjects past the grid end stay at risk throughout.
    std::vector<std::size_t> at_risk(L + 2, 0), censored(L + 2, 0);
    for (const auto& s : ds.subjects) {
        const int l = assign_interval_open(s.time, grid);
        ++at_risk[std::min(l, L + 1)];
        if (!s.event() && l <= L) ++censored[l];
    }
    // at_risk[l] currently counts subjects whose last interval is l; turn into |{l_i >= l}|.
    for (int l = L; l >= 1; --l) at_risk[l] += at_risk[l + 1];

    CensoringSurvival out;
    out.g.assign(L + 1, 1.0);
    double g = 1.0;
    for (int l = 1; l <= L; ++l) {
        if (at_risk[l] > 0) {
            g *= 1.0 - static_cast<double>(censored[l]) / static_cast<double>(at_risk[l]);
        }
        out.g[l] = std::max(g, kCensoringFloor);
    }
    return out;
}

double subdistribution_weight(int t, int subject_interval, int cause, int target_cause,
                              const CensoringSurvival& g) {
    const bool at_risk = t <= subject_interval;
    const bool competing = subject_interval <= t - 1 && cause != 0 && cause != target_cause;
    if (!at_risk && !competing) return 0.0;
    return g.at(t - 1) / g.at(std::min(subject_interval, t) - 1);
}

PersonPeriodTable augment_subdistribution(const Dataset& ds, const TimeGrid& grid, int target_cause,
                                          const CensoringSurvival& g) {
    if (target_cause < 1) throw invalid_argument("augment_subdistribution: target cause must be >= 1");
    PersonPeriodTable table;
    table.kind = RowKind::Subdistribution;
    table.num_causes = std::max(target_cause, ds.max_cause());
    table.target_cause = target_cause;
    const int L = grid.intervals();
    for (std::size_t i = 0; i < ds.size(); ++i) {
        const auto& s = ds.subjects[i];
        const int li = assign_interval(s.time, grid);
        for (int t = 1; t <= L - 1; ++t) {
            const double w = subdistribution_weight(t, li, s.cause, target_cause, g);
            if (w == 0.0) continue;
            const int y = (t == li && s.cause == target_cause) ? 1 : 0;
            table.rows.push_back({i, t, y, w});
        }
    }
    return table;
}

}  // namespace fcrn
