#pragma once

#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <vector>

namespace fcrn {

/// A sampled functional covariate: values observed at increasing points of [0, 1].
struct FunctionalCurve {
    std::string name;
    std::vector<double> taus;
    std::vector<double> values;

    /// Throws data_error unless taus are strictly increasing inside [0, 1] with J >= 2.
    void validate() const;
};

/// Sentinel stored in missing tabular cells. Never read before imputation.
inline constexpr double kMissing = std::numeric_limits<double>::quiet_NaN();

struct SubjectRecord {
    std::string id;
    std::vector<double> x;
    std::vector<bool> missing_mask;
    std::vector<FunctionalCurve> curves;
    double time = 0.0;
    int cause = 0;  // 0 = censored

    bool event() const noexcept { return cause >= 1; }
    bool has_missing() const noexcept;
};

struct Dataset {
    std::vector<std::string> covariate_names;
    std::vector<std::string> signal_names;
    std::vector<SubjectRecord> subjects;

    std::size_t size() const noexcept { return subjects.size(); }
    bool empty() const noexcept { return subjects.empty(); }
    std::size_t num_covariates() const noexcept { return covariate_names.size(); }
    std::size_t num_signals() const noexcept { return signal_names.size(); }
    int max_cause() const noexcept;
    std::size_t missing_count() const noexcept;
    double max_time() const noexcept;

    /// Checks every record against the dataset shape (covariate count, curve names, causes).
    void validate(int num_causes) const;
    Dataset subset(std::span<const std::size_t> indices) const;
};

/// Equal-width cut points 0 = t_0 < t_1 < ... < t_L. Interval l is (t_{l-1}, t_l].
class TimeGrid {
public:
    TimeGrid() = default;
    TimeGrid(double width, int intervals);

    double width() const noexcept { return width_; }
    int intervals() const noexcept { return intervals_; }
    double cut(int l) const noexcept { return width_ * l; }
    double max_time() const noexcept { return cut(intervals_); }
    std::vector<double> cuts() const;

    bool operator==(const TimeGrid&) const = default;

private:
    double width_ = 1.0;
    int intervals_ = 1;
};

TimeGrid build_time_grid(double max_time, double width);

/// Smallest l with time <= t_l. Time 0 maps to interval 1.
int assign_interval(double time, const TimeGrid& grid);

/// Like assign_interval but times past the grid map to L + 1 instead of throwing.
int assign_interval_open(double time, const TimeGrid& grid);

enum class RowKind { CauseSpecific, Subdistribution };

struct PersonPeriodRow {
    std::size_t subject;
    int interval;
    int target;     // CSM: category 0..M; SDM: 0/1
    double weight;  // CSM: 1; SDM: w_it
};

struct PersonPeriodTable {
    RowKind kind = RowKind::CauseSpecific;
    int num_causes = 1;
    int target_cause = 0;  // SDM only
    std::vector<PersonPeriodRow> rows;

    std::size_t size() const noexcept { return rows.size(); }
    /// Number of rows per interval 1..L (index 0 unused), i.e. the risk-set sizes.
    std::vector<std::size_t> risk_set_sizes(int intervals) const;
};

PersonPeriodTable augment_cause_specific(const Dataset& ds, const TimeGrid& grid, int num_causes);

/// Kaplan-Meier estimate of P(C > t_l) for l = 0..L, floored at kCensoringFloor.
struct CensoringSurvival {
    std::vector<double> g;

    double at(int l) const;
    int intervals() const noexcept { return static_cast<int>(g.size()) - 1; }
};

inline constexpr double kCensoringFloor = 1e-4;

CensoringSurvival censoring_survival(const Dataset& ds, const TimeGrid& grid);

/// IPCW weight of subject (event interval `subject_interval`, observed cause) at row t.
double subdistribution_weight(int t, int subject_interval, int cause, int target_cause,
                              const CensoringSurvival& g);

/// Rows t = 1..L-1 with IPCW weights; zero-weight rows are dropped.
PersonPeriodTable augment_subdistribution(const Dataset& ds, const TimeGrid& grid, int target_cause,
                                          const CensoringSurvival& g);

}  // namespace fcrn
