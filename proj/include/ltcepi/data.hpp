#pragma once

#include <array>
#include <string>
#include <utility>
#include <vector>

#include "ltcepi/types.hpp"

namespace ltcepi {

/// One reported time series on consecutive integer days starting at t_start.
/// Values may be negative (reported daily counts sometimes are).
struct RawSeries {
  std::string name;
  int t_start = 0;
  Eigen::VectorXd values;

  int t_end() const { return t_start + static_cast<int>(values.size()) - 1; }
  double at_day(int t) const {
    int i = t - t_start;
    if (i < 0 || i >= values.size())
      throw DomainError("series '" + name + "': day " + std::to_string(t) + " out of range");
    return values[i];
  }
};

/// Seven-day centered moving average with endpoint padding: window indices
/// outside the series are replaced by the respective endpoint value.
RawSeries moving_average_7(const RawSeries& s);

/// Prefix sums: (1,2,3) -> (1,3,6).
Eigen::VectorXd accumulate(const Eigen::VectorXd& daily);

/// Reconcile the two death sources on their overlap: d_1 = d_ltc and
/// d_2 = d_total - d_ltc, so d_1 + d_2 reproduces d_total exactly.
std::pair<RawSeries, RawSeries> split_ltc_deaths(const RawSeries& d_total, const RawSeries& d_ltc);

struct Thresholds {
  int t1_confirmed = 0;     // first day cumulative confirmed > 100
  int t1_hospitalized = 0;  // first day hospitalized > 10
  int t1_deceased = 0;      // first day cumulative deaths > 10
  int t2_deceased = 0;      // day before LTC deaths are first reported
};

Thresholds detect_thresholds(const RawSeries& confirmed_cum, const RawSeries& hospitalized,
                             const RawSeries& deceased_cum, int ltc_first_day);

/// All smoothed/derived streams the misfit consumes.
struct SmoothedStreams {
  RawSeries hospitalized;     // H^r
  RawSeries confirmed_daily;  // p^r
  RawSeries confirmed_cum;    // P^r
  RawSeries deceased_daily;   // d^r
  RawSeries deceased_cum;     // D^r
  std::array<RawSeries, 2> deceased_daily_group;  // d^r_i
  std::array<RawSeries, 2> deceased_cum_group;    // D^r_i
};

/// One weighted log-space data block of the misfit. Entries are
/// weight * log(max(value, log_floor)), i.e. the weight is folded into the
/// stored values exactly as in the observation vector the likelihood uses.
struct ObservationBlock {
  std::string name;
  int t_start = 0;
  int t_end = 0;  // inclusive
  double weight = 1.0;
  Eigen::VectorXd log_values;

  int size() const { return static_cast<int>(log_values.size()); }
};

struct ObservationSet {
  std::vector<ObservationBlock> blocks;
  Thresholds thresholds;
  double log_floor = 0.5;
  int t_start = 0;
  int t_end = 0;

  const ObservationBlock* find(const std::string& name) const;
};

/// Assemble the weighted log-space observation blocks. Cumulative and
/// hospitalized blocks carry weight 1, daily blocks weight 0.1; values are
/// clamped to log_floor before the log. Blocks whose span is empty are
/// omitted.
ObservationSet assemble_observations(const SmoothedStreams& streams, const Thresholds& thr,
                                     int t_end, double log_floor);

/// Raw inputs as read from the two CSV files.
struct StateStream {
  std::string first_date;  // ISO date of day 0
  Eigen::VectorXd confirmed_daily, hospitalized, deceased_daily;
};

struct LtcStream {
  int first_day = 0;  // day index relative to the state stream's first date
  Eigen::VectorXd ltc_deceased_daily;
};

/// Reads the state stream CSV (header: date,confirmed_daily,
/// hospitalized_current,deceased_daily). Date gaps are an error.
StateStream read_state_csv(const std::string& path);

/// Reads the LTC stream CSV (header: date,ltc_deceased_daily); day indices
/// are relative to base_date.
LtcStream read_ltc_csv(const std::string& path, const std::string& base_date);

/// Smoothing (optional) + reconciliation + accumulation + thresholds +
/// observation assembly. t_end defaults to the last day covered by both
/// streams; a nonnegative override clips it.
struct PipelineResult {
  SmoothedStreams streams;
  Thresholds thresholds;
  ObservationSet obs;
};

PipelineResult run_data_pipeline(const StateStream& state, const LtcStream& ltc, bool smooth,
                                 double log_floor, int t_end_override = -1);

/// ISO date helpers (proleptic Gregorian).
int days_between(const std::string& iso_from, const std::string& iso_to);
std::string date_offset(const std::string& iso, int days);

/// Convert model observables into the raw-stream shapes the pipeline reads.
/// Daily columns carry the day-0 cumulative value in their first row so that
/// re-accumulation reproduces the cumulative series exactly.
struct ObservableSeries;  // model.hpp
StateStream state_stream_from_observables(const ObservableSeries& s, const std::string& first_date);
LtcStream ltc_stream_from_observables(const ObservableSeries& s, int ltc_first_day);

}  // namespace ltcepi
