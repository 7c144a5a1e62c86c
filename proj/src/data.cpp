#include "ltcepi/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "ltcepi/model.hpp"

namespace ltcepi {

RawSeries moving_average_7(const RawSeries& s) {
  const int n = static_cast<int>(s.values.size());
  if (n < 1) throw DomainError("moving_average_7: empty series");
  RawSeries out;
  out.name = s.name;
  out.t_start = s.t_start;
  out.values.resize(n);
  for (int i = 0; i < n; ++i) {
    double acc = 0.0;
    for (int k = i - 3; k <= i + 3; ++k) acc += s.values[std::clamp(k, 0, n - 1)];
    out.values[i] = acc / 7.0;
  }
  return out;
}

Eigen::VectorXd accumulate(const Eigen::VectorXd& daily) {
  Eigen::VectorXd out(daily.size());
  double acc = 0.0;
  for (Eigen::Index i = 0; i < daily.size(); ++i) {
    acc += daily[i];
    out[i] = acc;
  }
  return out;
}

std::pair<RawSeries, RawSeries> split_ltc_deaths(const RawSeries& d_total, const RawSeries& d_ltc) {
  const int lo = std::max(d_total.t_start, d_ltc.t_start);
  const int hi = std::min(d_total.t_end(), d_ltc.t_end());
  if (lo > hi) throw DomainError("split_ltc_deaths: series do not overlap");
  RawSeries d1, d2;
  d1.name = "deceased_daily_1";
  d2.name = "deceased_daily_2";
  d1.t_start = d2.t_start = lo;
  d1.values.resize(hi - lo + 1);
  d2.values.resize(hi - lo + 1);
  for (int t = lo; t <= hi; ++t) {
    d1.values[t - lo] = d_ltc.at_day(t);
    d2.values[t - lo] = d_total.at_day(t) - d_ltc.at_day(t);
  }
  return {d1, d2};
}

namespace {

int first_exceeding(const RawSeries& s, double threshold, const char* what) {
  for (int t = s.t_start; t <= s.t_end(); ++t)
    if (s.at_day(t) > threshold) return t;
  throw ConfigError(std::string("detect_thresholds: stream '") + what +
                    "' never exceeds " + std::to_string(threshold));
}

}  // namespace

Thresholds detect_thresholds(const RawSeries& confirmed_cum, const RawSeries& hospitalized,
                             const RawSeries& deceased_cum, int ltc_first_day) {
  Thresholds thr;
  thr.t1_confirmed = first_exceeding(confirmed_cum, 100.0, "confirmed_cum");
  thr.t1_hospitalized = first_exceeding(hospitalized, 10.0, "hospitalized");
  thr.t1_deceased = first_exceeding(deceased_cum, 10.0, "deceased_cum");
  thr.t2_deceased = ltc_first_day - 1;
  return thr;
}

const ObservationBlock* ObservationSet::find(const std::string& name) const {
  for (const auto& b : blocks)
    if (b.name == name) return &b;
  return nullptr;
}

ObservationSet assemble_observations(const SmoothedStreams& streams, const Thresholds& thr,
                                     int t_end, double log_floor) {
  ObservationSet obs;
  obs.thresholds = thr;
  obs.log_floor = log_floor;
  obs.t_start = streams.confirmed_daily.t_start;
  obs.t_end = t_end;

  auto add_block = [&](const RawSeries& s, int lo, int hi, double weight) {
    if (lo > hi) return;
    ObservationBlock b;
    b.name = s.name;
    b.t_start = lo;
    b.t_end = hi;
    b.weight = weight;
    b.log_values.resize(hi - lo + 1);
    for (int t = lo; t <= hi; ++t)
      b.log_values[t - lo] = weight * std::log(std::max(s.at_day(t), log_floor));
    obs.blocks.push_back(std::move(b));
  };

  add_block(streams.hospitalized, thr.t1_hospitalized, t_end, 1.0);
  add_block(streams.confirmed_cum, thr.t1_confirmed, t_end, 1.0);
  add_block(streams.confirmed_daily, thr.t1_confirmed + 1, t_end, 0.1);
  add_block(streams.deceased_cum, thr.t1_deceased, std::min(thr.t2_deceased, t_end), 1.0);
  add_block(streams.deceased_daily, thr.t1_deceased + 1, std::min(thr.t2_deceased, t_end), 0.1);
  for (int i = 0; i < 2; ++i)
    add_block(streams.deceased_cum_group[i], thr.t2_deceased + 1, t_end, 1.0);
  for (int i = 0; i < 2; ++i)
    add_block(streams.deceased_daily_group[i], thr.t2_deceased + 2, t_end, 0.1);
  return obs;
}

// ---- CSV ingestion ----

namespace {

// days since 1970-01-01 (civil-days algorithm)
long civil_days(int y, int m, int d) {
  y -= m <= 2;
  const long era = (y >= 0 ? y : y - 399) / 400;
  const unsigned yoe = static_cast<unsigned>(y - era * 400);
  const unsigned doy = (153u * static_cast<unsigned>(m + (m > 2 ? -3 : 9)) + 2u) / 5u +
                       static_cast<unsigned>(d) - 1u;
  const unsigned doe = yoe * 365u + yoe / 4u - yoe / 100u + doy;
  return era * 146097L + static_cast<long>(doe) - 719468L;
}

void civil_from_days(long z, int& y, int& m, int& d) {
  z += 719468L;
  const long era = (z >= 0 ? z : z - 146096L) / 146097L;
  const unsigned doe = static_cast<unsigned>(z - era * 146097L);
  const unsigned yoe = (doe - doe / 1460u + doe / 36524u - doe / 146096u) / 365u;
  const long yy = static_cast<long>(yoe) + era * 400L;
  const unsigned doy = doe - (365u * yoe + yoe / 4u - yoe / 100u);
  const unsigned mp = (5u * doy + 2u) / 153u;
  d = static_cast<int>(doy - (153u * mp + 2u) / 5u + 1u);
  m = static_cast<int>(mp < 10 ? mp + 3 : mp - 9);
  y = static_cast<int>(yy + (m <= 2));
}

long parse_iso(const std::string& iso) {
  int y, m, d;
  if (std::sscanf(iso.c_str(), "%d-%d-%d", &y, &m, &d) != 3 || m < 1 || m > 12 || d < 1 || d > 31)
    throw ConfigError("bad ISO date: '" + iso + "'");
  return civil_days(y, m, d);
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

double parse_number(const std::string& s, const std::string& context) {
  try {
    std::size_t pos = 0;
    double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("bad numeric value '" + s + "' in " + context);
  }
}

struct CsvTable {
  std::vector<std::string> dates;
  std::vector<std::vector<double>> columns;
};

CsvTable read_csv(const std::string& path, const std::vector<std::string>& expect_header) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open CSV file: " + path);
  std::string line;
  if (!std::getline(in, line)) throw ConfigError("empty CSV file: " + path);
  if (!line.empty() && line.back() == '\r') line.pop_back();
  auto header = split_csv_line(line);
  if (header != expect_header) {
    std::string want;
    for (const auto& h : expect_header) want += (want.empty() ? "" : ",") + h;
    throw ConfigError("CSV header mismatch in " + path + " (expected '" + want + "')");
  }
  CsvTable table;
  table.columns.resize(expect_header.size() - 1);
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto cells = split_csv_line(line);
    if (cells.size() != expect_header.size())
      throw ConfigError(path + ":" + std::to_string(line_no) + ": wrong column count");
    table.dates.push_back(cells[0]);
    for (std::size_t c = 1; c < cells.size(); ++c)
      table.columns[c - 1].push_back(parse_number(cells[c], path + ":" + std::to_string(line_no)));
  }
  if (table.dates.empty()) throw ConfigError("CSV has no data rows: " + path);
  long prev = parse_iso(table.dates[0]);
  for (std::size_t i = 1; i < table.dates.size(); ++i) {
    long cur = parse_iso(table.dates[i]);
    if (cur != prev + 1)
      throw ConfigError(path + ": dates must be consecutive days (gap after " +
                        table.dates[i - 1] + ")");
    prev = cur;
  }
  return table;
}

Eigen::VectorXd to_vector(const std::vector<double>& v) {
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

}  // namespace

StateStream read_state_csv(const std::string& path) {
  CsvTable t = read_csv(path, {"date", "confirmed_daily", "hospitalized_current", "deceased_daily"});
  StateStream s;
  s.first_date = t.dates[0];
  s.confirmed_daily = to_vector(t.columns[0]);
  s.hospitalized = to_vector(t.columns[1]);
  s.deceased_daily = to_vector(t.columns[2]);
  return s;
}

LtcStream read_ltc_csv(const std::string& path, const std::string& base_date) {
  CsvTable t = read_csv(path, {"date", "ltc_deceased_daily"});
  LtcStream s;
  s.first_day = static_cast<int>(parse_iso(t.dates[0]) - parse_iso(base_date));
  s.ltc_deceased_daily = to_vector(t.columns[0]);
  return s;
}

int days_between(const std::string& iso_from, const std::string& iso_to) {
  return static_cast<int>(parse_iso(iso_to) - parse_iso(iso_from));
}

std::string date_offset(const std::string& iso, int days) {
  int y, m, d;
  civil_from_days(parse_iso(iso) + days, y, m, d);
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%04d-%02d-%02d", y, m, d);
  return buf;
}

PipelineResult run_data_pipeline(const StateStream& state, const LtcStream& ltc, bool smooth,
                                 double log_floor, int t_end_override) {
  if (ltc.first_day < 0)
    throw ConfigError("data pipeline: LTC stream starts before the state stream");
  auto raw = [&](const char* name, const Eigen::VectorXd& v, int start) {
    RawSeries s;
    s.name = name;
    s.t_start = start;
    s.values = v;
    return s;
  };
  auto maybe_smooth = [&](const RawSeries& s) { return smooth ? moving_average_7(s) : s; };

  SmoothedStreams st;
  st.confirmed_daily = maybe_smooth(raw("confirmed_daily", state.confirmed_daily, 0));
  st.hospitalized = maybe_smooth(raw("hospitalized", state.hospitalized, 0));
  st.deceased_daily = maybe_smooth(raw("deceased_daily", state.deceased_daily, 0));
  RawSeries ltc_daily = maybe_smooth(raw("ltc_deceased_daily", ltc.ltc_deceased_daily, ltc.first_day));

  auto [d1, d2] = split_ltc_deaths(st.deceased_daily, ltc_daily);
  st.deceased_daily_group = {d1, d2};

  st.confirmed_cum = {"confirmed_cum", 0, accumulate(st.confirmed_daily.values)};
  st.deceased_cum = {"deceased_cum", 0, accumulate(st.deceased_daily.values)};
  for (int i = 0; i < 2; ++i) {
    st.deceased_cum_group[i] = {"deceased_cum_" + std::to_string(i + 1),
                                st.deceased_daily_group[i].t_start,
                                accumulate(st.deceased_daily_group[i].values)};
    st.deceased_daily_group[i].name = "deceased_daily_" + std::to_string(i + 1);
  }

  int t_end = std::min(st.deceased_daily.t_end(), st.deceased_daily_group[0].t_end());
  if (t_end_override >= 0) t_end = std::min(t_end, t_end_override);

  PipelineResult out;
  out.streams = st;
  out.thresholds = detect_thresholds(st.confirmed_cum, st.hospitalized, st.deceased_cum,
                                     ltc_daily.t_start);
  out.obs = assemble_observations(st, out.thresholds, t_end, log_floor);
  return out;
}

StateStream state_stream_from_observables(const ObservableSeries& s, const std::string& first_date) {
  const int n = static_cast<int>(s.hospitalized.size());
  StateStream st;
  st.first_date = first_date;
  st.hospitalized = s.hospitalized;
  st.confirmed_daily.resize(n);
  st.deceased_daily.resize(n);
  st.confirmed_daily[0] = s.confirmed_cum[0];
  st.deceased_daily[0] = s.deceased_cum[0];
  for (int d = 1; d < n; ++d) {
    st.confirmed_daily[d] = s.confirmed_daily[d - 1];
    st.deceased_daily[d] = s.deceased_daily[d - 1];
  }
  return st;
}

LtcStream ltc_stream_from_observables(const ObservableSeries& s, int ltc_first_day) {
  const int n = static_cast<int>(s.hospitalized.size());
  if (ltc_first_day < 0 || ltc_first_day >= n)
    throw DomainError("ltc_stream_from_observables: first day outside the series");
  LtcStream l;
  l.first_day = ltc_first_day;
  l.ltc_deceased_daily.resize(n - ltc_first_day);
  for (int t = ltc_first_day; t < n; ++t)
    l.ltc_deceased_daily[t - ltc_first_day] =
        (t == 0) ? s.deceased_cum_group[0][0] : s.deceased_daily_group[0][t - 1];
  return l;
}

}  // namespace ltcepi
