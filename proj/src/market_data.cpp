#include "alphappo/market_data.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

#include "alphappo/rolling.hpp"
#include "alphappo/text_util.hpp"

namespace alphappo {

Date Date::parse(std::string_view text) {
  text = text_util::trim(text);
  int y = 0;
  unsigned m = 0, d = 0;
  auto bad = [&] { return ValidationError("invalid ISO-8601 date '" + std::string(text) + "'"); };
  if (text.size() != 10 || text[4] != '-' || text[7] != '-') throw bad();
  auto num = [&](std::string_view part, auto& out) {
    auto [p, ec] = std::from_chars(part.data(), part.data() + part.size(), out);
    if (ec != std::errc{} || p != part.data() + part.size()) throw bad();
  };
  num(text.substr(0, 4), y);
  num(text.substr(5, 2), m);
  num(text.substr(8, 2), d);
  const std::chrono::year_month_day ymd{std::chrono::year{y}, std::chrono::month{m}, std::chrono::day{d}};
  if (!ymd.ok()) throw bad();
  return Date(std::chrono::sys_days{ymd});
}

std::string Date::iso() const {
  const std::chrono::year_month_day ymd{days_};
  std::array<char, 16> buf{};
  std::snprintf(buf.data(), buf.size(), "%04d-%02u-%02u", static_cast<int>(ymd.year()),
                static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()));
  return buf.data();
}

FeatureFrame::FeatureFrame(std::vector<Date> dates) : dates_(std::move(dates)) {}

bool FeatureFrame::has(std::string_view name) const { return index_.contains(std::string(name)); }

const Series& FeatureFrame::column(std::string_view name) const {
  auto it = index_.find(std::string(name));
  if (it == index_.end()) throw ValidationError("unknown column '" + std::string(name) + "'");
  return columns_[it->second];
}

void FeatureFrame::add(std::string name, Series values) {
  if (has(name)) throw ValidationError("duplicate column '" + name + "'");
  if (values.size() != rows()) {
    throw ValidationError("column '" + name + "' has " + std::to_string(values.size()) +
                          " rows, frame has " + std::to_string(rows()));
  }
  index_.emplace(name, columns_.size());
  names_.push_back(std::move(name));
  columns_.push_back(std::move(values));
}

void FeatureFrame::set(std::string name, Series values) {
  auto it = index_.find(name);
  if (it == index_.end()) {
    add(std::move(name), std::move(values));
    return;
  }
  if (values.size() != rows()) throw ValidationError("column '" + name + "' length mismatch");
  columns_[it->second] = std::move(values);
}

FeatureFrame FeatureFrame::slice(std::size_t begin, std::size_t end) const {
  if (begin > end || end > rows()) throw ValidationError("slice out of range");
  const auto b = static_cast<std::ptrdiff_t>(begin);
  const auto e = static_cast<std::ptrdiff_t>(end);
  FeatureFrame out({dates_.begin() + b, dates_.begin() + e});
  for (std::size_t c = 0; c < names_.size(); ++c) {
    out.add(names_[c], Series(columns_[c].begin() + b, columns_[c].begin() + e));
  }
  return out;
}

std::vector<bool> FeatureFrame::valid_mask(std::string_view name) const {
  const auto& col = column(name);
  std::vector<bool> mask(col.size());
  for (std::size_t i = 0; i < col.size(); ++i) mask[i] = !is_missing(col[i]);
  return mask;
}

bool operator==(const FeatureFrame& a, const FeatureFrame& b) {
  if (a.dates_ != b.dates_ || a.names_ != b.names_) return false;
  for (std::size_t c = 0; c < a.columns_.size(); ++c) {
    const auto& x = a.columns_[c];
    const auto& y = b.columns_[c];
    for (std::size_t i = 0; i < x.size(); ++i) {
      const bool both_missing = is_missing(x[i]) && is_missing(y[i]);
      if (!both_missing && x[i] != y[i]) return false;
    }
  }
  return true;
}

namespace {

struct RawRow {
  Date date;
  std::size_t line = 0;
  std::vector<double> values;
};

double parse_cell(std::string_view cell, std::size_t line, std::string_view column, bool required) {
  cell = text_util::trim(cell);
  if (cell.empty()) {
    if (required) {
      throw ParseError("line " + std::to_string(line) + ": empty value in column '" +
                           std::string(column) + "'",
                       line);
    }
    return kMissing;
  }
  auto v = text_util::parse_double(cell);
  if (!v) {
    throw ParseError("line " + std::to_string(line) + ": cannot parse '" + std::string(cell) +
                         "' in column '" + std::string(column) + "'",
                     line);
  }
  return *v;
}

}  // namespace

FeatureFrame parse_csv(std::string_view text, const CsvSchema& schema, std::string_view source) {
  const std::string src(source);
  if (text.starts_with("\xEF\xBB\xBF")) text.remove_prefix(3);
  auto lines = text_util::split_lines(text);

  std::size_t header_line = 0;
  while (header_line < lines.size() && text_util::trim(lines[header_line]).empty()) ++header_line;
  if (header_line == lines.size()) throw ParseError(src + ": empty CSV", 0);

  std::vector<std::string> header;
  for (auto cell : text_util::split(lines[header_line], ',')) header.emplace_back(text_util::trim(cell));

  auto find = [&](const std::string& wanted) -> std::size_t {
    const auto key = text_util::lower(wanted);
    for (std::size_t i = 0; i < header.size(); ++i) {
      if (text_util::lower(header[i]) == key) return i;
    }
    throw ValidationError(src + ": missing required column '" + wanted + "'");
  };
  const std::size_t date_col = find(schema.date);
  const std::array<std::size_t, 5> core = {find(schema.open), find(schema.high), find(schema.low),
                                           find(schema.close), find(schema.volume)};
  const std::array<std::string_view, 5> core_names = {kOpen, kHigh, kLow, kClose, kVolume};

  std::vector<std::size_t> extras;
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (i == date_col || std::find(core.begin(), core.end(), i) != core.end()) continue;
    extras.push_back(i);
  }

  std::vector<RawRow> rows;
  for (std::size_t li = header_line + 1; li < lines.size(); ++li) {
    const std::size_t line_no = li + 1;
    if (text_util::trim(lines[li]).empty()) continue;
    auto cells = text_util::split(lines[li], ',');
    if (cells.size() != header.size()) {
      throw ParseError(src + ": line " + std::to_string(line_no) + ": expected " +
                           std::to_string(header.size()) + " fields, got " + std::to_string(cells.size()),
                       line_no);
    }
    RawRow row;
    row.line = line_no;
    try {
      row.date = Date::parse(cells[date_col]);
    } catch (const ValidationError& e) {
      throw ParseError(src + ": line " + std::to_string(line_no) + ": " + e.what(), line_no);
    }
    for (std::size_t k = 0; k < core.size(); ++k) {
      row.values.push_back(parse_cell(cells[core[k]], line_no, header[core[k]], true));
    }
    for (auto i : extras) row.values.push_back(parse_cell(cells[i], line_no, header[i], false));

    const std::size_t data_row = rows.size() + 1;
    const double o = row.values[0], h = row.values[1], l = row.values[2], c = row.values[3],
                 v = row.values[4];
    auto fail = [&](const std::string& why) {
      return ValidationError(src + ": row " + std::to_string(data_row) + " (line " +
                             std::to_string(line_no) + "): " + why);
    };
    if (l > h) throw fail("low > high");
    if (h < std::max(o, c)) throw fail("high below open/close");
    if (l > std::min(o, c)) throw fail("low above open/close");
    if (v < 0) throw fail("negative volume");
    rows.push_back(std::move(row));
  }

  std::stable_sort(rows.begin(), rows.end(), [](const RawRow& a, const RawRow& b) { return a.date < b.date; });
  for (std::size_t i = 1; i < rows.size(); ++i) {
    if (rows[i].date == rows[i - 1].date) {
      throw ValidationError(src + ": duplicate date " + rows[i].date.iso() + " (lines " +
                            std::to_string(rows[i - 1].line) + " and " + std::to_string(rows[i].line) + ")");
    }
  }

  std::vector<Date> dates;
  dates.reserve(rows.size());
  for (const auto& r : rows) dates.push_back(r.date);
  FeatureFrame frame(std::move(dates));
  const std::size_t width = core.size() + extras.size();
  for (std::size_t k = 0; k < width; ++k) {
    Series col;
    col.reserve(rows.size());
    for (const auto& r : rows) col.push_back(r.values[k]);
    std::string name = k < core.size() ? std::string(core_names[k]) : header[extras[k - core.size()]];
    frame.add(std::move(name), std::move(col));
  }
  return frame;
}

FeatureFrame load_csv(const std::filesystem::path& path, const CsvSchema& schema) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_csv(buf.str(), schema, path.string());
}

std::string to_csv(const FeatureFrame& frame) {
  std::string out = "date";
  for (const auto& n : frame.names()) out += "," + n;
  out += "\n";
  for (std::size_t i = 0; i < frame.rows(); ++i) {
    out += frame.dates()[i].iso();
    for (const auto& n : frame.names()) {
      out += ",";
      const double v = frame.column(n)[i];
      if (!is_missing(v)) out += text_util::format_double(v);
    }
    out += "\n";
  }
  return out;
}

void write_csv(const FeatureFrame& frame, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot write " + path.string());
  out << to_csv(frame);
}

FeatureFrame compute_future_return(const FeatureFrame& frame) {
  const auto& close = frame.column(kClose);
  if (close.size() < 2) throw ValidationError("future_return needs at least 2 rows");
  for (std::size_t i = 0; i < close.size(); ++i) {
    if (!(close[i] > 0.0)) {
      throw ValidationError("non-positive close price at " + frame.dates()[i].iso());
    }
  }
  Series fr(close.size(), kMissing);
  for (std::size_t t = 0; t + 1 < close.size(); ++t) fr[t] = (close[t + 1] - close[t]) / close[t];
  FeatureFrame out = frame;
  out.set(std::string(kFutureReturn), std::move(fr));
  return out;
}

DerivedRiskColumns compute_risk_columns(const FeatureFrame& frame, const RiskWindows& w) {
  const auto& close = frame.column(kClose);
  const auto& fr = frame.column(kFutureReturn);

  DerivedRiskColumns out;
  out.ma20 = rolling::mean(close, w.fast_ma);
  out.ma100 = rolling::mean(close, w.slow_ma);
  out.regime.assign(close.size(), kMissing);
  for (std::size_t t = 0; t < close.size(); ++t) {
    if (!is_missing(out.ma20[t]) && !is_missing(out.ma100[t])) {
      out.regime[t] = out.ma20[t] > out.ma100[t] ? 1.0 : 0.0;
    }
  }
  out.sigma_daily = rolling::stddev(fr, w.vol);
  out.sigma_annual.assign(close.size(), kMissing);
  const double annualize = std::sqrt(w.periods_per_year);
  for (std::size_t t = 0; t < close.size(); ++t) {
    if (!is_missing(out.sigma_daily[t])) out.sigma_annual[t] = out.sigma_daily[t] * annualize;
  }
  out.tau_upper = rolling::quantile(close, w.upper_q, w.quantile);
  out.tau_lower = rolling::quantile(close, w.lower_q, w.quantile);
  const std::size_t longest = std::max({w.fast_ma, w.slow_ma, w.vol, w.quantile});
  out.insufficient_history = close.size() < longest;
  return out;
}

void attach_risk_columns(FeatureFrame& frame, const DerivedRiskColumns& risk) {
  frame.set("MA_20", risk.ma20);
  frame.set("MA_100", risk.ma100);
  frame.set("regime", risk.regime);
  frame.set("sigma_daily", risk.sigma_daily);
  frame.set("sigma_annual", risk.sigma_annual);
  frame.set("tau_upper", risk.tau_upper);
  frame.set("tau_lower", risk.tau_lower);
}

std::size_t SplitSpec::boundary(std::size_t rows) const {
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    throw ValidationError("train_fraction must lie in (0, 1)");
  }
  return static_cast<std::size_t>(std::floor(train_fraction * static_cast<double>(rows)));
}

std::pair<FeatureFrame, FeatureFrame> split(const FeatureFrame& frame, const SplitSpec& spec) {
  if (frame.rows() == 0) throw ValidationError("cannot split an empty frame");
  const std::size_t b = spec.boundary(frame.rows());
  if (b == 0 || b == frame.rows()) {
    throw ValidationError("split of " + std::to_string(frame.rows()) + " rows at fraction " +
                          text_util::format_double(spec.train_fraction) + " leaves an empty side");
  }
  return {frame.slice(0, b), frame.slice(b, frame.rows())};
}

}  // namespace alphappo
