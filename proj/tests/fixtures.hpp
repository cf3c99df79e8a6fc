#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include "alphappo/alpha_dsl.hpp"
#include "alphappo/market_data.hpp"
#include "alphappo/pipeline.hpp"
#include "alphappo/text_util.hpp"

namespace fixtures {

using namespace alphappo;

inline std::vector<Date> daily_dates(std::size_t n, int year = 2010) {
  std::vector<Date> d;
  const std::chrono::sys_days start = std::chrono::year{year} / 1 / 1;
  for (std::size_t i = 0; i < n; ++i) d.emplace_back(start + std::chrono::days{static_cast<int>(i)});
  return d;
}

/// Geometric random walk with consistent OHLC bars.
inline FeatureFrame random_ohlcv(std::size_t n, std::uint64_t seed, double drift = 0.0003, double vol = 0.01) {
  std::mt19937_64 eng(seed);
  std::normal_distribution<double> z(0.0, 1.0);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Series o(n), h(n), l(n), c(n), v(n);
  double price = 100.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double open = price * (1.0 + 0.002 * z(eng));
    price *= std::exp(drift + vol * z(eng));
    o[i] = open;
    c[i] = price;
    h[i] = std::max(open, price) * (1.0 + 0.003 * u(eng));
    l[i] = std::min(open, price) * (1.0 - 0.003 * u(eng));
    v[i] = std::floor(1e5 + 9e5 * u(eng));
  }
  FeatureFrame f(daily_dates(n));
  f.add(std::string(kOpen), o);
  f.add(std::string(kHigh), h);
  f.add(std::string(kLow), l);
  f.add(std::string(kClose), c);
  f.add(std::string(kVolume), v);
  return f;
}

inline std::string ohlcv_csv(const FeatureFrame& f) {
  std::string out = "date,open,high,low,close,volume\n";
  for (std::size_t i = 0; i < f.rows(); ++i) {
    out += f.dates()[i].iso();
    for (auto col : {kOpen, kHigh, kLow, kClose, kVolume}) out += "," + text_util::format_double(f.column(col)[i]);
    out += "\n";
  }
  return out;
}

inline void write_text(const std::filesystem::path& p, const std::string& text) {
  std::filesystem::create_directories(p.parent_path());
  std::ofstream(p, std::ios::binary) << text;
}

inline std::string read_text(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

/// Fresh scratch directory under the system temp dir.
inline std::filesystem::path scratch(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("alphappo_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

/// Environment where alpha 0 is the next-step return and the other
/// `n_alphas - 1` are independent Gaussian noise.
struct SignalEnv {
  FeatureFrame frame;
  AlphaMatrix matrix;
  std::size_t boundary = 0;
};

inline SignalEnv signal_env(std::size_t rows, std::size_t n_alphas, std::uint64_t seed) {
  SignalEnv s;
  const auto raw = random_ohlcv(rows, seed, 0.0, 0.01);
  s.frame = pipeline::build_features(raw, env::EnvConfig{});
  std::mt19937_64 eng(seed ^ 0x9e3779b97f4a7c15ULL);
  std::normal_distribution<double> z(0.0, 1.0);
  std::vector<AlphaExpr> exprs;
  exprs.push_back(parse_alpha("signal = " + std::string(kFutureReturn)));
  for (std::size_t k = 1; k < n_alphas; ++k) {
    Series noise(rows);
    for (auto& x : noise) x = z(eng);
    const std::string col = "noise_" + std::to_string(k);
    s.frame.add(col, noise);
    exprs.push_back(parse_alpha("n" + std::to_string(k) + " = " + col));
  }
  s.boundary = SplitSpec{}.boundary(rows);
  s.matrix = build_matrix(exprs, s.frame, s.boundary);
  return s;
}

}  // namespace fixtures
