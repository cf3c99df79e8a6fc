#include <cmath>
#include <random>

#include "alphappo/indicators.hpp"
#include "doctest.h"
#include "fixtures.hpp"
#include "oracles.hpp"

using namespace alphappo;
using namespace alphappo::indicators;

namespace {

std::vector<double> random_close(std::size_t n, std::uint64_t seed) {
  return fixtures::random_ohlcv(n, seed).column(kClose);
}

bool same_prefix(const Series& a, const Series& b, std::size_t upto) {
  for (std::size_t k = 0; k <= upto; ++k) {
    if (!((is_missing(a[k]) && is_missing(b[k])) || a[k] == b[k])) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("sma: examples") {
  auto s = sma(std::vector<double>{1, 2, 3}, 3);
  CHECK(is_missing(s[0]));
  CHECK(is_missing(s[1]));
  CHECK(s[2] == 2.0);
  s = sma(std::vector<double>{1, 2, 3, 4}, 2);
  CHECK(is_missing(s[0]));
  CHECK(s[1] == 1.5);
  CHECK(s[2] == 2.5);
  CHECK(s[3] == 3.5);
  for (double v : sma(std::vector<double>(30, 7.25), 5)) CHECK((is_missing(v) || v == doctest::Approx(7.25)));
  CHECK_THROWS_AS(sma(std::vector<double>{1}, 0), ValidationError);
}

TEST_CASE("ema: examples") {
  const std::vector<double> c = {10, 11, 12, 13};
  const auto e = ema(c, 3);
  // seed = mean(10, 11, 12) = 11, then 0.5 * 13 + 0.5 * 11
  CHECK(is_missing(e[1]));
  CHECK(e[2] == 11.0);
  CHECK(e[3] == 12.0);
  CHECK(ema(c, 1) == c);
  for (double v : ema(std::vector<double>(40, 3.5), 10)) CHECK((is_missing(v) || v == doctest::Approx(3.5)));
}

TEST_CASE("ema: seeding restarts after a gap") {
  const std::vector<double> c = {1, 2, kMissing, 4, 6, 8};
  const auto e = ema(c, 2);
  CHECK(e[1] == 1.5);
  CHECK(is_missing(e[2]));
  CHECK(is_missing(e[3]));
  CHECK(e[4] == 5.0);
  CHECK(e[5] == doctest::Approx(2.0 / 3.0 * 8 + 1.0 / 3.0 * 5));
}

TEST_CASE("momentum: examples") {
  const auto m = momentum(std::vector<double>{1, 2, 3, 4}, 2);
  CHECK(is_missing(m[1]));
  CHECK(m[2] == 2.0);
  CHECK(m[3] == 2.0);
  for (double v : momentum(std::vector<double>(10, 5.0), 3)) CHECK((is_missing(v) || v == 0.0));
  std::vector<double> up(20);
  for (std::size_t i = 0; i < up.size(); ++i) up[i] = std::exp(0.01 * static_cast<double>(i));
  for (double v : momentum(up, 4)) CHECK((is_missing(v) || v > 0.0));
}

TEST_CASE("rsi: monotone series") {
  std::vector<double> up(40), down(40);
  for (std::size_t i = 0; i < up.size(); ++i) {
    up[i] = 10 + 0.5 * static_cast<double>(i);
    down[i] = 100 - static_cast<double>(i);
  }
  const auto ru = rsi(up), rd = rsi(down);
  for (std::size_t t = 0; t < 14; ++t) CHECK(is_missing(ru[t]));
  for (std::size_t t = 14; t < 40; ++t) {
    CHECK(ru[t] == 100.0);
    CHECK(rd[t] == 0.0);
  }
}

TEST_CASE("rsi: alternating equal moves match the Wilder oracle") {
  std::vector<double> c(60);
  for (std::size_t i = 0; i < c.size(); ++i) c[i] = i % 2 == 0 ? 100.0 : 101.0;
  const auto r = rsi(c);
  const auto o = oracle::rsi(c, 14);
  for (std::size_t t = 14; t < c.size(); ++t) {
    CHECK(r[t] == doctest::Approx(o[t]).epsilon(1e-12));
    CHECK(std::abs(r[t] - 50.0) < 4.0);
  }
  // With an even window the up and down sums balance exactly at the seed.
  const auto r2 = rsi(c, 2);
  CHECK(r2[2] == doctest::Approx(50.0));
}

TEST_CASE("rsi: flat window is 50") {
  const auto r = rsi(std::vector<double>(20, 3.0));
  CHECK(r[14] == 50.0);
  CHECK(r[19] == 50.0);
}

TEST_CASE("macd: constant, composition and ramp") {
  const auto flat = macd(std::vector<double>(80, 12.0));
  for (std::size_t t = 25; t < 80; ++t) CHECK(flat.macd[t] == doctest::Approx(0.0));
  for (std::size_t t = 33; t < 80; ++t) CHECK(flat.signal[t] == doctest::Approx(0.0));

  const auto c = random_close(200, 3);
  const auto m = macd(c);
  const auto f = ema(c, 12), s = ema(c, 26);
  for (std::size_t t = 0; t < c.size(); ++t) {
    CHECK(((is_missing(m.macd[t]) && is_missing(f[t] - s[t])) || m.macd[t] == f[t] - s[t]));
  }
  CHECK(same_prefix(m.signal, ema(m.macd, 9), c.size() - 1));

  // On a ramp x_t = t each EMA lags by (1 - a) / a = (w - 1) / 2, so MACD
  // tends to (26 - 1) / 2 - (12 - 1) / 2 = 7.
  std::vector<double> ramp(600);
  for (std::size_t i = 0; i < ramp.size(); ++i) ramp[i] = static_cast<double>(i);
  const auto mr = macd(ramp);
  CHECK(mr.macd.back() == doctest::Approx(7.0).epsilon(1e-9));
  CHECK(mr.macd[100] > 0.0);
}

TEST_CASE("bollinger: examples") {
  const auto b = bollinger(std::vector<double>{1, 2, 3}, 3, 2.0);
  CHECK(b.upper[2] == doctest::Approx(4.0));
  CHECK(b.lower[2] == doctest::Approx(0.0));
  const auto flat = bollinger(std::vector<double>(30, 9.0));
  CHECK(flat.upper[25] == 9.0);
  CHECK(flat.lower[25] == 9.0);
  const auto r = bollinger(random_close(200, 8));
  for (std::size_t t = 19; t < 200; ++t) CHECK(r.upper[t] >= r.lower[t]);
  CHECK_THROWS_AS(bollinger(std::vector<double>{1, 2}, 1), ValidationError);
  CHECK_THROWS_AS(bollinger(std::vector<double>{1, 2}, 2, -1.0), ValidationError);
}

TEST_CASE("obv: examples") {
  const auto flat = obv(std::vector<double>(5, 1.0), std::vector<double>(5, 10.0));
  for (double v : flat) CHECK(v == 0.0);
  const auto up = obv(std::vector<double>{1, 2, 3, 4}, std::vector<double>(4, 10.0));
  CHECK(up == std::vector<double>{0, 10, 20, 30});
  const auto mixed = obv(std::vector<double>{1, 2, 1}, std::vector<double>{5, 5, 5});
  CHECK(mixed == std::vector<double>{0, 5, 0});
}

TEST_CASE("indicators agree with brute-force oracles on random paths") {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto raw = fixtures::random_ohlcv(200, seed);
    const auto& c = raw.column(kClose);
    const auto& v = raw.column(kVolume);
    CHECK(oracle::all_close(sma(c, 5), oracle::sma(c, 5), 1e-9));
    CHECK(oracle::all_close(sma(c, 20), oracle::sma(c, 20), 1e-9));
    CHECK(oracle::all_close(ema(c, 10), oracle::ema(c, 10), 1e-9));
    CHECK(oracle::all_close(momentum(c, 3), oracle::momentum(c, 3), 1e-9));
    CHECK(oracle::all_close(rsi(c), oracle::rsi(c, 14), 1e-9));
    const auto m = macd(c);
    const auto mo = oracle::macd(c);
    CHECK(oracle::all_close(m.macd, mo.macd, 1e-9));
    CHECK(oracle::all_close(m.signal, mo.signal, 1e-9));
    const auto b = bollinger(c);
    const auto bo = oracle::bollinger(c);
    CHECK(oracle::all_close(b.upper, bo.upper, 1e-9));
    CHECK(oracle::all_close(b.lower, bo.lower, 1e-9));
    CHECK(oracle::all_close(obv(c, v), oracle::obv(c, v), 1e-9));
    for (double x : rsi(c)) CHECK((is_missing(x) || (x >= 0.0 && x <= 100.0)));
  }
}

TEST_CASE("indicators are trailing") {
  const auto base = fixtures::random_ohlcv(150, 21);
  FeatureFrame f0 = base;
  indicators::attach_standard_indicators(f0);
  for (std::size_t t : {40u, 90u, 148u}) {
    FeatureFrame f1 = base;
    Series c = f1.column(kClose), v = f1.column(kVolume);
    c[t + 1] *= 1.7;
    v[t + 1] += 12345;
    f1.set(std::string(kClose), c);
    f1.set(std::string(kVolume), v);
    indicators::attach_standard_indicators(f1);
    for (const auto& name : f0.names()) CHECK_MESSAGE(same_prefix(f0.column(name), f1.column(name), t), name);
  }
}

TEST_CASE("attach_standard_indicators adds every column") {
  FeatureFrame f = fixtures::random_ohlcv(60, 2);
  attach_standard_indicators(f);
  for (const char* name : {"SMA_5", "SMA_20", "EMA_10", "Momentum_3", "Momentum_10", "RSI_14", "MACD", "MACD_Signal",
                           "BB_Upper", "BB_Lower", "OBV"}) {
    CHECK_MESSAGE(f.has(name), name);
  }
}
