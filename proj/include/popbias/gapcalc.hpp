#pragma once

#include <cmath>
#include <filesystem>
#include <istream>
#include <limits>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <boost/math/distributions/students_t.hpp>
#include <charconv>

#include "popbias/dataset.hpp"
#include "popbias/error.hpp"
#include "popbias/experiment.hpp"
#include "popbias/io.hpp"
#include "popbias/parallel.hpp"

namespace popbias {

/// One artist observed for a simulated account, either a seed artist the
/// account listened to or an artist the service recommended.
struct SimulatedUserRecord {
  enum class Role { ProfileSeed, Recommended };

  std::string service;
  std::string user;
  Group group = Group::Low;
  Role role = Role::ProfileSeed;
  std::string artist;
  std::optional<double> spotify_popularity;  // [0, 100]
  std::optional<double> lfm_phi;             // [0, 1]
};

enum class PopularityMeasure { Spotify, Lfm };

inline std::string_view to_string(PopularityMeasure m) { return m == PopularityMeasure::Spotify ? "spotify" : "lfm"; }

inline std::optional<double> measure_of(const SimulatedUserRecord& r, PopularityMeasure m) {
  return m == PopularityMeasure::Spotify ? r.spotify_popularity : r.lfm_phi;
}

namespace detail {

/// Splits one CSV line; double-quoted fields may contain commas and "" escapes.
inline std::vector<std::string> split_csv(std::string_view line, const std::string& source, std::size_t lineno) {
  std::vector<std::string> out;
  std::string field;
  bool quoted = false, was_quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          field += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field += c;
      }
    } else if (c == '"' && field.empty() && !was_quoted) {
      quoted = was_quoted = true;
    } else if (c == ',') {
      out.push_back(std::move(field));
      field.clear();
      was_quoted = false;
    } else {
      field += c;
    }
  }
  if (quoted) throw ParseError(source, lineno, "unterminated quoted field");
  out.push_back(std::move(field));
  return out;
}

inline std::optional<double> parse_optional_real(const std::string& s, double lo, double hi, const char* what,
                                                 const std::string& source, std::size_t lineno) {
  if (s.empty()) return std::nullopt;
  double v = 0.0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || p != s.data() + s.size()) throw ParseError(source, lineno, std::string(what) + " is not a number");
  if (!(v >= lo && v <= hi))
    throw ValidationError(source + ":" + std::to_string(lineno) + ": " + what + " out of range");
  return v;
}

}  // namespace detail

inline constexpr std::string_view kRecordHeader = "service,user,group,role,artist,spotify_popularity,lfm_phi";

inline std::vector<SimulatedUserRecord> read_simulated_records(std::istream& in, const std::string& source = "<records>") {
  std::vector<SimulatedUserRecord> out;
  std::string line;
  std::size_t lineno = 0;
  bool header = false;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string_view view = detail::strip_cr(line);
    if (view.empty()) continue;
    if (!header) {
      if (view != kRecordHeader) throw ParseError(source, lineno, "expected header '" + std::string(kRecordHeader) + "'");
      header = true;
      continue;
    }
    auto f = detail::split_csv(view, source, lineno);
    if (f.size() != 7) throw ParseError(source, lineno, "expected 7 comma-separated fields");
    SimulatedUserRecord r;
    r.service = f[0];
    r.user = f[1];
    if (r.service.empty() || r.user.empty()) throw ParseError(source, lineno, "empty service or user");
    auto g = parse_group(f[2]);
    if (!g) throw ParseError(source, lineno, "group must be low, medium or high");
    r.group = *g;
    if (f[3] == "profile-seed")
      r.role = SimulatedUserRecord::Role::ProfileSeed;
    else if (f[3] == "recommended")
      r.role = SimulatedUserRecord::Role::Recommended;
    else
      throw ParseError(source, lineno, "role must be profile-seed or recommended");
    r.artist = f[4];
    r.spotify_popularity = detail::parse_optional_real(f[5], 0.0, 100.0, "spotify_popularity", source, lineno);
    r.lfm_phi = detail::parse_optional_real(f[6], 0.0, 1.0, "lfm_phi", source, lineno);
    if (!r.spotify_popularity && !r.lfm_phi)
      throw ValidationError(source + ":" + std::to_string(lineno) + ": record has no popularity value");
    out.push_back(std::move(r));
  }
  if (!header) throw ParseError(source, lineno, "missing header");
  return out;
}

/// Welch's unequal-variance t-test, one-tailed for mean(b) > mean(a).
struct WelchResult {
  double t = std::numeric_limits<double>::quiet_NaN();
  double df = std::numeric_limits<double>::quiet_NaN();
  double p_one_tailed = std::numeric_limits<double>::quiet_NaN();
};

inline WelchResult welch_t_test_greater(std::span<const double> a, std::span<const double> b) {
  WelchResult r;
  if (a.size() < 2 || b.size() < 2) return r;
  auto moments = [](std::span<const double> x) {
    const double n = static_cast<double>(x.size());
    const double mean = ordered_sum(x) / n;
    std::vector<double> sq;
    for (double v : x) sq.push_back((v - mean) * (v - mean));
    return std::pair{mean, ordered_sum(sq) / (n - 1.0)};
  };
  const auto [ma, va] = moments(a);
  const auto [mb, vb] = moments(b);
  const double sa = va / static_cast<double>(a.size()), sb = vb / static_cast<double>(b.size());
  if (!(sa + sb > 0.0)) return r;
  r.t = (mb - ma) / std::sqrt(sa + sb);
  r.df = (sa + sb) * (sa + sb) /
         (sa * sa / static_cast<double>(a.size() - 1) + sb * sb / static_cast<double>(b.size() - 1));
  const boost::math::students_t dist(r.df);
  r.p_one_tailed = boost::math::cdf(boost::math::complement(dist, r.t));
  return r;
}

struct GapCalcCell {
  std::string service;
  std::string group;  // overall, low, medium, high
  PopularityMeasure measure = PopularityMeasure::Spotify;
  std::size_t users = 0;
  double gap_p = std::numeric_limits<double>::quiet_NaN();
  double gap_r = std::numeric_limits<double>::quiet_NaN();
  double delta_gap = std::numeric_limits<double>::quiet_NaN();
  WelchResult test;  // artist-level profile vs recommended values
};

struct GapCalcReport {
  std::vector<std::string> services;  // first-appearance order
  std::vector<GapCalcCell> cells;

  const GapCalcCell& cell(std::string_view service, std::string_view group, PopularityMeasure m) const {
    for (const auto& c : cells)
      if (c.service == service && c.group == group && c.measure == m) return c;
    throw ValidationError("no gapcalc cell for " + std::string(service) + "/" + std::string(group));
  }
};

/// GAP_p, GAP_r and delta GAP per service x group x popularity measure. GAP
/// averages per-account means; the t-test pools individual artist values.
inline GapCalcReport gapcalc(const std::vector<SimulatedUserRecord>& records) {
  struct Account {
    Group group;
    std::vector<const SimulatedUserRecord*> seeds, recs;
  };
  GapCalcReport report;
  std::map<std::string, std::map<std::string, Account>> by_service;
  for (const auto& r : records) {
    if (!by_service.contains(r.service)) report.services.push_back(r.service);
    auto& acct = by_service[r.service].try_emplace(r.user, Account{r.group, {}, {}}).first->second;
    if (acct.group != r.group)
      throw ValidationError("user '" + r.user + "' on " + r.service + " has conflicting group labels");
    (r.role == SimulatedUserRecord::Role::ProfileSeed ? acct.seeds : acct.recs).push_back(&r);
  }
  for (const auto& [service, accounts] : by_service)
    for (const auto& [user, acct] : accounts)
      if (acct.seeds.empty() || acct.recs.empty())
        throw ValidationError("user '" + user + "' on " + service + " needs profile-seed and recommended records");

  static const std::pair<const char*, std::optional<Group>> kRows[] = {
      {"overall", std::nullopt}, {"low", Group::Low}, {"medium", Group::Medium}, {"high", Group::High}};
  for (const auto& service : report.services) {
    for (PopularityMeasure m : {PopularityMeasure::Spotify, PopularityMeasure::Lfm}) {
      for (const auto& [name, group] : kRows) {
        GapCalcCell cell;
        cell.service = service;
        cell.group = name;
        cell.measure = m;
        std::vector<double> prof_means, rec_means, prof_values, rec_values;
        for (const auto& [user, acct] : by_service[service]) {
          if (group && acct.group != *group) continue;
          std::vector<double> p, r;
          for (const auto* rec : acct.seeds)
            if (auto v = measure_of(*rec, m)) p.push_back(*v);
          for (const auto* rec : acct.recs)
            if (auto v = measure_of(*rec, m)) r.push_back(*v);
          if (p.empty() || r.empty()) continue;
          ++cell.users;
          prof_means.push_back(ordered_sum(p) / static_cast<double>(p.size()));
          rec_means.push_back(ordered_sum(r) / static_cast<double>(r.size()));
          prof_values.insert(prof_values.end(), p.begin(), p.end());
          rec_values.insert(rec_values.end(), r.begin(), r.end());
        }
        if (cell.users > 0) {
          cell.gap_p = ordered_sum(prof_means) / static_cast<double>(cell.users);
          cell.gap_r = ordered_sum(rec_means) / static_cast<double>(cell.users);
          if (cell.gap_p > 0.0) cell.delta_gap = delta_gap(cell.gap_p, cell.gap_r);
          cell.test = welch_t_test_greater(prof_values, rec_values);
        }
        report.cells.push_back(std::move(cell));
      }
    }
  }
  return report;
}

inline void write_gapcalc_kv(std::ostream& out, const GapCalcReport& r) {
  for (const auto& c : r.cells) {
    const std::string m(to_string(c.measure));
    const std::string key = "." + c.service + "." + c.group + "=";
    out << "users_" << m << key << c.users << '\n';
    out << "gap_p_" << m << key << detail::fixed6(c.gap_p) << '\n';
    out << "gap_r_" << m << key << detail::fixed6(c.gap_r) << '\n';
    out << "delta_gap_" << m << key << detail::fixed6(c.delta_gap) << '\n';
    out << "t_" << m << key << detail::fixed6(c.test.t) << '\n';
    out << "df_" << m << key << detail::fixed6(c.test.df) << '\n';
    out << "p_one_tailed_" << m << key << detail::fixed6(c.test.p_one_tailed) << '\n';
  }
}

inline void write_gapcalc_txt(std::ostream& out, const GapCalcReport& r) {
  static const char* kRows[] = {"overall", "low", "medium", "high"};
  static const char* kNames[] = {"Overall", "Low MS", "Medium MS", "High MS"};
  for (PopularityMeasure m : {PopularityMeasure::Spotify, PopularityMeasure::Lfm}) {
    out << (m == PopularityMeasure::Spotify ? "Spotify popularity" : "LFM popularity (phi)") << " - delta GAP\n";
    out << detail::pad_right("", 12);
    for (const auto& s : r.services) out << detail::pad(s, 14);
    out << '\n';
    for (int i = 0; i < 4; ++i) {
      out << detail::pad_right(kNames[i], 12);
      for (const auto& s : r.services) {
        const double v = r.cell(s, kRows[i], m).delta_gap;
        char buf[32];
        std::snprintf(buf, sizeof(buf), "%.2f", v);
        out << detail::pad(std::isnan(v) ? "n/a" : buf, 14);
      }
      out << '\n';
    }
    out << '\n';
  }
  out << "Detail (GAP_p, GAP_r, one-tailed Welch t-test for GAP_r > GAP_p)\n";
  for (const auto& c : r.cells) {
    out << "  " << detail::pad_right(c.service, 10) << detail::pad_right(c.group, 9)
        << detail::pad_right(std::string(to_string(c.measure)), 9) << "users=" << c.users
        << " gap_p=" << detail::fixed6(c.gap_p) << " gap_r=" << detail::fixed6(c.gap_r)
        << " delta=" << detail::fixed6(c.delta_gap) << " t=" << detail::fixed6(c.test.t)
        << " p=" << detail::fixed6(c.test.p_one_tailed) << '\n';
  }
}

inline void write_gapcalc_files(const std::filesystem::path& dir, const GapCalcReport& r) {
  write_files_atomically(dir, {{"gapcalc.txt", [&](std::ostream& o) { write_gapcalc_txt(o, r); }},
                               {"gapcalc.kv", [&](std::ostream& o) { write_gapcalc_kv(o, r); }}});
}

}  // namespace popbias
