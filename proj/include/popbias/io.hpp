#pragma once

#include <charconv>
#include <filesystem>
#include <fstream>
#include <istream>
#include <ostream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "popbias/dataset.hpp"
#include "popbias/error.hpp"

namespace popbias {

namespace detail {

inline std::vector<std::string_view> split_tabs(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    const std::size_t tab = line.find('\t', start);
    out.push_back(line.substr(start, tab - start));
    if (tab == std::string_view::npos) break;
    start = tab + 1;
  }
  return out;
}

inline std::string_view strip_cr(std::string_view s) {
  if (!s.empty() && s.back() == '\r') s.remove_suffix(1);
  return s;
}

inline bool parse_int(std::string_view s, long long& out) {
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc{} && p == s.data() + s.size() && !s.empty();
}

inline std::ifstream open_input(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open '" + path.string() + "'");
  return in;
}

}  // namespace detail

/// Reads `user \t artist \t count` records. Blank lines and `#` comments are
/// skipped; the first data line may be a header.
inline InteractionDataset read_interactions(std::istream& in, const std::string& source = "<input>") {
  std::vector<std::string> users, artists;
  std::unordered_map<std::string, Index> user_ix, artist_ix;
  std::vector<Triplet> triplets;
  std::string line;
  std::size_t lineno = 0;
  bool first_data = true;
  auto intern = [](std::string_view key, std::vector<std::string>& ids,
                   std::unordered_map<std::string, Index>& ix) {
    auto [it, inserted] = ix.try_emplace(std::string(key), static_cast<Index>(ids.size()));
    if (inserted) ids.emplace_back(key);
    return it->second;
  };
  while (std::getline(in, line)) {
    ++lineno;
    const std::string_view view = detail::strip_cr(line);
    if (view.empty() || view.front() == '#') continue;
    auto fields = detail::split_tabs(view);
    if (fields.size() != 3) throw ParseError(source, lineno, "expected 3 tab-separated fields");
    long long count = 0;
    const bool numeric = detail::parse_int(fields[2], count);
    if (!numeric) {
      if (first_data) {
        first_data = false;
        continue;
      }
      throw ParseError(source, lineno, "count is not an integer");
    }
    first_data = false;
    if (fields[0].empty() || fields[1].empty()) throw ParseError(source, lineno, "empty identifier");
    if (count < 1)
      throw ValidationError(source + ":" + std::to_string(lineno) + ": count must be >= 1");
    if (count > UINT32_MAX) throw ValidationError(source + ":" + std::to_string(lineno) + ": count too large");
    triplets.push_back({intern(fields[0], users, user_ix), intern(fields[1], artists, artist_ix),
                        static_cast<Count>(count)});
  }
  return InteractionDataset::from_triplets(std::move(users), std::move(artists), std::move(triplets));
}

/// Reads `user \t {low|medium|high}` and attaches labels. Every user of the
/// dataset must be labelled; unknown users are rejected.
inline void read_groups(std::istream& in, InteractionDataset& dataset, const std::string& source = "<groups>") {
  std::unordered_map<std::string_view, std::size_t> index;
  for (std::size_t u = 0; u < dataset.num_users(); ++u) index.emplace(dataset.users()[u], u);
  std::vector<std::optional<Group>> labels(dataset.num_users());
  std::string line;
  std::size_t lineno = 0;
  bool first_data = true;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string_view view = detail::strip_cr(line);
    if (view.empty() || view.front() == '#') continue;
    auto fields = detail::split_tabs(view);
    if (fields.size() != 2) throw ParseError(source, lineno, "expected 2 tab-separated fields");
    auto group = parse_group(fields[1]);
    if (!group) {
      if (first_data) {
        first_data = false;
        continue;
      }
      throw ParseError(source, lineno, "unknown group label '" + std::string(fields[1]) + "'");
    }
    first_data = false;
    auto it = index.find(fields[0]);
    if (it == index.end())
      throw ValidationError(source + ":" + std::to_string(lineno) + ": unknown user '" +
                            std::string(fields[0]) + "'");
    labels[it->second] = *group;
  }
  std::vector<Group> out;
  out.reserve(labels.size());
  for (std::size_t u = 0; u < labels.size(); ++u) {
    if (!labels[u]) throw ValidationError(source + ": no group for user '" + dataset.users()[u] + "'");
    out.push_back(*labels[u]);
  }
  dataset.set_groups(std::move(out));
}

inline InteractionDataset ingest_interactions(const std::filesystem::path& path,
                                              const std::filesystem::path& group_path = {}) {
  auto in = detail::open_input(path);
  auto dataset = read_interactions(in, path.string());
  if (!group_path.empty()) {
    auto gin = detail::open_input(group_path);
    read_groups(gin, dataset, group_path.string());
  }
  return dataset;
}

inline void write_interactions(std::ostream& out, const InteractionDataset& d) {
  out << "user_id\tartist_id\tcount\n";
  for (std::size_t u = 0; u < d.num_users(); ++u) {
    auto r = d.row(u);
    auto c = d.row_counts(u);
    for (std::size_t k = 0; k < r.size(); ++k)
      out << d.users()[u] << '\t' << d.artists()[r[k]] << '\t' << c[k] << '\n';
  }
}

inline void write_groups(std::ostream& out, const InteractionDataset& d) {
  if (!d.groups()) throw ValidationError("dataset has no group labels");
  for (std::size_t u = 0; u < d.num_users(); ++u)
    out << d.users()[u] << '\t' << to_string((*d.groups())[u]) << '\n';
}

}  // namespace popbias
