#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <tuple>
#include <unordered_set>
#include <vector>

#include "popbias/error.hpp"

namespace popbias {

using Index = std::uint32_t;
using Count = std::uint32_t;

enum class Group : std::uint8_t { Low = 0, Medium = 1, High = 2 };

inline constexpr Group kAllGroups[] = {Group::Low, Group::Medium, Group::High};

inline std::string_view to_string(Group g) {
  switch (g) {
    case Group::Low: return "low";
    case Group::Medium: return "medium";
    case Group::High: return "high";
  }
  return "?";
}

inline std::optional<Group> parse_group(std::string_view s) {
  if (s == "low") return Group::Low;
  if (s == "medium") return Group::Medium;
  if (s == "high") return Group::High;
  return std::nullopt;
}

struct Triplet {
  Index user;
  Index artist;
  Count count;
};

/// Sparse user x artist play-count matrix in CSR layout. Rows are sorted by
/// artist index, counts are >= 1 and every row is non-empty.
class InteractionDataset {
 public:
  InteractionDataset() = default;

  /// Builds from (user, artist, count) triplets; duplicate pairs are summed.
  static InteractionDataset from_triplets(std::vector<std::string> users,
                                          std::vector<std::string> artists,
                                          std::vector<Triplet> triplets,
                                          std::optional<std::vector<Group>> groups = std::nullopt) {
    InteractionDataset d;
    d.users_ = std::move(users);
    d.artists_ = std::move(artists);
    d.groups_ = std::move(groups);
    std::sort(triplets.begin(), triplets.end(), [](const Triplet& a, const Triplet& b) {
      return std::tie(a.user, a.artist) < std::tie(b.user, b.artist);
    });
    d.row_ptr_.assign(d.users_.size() + 1, 0);
    const Triplet* prev = nullptr;
    for (const auto& t : triplets) {
      if (t.user >= d.users_.size() || t.artist >= d.artists_.size())
        throw ValidationError("triplet index out of range");
      if (t.count < 1) throw ValidationError("play count must be >= 1");
      if (prev && prev->user == t.user && prev->artist == t.artist) {
        const std::uint64_t sum = std::uint64_t{d.counts_.back()} + t.count;
        if (sum > UINT32_MAX) throw ValidationError("play count overflow");
        d.counts_.back() = static_cast<Count>(sum);
      } else {
        d.cols_.push_back(t.artist);
        d.counts_.push_back(t.count);
        d.row_ptr_[t.user + 1]++;
      }
      prev = &t;
    }
    for (std::size_t u = 0; u < d.users_.size(); ++u) d.row_ptr_[u + 1] += d.row_ptr_[u];
    d.validate();
    return d;
  }

  /// Same identifiers and groups, new rows. Rows must be sorted by artist.
  InteractionDataset with_rows(std::vector<std::vector<std::pair<Index, Count>>> rows) const {
    InteractionDataset d;
    d.users_ = users_;
    d.artists_ = artists_;
    d.groups_ = groups_;
    d.row_ptr_.assign(users_.size() + 1, 0);
    for (std::size_t u = 0; u < rows.size(); ++u) {
      for (const auto& [a, c] : rows[u]) {
        d.cols_.push_back(a);
        d.counts_.push_back(c);
      }
      d.row_ptr_[u + 1] = d.cols_.size();
    }
    d.validate();
    return d;
  }

  std::size_t num_users() const noexcept { return users_.size(); }
  std::size_t num_artists() const noexcept { return artists_.size(); }
  std::size_t num_pairs() const noexcept { return cols_.size(); }

  const std::vector<std::string>& users() const noexcept { return users_; }
  const std::vector<std::string>& artists() const noexcept { return artists_; }

  std::span<const Index> row(std::size_t u) const {
    return {cols_.data() + row_ptr_[u], row_ptr_[u + 1] - row_ptr_[u]};
  }
  std::span<const Count> row_counts(std::size_t u) const {
    return {counts_.data() + row_ptr_[u], row_ptr_[u + 1] - row_ptr_[u]};
  }
  std::size_t profile_size(std::size_t u) const { return row_ptr_[u + 1] - row_ptr_[u]; }

  bool contains(std::size_t u, Index a) const {
    auto r = row(u);
    return std::binary_search(r.begin(), r.end(), a);
  }

  const std::optional<std::vector<Group>>& groups() const noexcept { return groups_; }
  void set_groups(std::vector<Group> g) {
    if (g.size() != users_.size()) throw ValidationError("group label count != user count");
    groups_ = std::move(g);
  }

  /// Throws ValidationError if any structural invariant is broken.
  void validate() const {
    check_unique(users_, "user");
    check_unique(artists_, "artist");
    if (row_ptr_.size() != users_.size() + 1) throw ValidationError("row pointer size mismatch");
    if (groups_ && groups_->size() != users_.size())
      throw ValidationError("group label count != user count");
    for (std::size_t u = 0; u < users_.size(); ++u) {
      if (profile_size(u) == 0) throw ValidationError("user '" + users_[u] + "' has an empty profile");
      auto r = row(u);
      for (std::size_t k = 0; k < r.size(); ++k) {
        if (r[k] >= artists_.size()) throw ValidationError("artist index out of range");
        if (k > 0 && r[k] <= r[k - 1]) throw ValidationError("row not strictly sorted");
      }
      for (Count c : row_counts(u))
        if (c < 1) throw ValidationError("stored count < 1");
    }
  }

  friend bool operator==(const InteractionDataset&, const InteractionDataset&) = default;

 private:
  static void check_unique(const std::vector<std::string>& ids, const char* what) {
    std::unordered_set<std::string_view> seen;
    seen.reserve(ids.size());
    for (const auto& id : ids)
      if (!seen.insert(id).second)
        throw ValidationError(std::string("duplicate ") + what + " identifier '" + id + "'");
  }

  std::vector<std::string> users_;
  std::vector<std::string> artists_;
  std::vector<std::size_t> row_ptr_{0};
  std::vector<Index> cols_;
  std::vector<Count> counts_;
  std::optional<std::vector<Group>> groups_;
};

/// Column-major (artist -> users) view of a dataset.
struct ColumnIndex {
  std::vector<std::size_t> col_ptr;
  std::vector<Index> rows;
  std::vector<Count> counts;

  explicit ColumnIndex(const InteractionDataset& d) : col_ptr(d.num_artists() + 1, 0) {
    for (std::size_t u = 0; u < d.num_users(); ++u)
      for (Index a : d.row(u)) col_ptr[a + 1]++;
    for (std::size_t a = 0; a < d.num_artists(); ++a) col_ptr[a + 1] += col_ptr[a];
    rows.resize(d.num_pairs());
    counts.resize(d.num_pairs());
    std::vector<std::size_t> fill(col_ptr.begin(), col_ptr.end() - 1);
    for (std::size_t u = 0; u < d.num_users(); ++u) {
      auto r = d.row(u);
      auto c = d.row_counts(u);
      for (std::size_t k = 0; k < r.size(); ++k) {
        rows[fill[r[k]]] = static_cast<Index>(u);
        counts[fill[r[k]]++] = c[k];
      }
    }
  }

  std::size_t listeners(std::size_t a) const { return col_ptr[a + 1] - col_ptr[a]; }
  std::span<const Index> col(std::size_t a) const {
    return {rows.data() + col_ptr[a], listeners(a)};
  }
  std::span<const Count> col_counts(std::size_t a) const {
    return {counts.data() + col_ptr[a], listeners(a)};
  }
};

}  // namespace popbias
