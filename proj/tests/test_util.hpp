#pragma once

#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "popbias.hpp"

namespace popbias::testing {

/// Dataset from (user, artist, count) string records, in file order.
inline InteractionDataset make_dataset(const std::vector<std::tuple<std::string, std::string, int>>& records) {
  std::ostringstream tsv;
  for (const auto& [u, a, c] : records) tsv << u << '\t' << a << '\t' << c << '\n';
  std::istringstream in(tsv.str());
  return read_interactions(in);
}

/// Dataset with users u0.. and artists a0..a{artists-1} from index rows.
inline InteractionDataset make_indexed(std::size_t artists, const std::vector<std::vector<std::pair<Index, Count>>>& rows) {
  std::vector<std::string> users, names;
  std::vector<Triplet> triplets;
  for (std::size_t u = 0; u < rows.size(); ++u) {
    users.push_back("u" + std::to_string(u));
    for (const auto& [a, c] : rows[u]) triplets.push_back({static_cast<Index>(u), a, c});
  }
  for (std::size_t a = 0; a < artists; ++a) names.push_back("a" + std::to_string(a));
  return InteractionDataset::from_triplets(users, names, triplets);
}

/// Random dataset: every user gets 1..max_profile distinct artists.
inline InteractionDataset random_dataset(std::uint64_t seed, std::size_t users, std::size_t artists,
                                         std::size_t max_profile) {
  Rng rng(seed);
  std::vector<std::vector<std::pair<Index, Count>>> rows(users);
  for (auto& row : rows) {
    const std::size_t k = 1 + rng.index(std::min(max_profile, artists));
    std::vector<Index> all(artists);
    for (std::size_t a = 0; a < artists; ++a) all[a] = static_cast<Index>(a);
    for (std::size_t i = 0; i < k; ++i) std::swap(all[i], all[i + rng.index(artists - i)]);
    std::sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(k));
    for (std::size_t i = 0; i < k; ++i) row.emplace_back(all[i], static_cast<Count>(1 + rng.index(5)));
  }
  return make_indexed(artists, rows);
}

/// Test hook: scores each user's held-out artists 1 and everything else 0.
class OracleModel final : public Recommender {
 public:
  explicit OracleModel(const SplitDataset& split) : split_(&split) {}
  std::string_view tag() const override { return "oracle"; }
  void fit(std::shared_ptr<const InteractionDataset>, unsigned = 1) override {}
  std::vector<double> score_user(std::size_t u) const override {
    std::vector<double> s(num_artists(), 0.0);
    for (Index a : split_->masked[u]) s[a] = 1.0;
    return s;
  }
  std::size_t num_artists() const override { return split_->train.num_artists(); }
  ModelContainer save() const override { throw ValidationError("oracle models are not persisted"); }

 private:
  const SplitDataset* split_;
};

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("popbias_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace popbias::testing
