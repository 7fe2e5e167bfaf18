#pragma once

#include <compare>
#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "pgd/common.hpp"

namespace pgd {

struct Interaction {
  Index user = 0;
  Index item = 0;
  auto operator<=>(const Interaction&) const = default;
};

// Bidirectional external-id <-> contiguous index table.
class IdMap {
 public:
  IdMap() = default;
  explicit IdMap(std::vector<std::string> sorted_names);

  Index size() const { return static_cast<Index>(names_.size()); }
  const std::string& name(Index i) const { return names_.at(static_cast<std::size_t>(i)); }
  // -1 when absent.
  Index find(const std::string& name) const;
  const std::vector<std::string>& names() const { return names_; }

 private:
  std::vector<std::string> names_;
  std::unordered_map<std::string, Index> index_;
};

// Users occupy [0, num_users), items [0, num_items). Attribute indices are
// global: user attributes in [0, num_user_attrs), item attributes in
// [num_user_attrs, num_attrs()).
struct Dataset {
  Index num_users = 0;
  Index num_items = 0;
  Index num_user_attrs = 0;
  Index num_item_attrs = 0;
  std::vector<Interaction> interactions;       // sorted, unique
  std::vector<std::vector<Index>> user_attrs;  // per user, sorted
  std::vector<std::vector<Index>> item_attrs;  // per item, sorted, global
  IdMap user_ids;
  IdMap item_ids;
  IdMap user_attr_ids;
  IdMap item_attr_ids;

  Index num_attrs() const { return num_user_attrs + num_item_attrs; }

  // Throws DataError on any broken invariant. Id maps are only checked when
  // populated.
  void validate() const;
};

struct LoadedInteractions {
  std::vector<std::pair<std::string, std::string>> pairs;
  std::size_t duplicates = 0;
};

enum class EntityKind { User, Item };

using AttributeMap = std::map<std::string, std::set<std::string>>;

LoadedInteractions load_interactions(const std::filesystem::path& path);
AttributeMap load_attributes(const std::filesystem::path& path, EntityKind kind);

// Extra attribute ids to keep in the vocabulary even when no entity in the
// maps carries them.
struct AttributeVocabulary {
  std::set<std::string> user_attrs;
  std::set<std::string> item_attrs;
};

// Entities are the union of interacting entities and attribute-map keys.
// Indices follow lexicographic order of external ids.
Dataset build_dataset(const std::vector<std::pair<std::string, std::string>>& interactions,
                      const AttributeMap& user_attrs, const AttributeMap& item_attrs,
                      const AttributeVocabulary& extra_vocab = {});

struct SplitFractions {
  double new_user = 0.3;
  double new_item = 0.3;
  double val = 0.1;
};

// Held-out entities get their own index spaces, ordered like their original
// indices. Interaction lists use the index space of each endpoint's class:
//   val:           (train user, train item)
//   test_new_user: (new user,   train item)
//   test_new_item: (train user, new item)
//   test_both:     (new user,   new item)
struct SplitBundle {
  Dataset train;
  std::vector<Interaction> val;
  std::vector<Interaction> test_new_user;
  std::vector<Interaction> test_new_item;
  std::vector<Interaction> test_both;
  std::vector<std::vector<Index>> new_user_attrs;  // global attribute indices
  std::vector<std::vector<Index>> new_item_attrs;  // global attribute indices
  std::vector<std::string> new_user_ids;
  std::vector<std::string> new_item_ids;
  SplitFractions fractions;
  std::uint64_t seed = 0;
  // Warnings such as empty test partitions.
  std::vector<std::string> warnings;
};

SplitBundle generate_split(const Dataset& dataset, const SplitFractions& fractions,
                           std::uint64_t seed);

// Directory layout: train.tsv val.tsv test_nu.tsv test_ni.tsv test_nn.tsv
// new_user_attrs.tsv new_item_attrs.tsv train_user_attrs.tsv
// train_item_attrs.tsv attr_vocab.tsv meta.kv
void save_split(const SplitBundle& bundle, const std::filesystem::path& dir);
SplitBundle load_split(const std::filesystem::path& dir);

struct PartitionStats {
  std::size_t users = 0;
  std::size_t items = 0;
  std::size_t ratings = 0;
};

struct SplitStatistics {
  PartitionStats train, val, new_user, new_item, both;
  double train_density = 0.0;
  Index user_attrs = 0;
  Index item_attrs = 0;
};

SplitStatistics split_statistics(const SplitBundle& bundle);
std::string format_split_table(const SplitStatistics& stats);

// Cluster-structured generator used by tests and demos. Every entity has one
// latent cluster; each attribute field reports that cluster with probability
// attr_accuracy and a uniformly chosen other cluster otherwise.
struct SyntheticConfig {
  Index num_users = 400;
  Index num_items = 400;
  Index num_clusters = 4;
  Index attr_fields = 3;
  double attr_accuracy = 0.9;
  Index interactions_per_user = 20;
  double in_cluster_prob = 1.0;
  // Zipf-like exponent for item popularity within a cluster; 0 is uniform.
  double popularity_skew = 0.0;
  std::uint64_t seed = 2024;
};

Dataset make_synthetic(const SyntheticConfig& config);

// Writes interaction and attribute files in the ingestion format.
void write_dataset_files(const Dataset& dataset, const std::filesystem::path& interactions,
                         const std::filesystem::path& user_attrs,
                         const std::filesystem::path& item_attrs);

}  // namespace pgd
