#include "pgd/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <numeric>
#include <sstream>
#include <unordered_set>

namespace pgd {

namespace fs = std::filesystem;

IdMap::IdMap(std::vector<std::string> sorted_names) : names_(std::move(sorted_names)) {
  index_.reserve(names_.size());
  for (std::size_t i = 0; i < names_.size(); ++i) {
    index_.emplace(names_[i], static_cast<Index>(i));
  }
}

Index IdMap::find(const std::string& name) const {
  auto it = index_.find(name);
  return it == index_.end() ? -1 : it->second;
}

void Dataset::validate() const {
  if (num_users < 0 || num_items < 0 || num_user_attrs < 0 || num_item_attrs < 0) {
    throw DataError("negative dataset dimension");
  }
  if (user_attrs.size() != static_cast<std::size_t>(num_users) ||
      item_attrs.size() != static_cast<std::size_t>(num_items)) {
    throw DataError("attribute rows do not match entity counts");
  }
  for (std::size_t n = 0; n < interactions.size(); ++n) {
    const auto& r = interactions[n];
    if (r.user < 0 || r.user >= num_users || r.item < 0 || r.item >= num_items) {
      throw DataError(strprintf("interaction (%d,%d) out of range", r.user, r.item));
    }
    if (n > 0 && !(interactions[n - 1] < r)) {
      throw DataError("interactions must be sorted and unique");
    }
  }
  for (Index u = 0; u < num_users; ++u) {
    const auto& attrs = user_attrs[static_cast<std::size_t>(u)];
    if (attrs.empty()) throw DataError(strprintf("user %d has no attributes", u));
    for (Index k : attrs) {
      if (k < 0 || k >= num_user_attrs) {
        throw DataError(strprintf("user %d attribute %d outside [0,%d)", u, k, num_user_attrs));
      }
    }
  }
  for (Index i = 0; i < num_items; ++i) {
    const auto& attrs = item_attrs[static_cast<std::size_t>(i)];
    if (attrs.empty()) throw DataError(strprintf("item %d has no attributes", i));
    for (Index l : attrs) {
      if (l < num_user_attrs || l >= num_attrs()) {
        throw DataError(strprintf("item %d attribute %d outside [%d,%d)", i, l,
                                  num_user_attrs, num_attrs()));
      }
    }
  }
  if (user_ids.size() > 0 && user_ids.size() != num_users) throw DataError("user id map size");
  if (item_ids.size() > 0 && item_ids.size() != num_items) throw DataError("item id map size");
}

namespace {

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find('\t', start);
    out.push_back(line.substr(start, pos - start));
    if (pos == std::string::npos) break;
    start = pos + 1;
  }
  return out;
}

bool looks_numeric(const std::string& s) {
  if (s.empty()) return false;
  char* end = nullptr;
  std::strtod(s.c_str(), &end);
  return end == s.c_str() + s.size();
}

std::ifstream open_input(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  return in;
}

LoadedInteractions read_pairs(const fs::path& path, bool allow_empty) {
  auto in = open_input(path);
  LoadedInteractions out;
  std::unordered_set<std::string> seen;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto fields = split_tabs(line);
    if (fields.size() != 2 || fields[0].empty() || fields[1].empty()) {
      throw DataError(strprintf("%s:%zu: expected <user_id>\\t<item_id>", path.string().c_str(),
                                lineno));
    }
    if (!seen.insert(fields[0] + '\t' + fields[1]).second) {
      ++out.duplicates;
      continue;
    }
    out.pairs.emplace_back(std::move(fields[0]), std::move(fields[1]));
  }
  if (out.pairs.empty() && !allow_empty) {
    throw DataError("empty dataset: no interactions in " + path.string());
  }
  return out;
}

std::vector<std::string> sorted_names(const std::set<std::string>& s) {
  return {s.begin(), s.end()};
}

// floor(frac * n), tolerant of 0.3*10 style round-off.
std::size_t fraction_count(double frac, std::size_t n) {
  return static_cast<std::size_t>(std::floor(frac * static_cast<double>(n) + 1e-9));
}

// Partial Fisher-Yates: returns k distinct values of [0, n), sorted.
std::vector<Index> sample_without_replacement(Rng& rng, std::size_t n, std::size_t k) {
  std::vector<Index> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  for (std::size_t t = 0; t < k; ++t) {
    const std::size_t j = t + uniform_index(rng, n - t);
    std::swap(perm[t], perm[j]);
  }
  perm.resize(k);
  std::sort(perm.begin(), perm.end());
  return perm;
}

}  // namespace

LoadedInteractions load_interactions(const fs::path& path) { return read_pairs(path, false); }

AttributeMap load_attributes(const fs::path& path, EntityKind kind) {
  const char* what = kind == EntityKind::User ? "user" : "item";
  auto in = open_input(path);
  AttributeMap out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto fields = split_tabs(line);
    const auto where = strprintf("%s:%zu", path.string().c_str(), lineno);
    if (fields[0].empty()) throw DataError(where + ": empty " + what + " id");
    if (fields.size() < 2) {
      throw DataError(where + ": " + what + " '" + fields[0] + "' has zero attributes");
    }
    auto& attrs = out[fields[0]];
    for (std::size_t f = 1; f < fields.size(); ++f) {
      if (fields[f].empty()) throw DataError(where + ": empty attribute field");
      if (looks_numeric(fields[f])) {
        throw DataError(where + ": numeric attribute value '" + fields[f] +
                        "'; attributes must be categorical");
      }
      attrs.insert(fields[f]);
    }
  }
  return out;
}

Dataset build_dataset(const std::vector<std::pair<std::string, std::string>>& interactions,
                      const AttributeMap& user_attrs, const AttributeMap& item_attrs,
                      const AttributeVocabulary& extra_vocab) {
  std::set<std::string> users, items;
  std::set<std::string> missing;
  for (const auto& [u, i] : interactions) {
    users.insert(u);
    items.insert(i);
    if (!user_attrs.count(u)) missing.insert("user " + u);
    if (!item_attrs.count(i)) missing.insert("item " + i);
  }
  if (!missing.empty()) {
    std::string msg = "entities without attributes:";
    std::size_t shown = 0;
    for (const auto& m : missing) {
      if (shown++ == 10) {
        msg += strprintf(" ... (%zu total)", missing.size());
        break;
      }
      msg += " " + m;
    }
    throw DataError(msg);
  }
  std::set<std::string> uvocab = extra_vocab.user_attrs;
  std::set<std::string> ivocab = extra_vocab.item_attrs;
  for (const auto& [u, attrs] : user_attrs) {
    if (attrs.empty()) throw DataError("user " + u + " has zero attributes");
    users.insert(u);
    uvocab.insert(attrs.begin(), attrs.end());
  }
  for (const auto& [i, attrs] : item_attrs) {
    if (attrs.empty()) throw DataError("item " + i + " has zero attributes");
    items.insert(i);
    ivocab.insert(attrs.begin(), attrs.end());
  }

  Dataset ds;
  ds.user_ids = IdMap(sorted_names(users));
  ds.item_ids = IdMap(sorted_names(items));
  ds.user_attr_ids = IdMap(sorted_names(uvocab));
  ds.item_attr_ids = IdMap(sorted_names(ivocab));
  ds.num_users = ds.user_ids.size();
  ds.num_items = ds.item_ids.size();
  ds.num_user_attrs = ds.user_attr_ids.size();
  ds.num_item_attrs = ds.item_attr_ids.size();

  ds.user_attrs.resize(static_cast<std::size_t>(ds.num_users));
  for (const auto& [u, attrs] : user_attrs) {
    auto& row = ds.user_attrs[static_cast<std::size_t>(ds.user_ids.find(u))];
    for (const auto& a : attrs) row.push_back(ds.user_attr_ids.find(a));
    std::sort(row.begin(), row.end());
  }
  ds.item_attrs.resize(static_cast<std::size_t>(ds.num_items));
  for (const auto& [i, attrs] : item_attrs) {
    auto& row = ds.item_attrs[static_cast<std::size_t>(ds.item_ids.find(i))];
    for (const auto& a : attrs) row.push_back(ds.num_user_attrs + ds.item_attr_ids.find(a));
    std::sort(row.begin(), row.end());
  }
  ds.interactions.reserve(interactions.size());
  for (const auto& [u, i] : interactions) {
    ds.interactions.push_back({ds.user_ids.find(u), ds.item_ids.find(i)});
  }
  std::sort(ds.interactions.begin(), ds.interactions.end());
  ds.interactions.erase(std::unique(ds.interactions.begin(), ds.interactions.end()),
                        ds.interactions.end());
  ds.validate();
  return ds;
}

SplitBundle generate_split(const Dataset& dataset, const SplitFractions& fractions,
                           std::uint64_t seed) {
  for (double f : {fractions.new_user, fractions.new_item, fractions.val}) {
    if (!(f > 0.0 && f < 1.0)) throw SplitError(strprintf("fraction %g outside (0,1)", f));
  }
  if (dataset.num_users == 0 || dataset.num_items == 0 || dataset.interactions.empty()) {
    throw SplitError("cannot split an empty dataset");
  }
  const auto M = static_cast<std::size_t>(dataset.num_users);
  const auto N = static_cast<std::size_t>(dataset.num_items);

  Rng rng(seed);
  const auto new_users = sample_without_replacement(rng, M, fraction_count(fractions.new_user, M));
  const auto new_items = sample_without_replacement(rng, N, fraction_count(fractions.new_item, N));

  // remap[e] >= 0: index in the train space; otherwise -(index in new space) - 1
  auto remap_entities = [](std::size_t n, const std::vector<Index>& held_out) {
    std::vector<Index> remap(n);
    Index next_old = 0, next_new = 0;
    std::size_t h = 0;
    for (std::size_t e = 0; e < n; ++e) {
      if (h < held_out.size() && held_out[h] == static_cast<Index>(e)) {
        remap[e] = -(next_new++) - 1;
        ++h;
      } else {
        remap[e] = next_old++;
      }
    }
    return remap;
  };
  const auto user_map = remap_entities(M, new_users);
  const auto item_map = remap_entities(N, new_items);

  SplitBundle out;
  out.fractions = fractions;
  out.seed = seed;

  std::vector<Interaction> old_old;
  for (const auto& r : dataset.interactions) {
    const Index u = user_map[static_cast<std::size_t>(r.user)];
    const Index i = item_map[static_cast<std::size_t>(r.item)];
    if (u >= 0 && i >= 0) {
      old_old.push_back({u, i});
    } else if (u < 0 && i >= 0) {
      out.test_new_user.push_back({-u - 1, i});
    } else if (u >= 0) {
      out.test_new_item.push_back({u, -i - 1});
    } else {
      out.test_both.push_back({-u - 1, -i - 1});
    }
  }
  const auto val_pick =
      sample_without_replacement(rng, old_old.size(), fraction_count(fractions.val, old_old.size()));
  std::vector<char> is_val(old_old.size(), 0);
  for (Index v : val_pick) is_val[static_cast<std::size_t>(v)] = 1;

  Dataset& train = out.train;
  train.num_user_attrs = dataset.num_user_attrs;
  train.num_item_attrs = dataset.num_item_attrs;
  train.user_attr_ids = dataset.user_attr_ids;
  train.item_attr_ids = dataset.item_attr_ids;
  for (std::size_t n = 0; n < old_old.size(); ++n) {
    (is_val[n] ? out.val : train.interactions).push_back(old_old[n]);
  }

  std::vector<std::string> train_user_names, train_item_names;
  const bool named = dataset.user_ids.size() == dataset.num_users &&
                     dataset.item_ids.size() == dataset.num_items;
  for (std::size_t u = 0; u < M; ++u) {
    const auto& attrs = dataset.user_attrs[u];
    std::string name = named ? dataset.user_ids.name(static_cast<Index>(u)) : std::to_string(u);
    if (user_map[u] >= 0) {
      train.user_attrs.push_back(attrs);
      train_user_names.push_back(std::move(name));
    } else {
      out.new_user_attrs.push_back(attrs);
      out.new_user_ids.push_back(std::move(name));
    }
  }
  for (std::size_t i = 0; i < N; ++i) {
    const auto& attrs = dataset.item_attrs[i];
    std::string name = named ? dataset.item_ids.name(static_cast<Index>(i)) : std::to_string(i);
    if (item_map[i] >= 0) {
      train.item_attrs.push_back(attrs);
      train_item_names.push_back(std::move(name));
    } else {
      out.new_item_attrs.push_back(attrs);
      out.new_item_ids.push_back(std::move(name));
    }
  }
  train.num_users = static_cast<Index>(train.user_attrs.size());
  train.num_items = static_cast<Index>(train.item_attrs.size());
  if (named) {
    train.user_ids = IdMap(std::move(train_user_names));
    train.item_ids = IdMap(std::move(train_item_names));
  }

  if (train.interactions.empty()) {
    throw SplitError("split left no training interactions; try a different seed or smaller fractions");
  }
  if (out.test_new_user.empty() && out.test_new_item.empty() && out.test_both.empty()) {
    throw SplitError("split produced no test interactions; try a different seed or larger fractions");
  }
  if (out.val.empty()) out.warnings.push_back("validation partition is empty");
  if (out.test_new_user.empty()) out.warnings.push_back("new-user test partition is empty");
  if (out.test_new_item.empty()) out.warnings.push_back("new-item test partition is empty");
  if (out.test_both.empty()) out.warnings.push_back("new-user/new-item test partition is empty");
  return out;
}

namespace {

void write_pairs(const fs::path& path, const std::vector<Interaction>& rows,
                 const std::vector<std::string>& users, const std::vector<std::string>& items) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  for (const auto& r : rows) {
    out << users[static_cast<std::size_t>(r.user)] << '\t'
        << items[static_cast<std::size_t>(r.item)] << '\n';
  }
}

void write_attrs(const fs::path& path, const std::vector<std::string>& names,
                 const std::vector<std::vector<Index>>& attrs, const IdMap& vocab, Index offset) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  for (std::size_t e = 0; e < names.size(); ++e) {
    out << names[e];
    for (Index a : attrs[e]) out << '\t' << vocab.name(a - offset);
    out << '\n';
  }
}

std::map<std::string, std::string> read_kv(const fs::path& path) {
  auto in = open_input(path);
  std::map<std::string, std::string> kv;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw DataError("malformed line in " + path.string() + ": " + line);
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return kv;
}

std::vector<Interaction> map_pairs(const fs::path& path, const IdMap& users, const IdMap& items) {
  std::vector<Interaction> out;
  for (const auto& [u, i] : read_pairs(path, true).pairs) {
    const Index ui = users.find(u);
    const Index ii = items.find(i);
    if (ui < 0 || ii < 0) {
      throw DataError(path.string() + ": unknown entity in pair (" + u + ", " + i + ")");
    }
    out.push_back({ui, ii});
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace

void save_split(const SplitBundle& b, const fs::path& dir) {
  const auto& train = b.train;
  if (train.user_ids.size() != train.num_users || train.item_ids.size() != train.num_items ||
      train.user_attr_ids.size() != train.num_user_attrs ||
      train.item_attr_ids.size() != train.num_item_attrs) {
    throw DataError("cannot serialize a split whose dataset carries no external ids");
  }
  fs::create_directories(dir);
  const auto& tu = train.user_ids.names();
  const auto& ti = train.item_ids.names();
  write_pairs(dir / "train.tsv", train.interactions, tu, ti);
  write_pairs(dir / "val.tsv", b.val, tu, ti);
  write_pairs(dir / "test_nu.tsv", b.test_new_user, b.new_user_ids, ti);
  write_pairs(dir / "test_ni.tsv", b.test_new_item, tu, b.new_item_ids);
  write_pairs(dir / "test_nn.tsv", b.test_both, b.new_user_ids, b.new_item_ids);
  write_attrs(dir / "new_user_attrs.tsv", b.new_user_ids, b.new_user_attrs, train.user_attr_ids, 0);
  write_attrs(dir / "new_item_attrs.tsv", b.new_item_ids, b.new_item_attrs, train.item_attr_ids,
              train.num_user_attrs);
  write_attrs(dir / "train_user_attrs.tsv", tu, train.user_attrs, train.user_attr_ids, 0);
  write_attrs(dir / "train_item_attrs.tsv", ti, train.item_attrs, train.item_attr_ids,
              train.num_user_attrs);
  {
    std::ofstream out(dir / "attr_vocab.tsv", std::ios::binary);
    for (const auto& a : train.user_attr_ids.names()) out << "user\t" << a << '\n';
    for (const auto& a : train.item_attr_ids.names()) out << "item\t" << a << '\n';
  }
  std::ofstream meta(dir / "meta.kv", std::ios::binary);
  meta << "seed=" << b.seed << '\n'
       << strprintf("new_user_frac=%.17g\nnew_item_frac=%.17g\nval_frac=%.17g\n",
                    b.fractions.new_user, b.fractions.new_item, b.fractions.val)
       << "M=" << train.num_users << '\n'
       << "N=" << train.num_items << '\n'
       << "D_u=" << train.num_user_attrs << '\n'
       << "D_v=" << train.num_item_attrs << '\n'
       << "new_users=" << b.new_user_ids.size() << '\n'
       << "new_items=" << b.new_item_ids.size() << '\n';
  if (!meta) throw DataError("cannot write " + (dir / "meta.kv").string());
}

SplitBundle load_split(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw DataError("split directory not found: " + dir.string());
  const auto meta = read_kv(dir / "meta.kv");
  auto meta_get = [&](const std::string& key) {
    auto it = meta.find(key);
    if (it == meta.end()) throw DataError("meta.kv missing key " + key);
    return it->second;
  };

  AttributeVocabulary vocab;
  {
    auto in = open_input(dir / "attr_vocab.tsv");
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      auto f = split_tabs(line);
      if (f.size() != 2 || (f[0] != "user" && f[0] != "item")) {
        throw DataError("malformed attr_vocab.tsv line: " + line);
      }
      (f[0] == "user" ? vocab.user_attrs : vocab.item_attrs).insert(f[1]);
    }
  }
  const auto train_pairs = read_pairs(dir / "train.tsv", false);
  const auto user_attrs = load_attributes(dir / "train_user_attrs.tsv", EntityKind::User);
  const auto item_attrs = load_attributes(dir / "train_item_attrs.tsv", EntityKind::Item);

  SplitBundle b;
  b.train = build_dataset(train_pairs.pairs, user_attrs, item_attrs, vocab);
  b.seed = std::stoull(meta_get("seed"));
  b.fractions.new_user = std::stod(meta_get("new_user_frac"));
  b.fractions.new_item = std::stod(meta_get("new_item_frac"));
  b.fractions.val = std::stod(meta_get("val_frac"));
  const auto& train = b.train;
  if (std::stoi(meta_get("M")) != train.num_users || std::stoi(meta_get("N")) != train.num_items ||
      std::stoi(meta_get("D_u")) != train.num_user_attrs ||
      std::stoi(meta_get("D_v")) != train.num_item_attrs) {
    throw DataError("meta.kv dimensions disagree with split files in " + dir.string());
  }

  auto read_new = [&](const fs::path& path, EntityKind kind, const IdMap& attr_vocab,
                      Index offset, std::vector<std::string>& ids,
                      std::vector<std::vector<Index>>& attrs) {
    for (const auto& [name, set] : load_attributes(path, kind)) {
      ids.push_back(name);
      auto& row = attrs.emplace_back();
      for (const auto& a : set) {
        const Index k = attr_vocab.find(a);
        if (k < 0) throw DataError(path.string() + ": attribute not in vocabulary: " + a);
        row.push_back(k + offset);
      }
      std::sort(row.begin(), row.end());
    }
  };
  read_new(dir / "new_user_attrs.tsv", EntityKind::User, train.user_attr_ids, 0, b.new_user_ids,
           b.new_user_attrs);
  read_new(dir / "new_item_attrs.tsv", EntityKind::Item, train.item_attr_ids,
           train.num_user_attrs, b.new_item_ids, b.new_item_attrs);
  const IdMap new_users(b.new_user_ids);
  const IdMap new_items(b.new_item_ids);

  b.val = map_pairs(dir / "val.tsv", train.user_ids, train.item_ids);
  b.test_new_user = map_pairs(dir / "test_nu.tsv", new_users, train.item_ids);
  b.test_new_item = map_pairs(dir / "test_ni.tsv", train.user_ids, new_items);
  b.test_both = map_pairs(dir / "test_nn.tsv", new_users, new_items);
  return b;
}

namespace {

PartitionStats partition_stats(const std::vector<Interaction>& rows) {
  std::set<Index> users, items;
  for (const auto& r : rows) {
    users.insert(r.user);
    items.insert(r.item);
  }
  return {users.size(), items.size(), rows.size()};
}

}  // namespace

SplitStatistics split_statistics(const SplitBundle& b) {
  SplitStatistics s;
  s.train = partition_stats(b.train.interactions);
  s.val = partition_stats(b.val);
  s.new_user = partition_stats(b.test_new_user);
  s.new_item = partition_stats(b.test_new_item);
  s.both = partition_stats(b.test_both);
  const double cells = static_cast<double>(b.train.num_users) * static_cast<double>(b.train.num_items);
  s.train_density = cells > 0 ? static_cast<double>(s.train.ratings) / cells : 0.0;
  s.user_attrs = b.train.num_user_attrs;
  s.item_attrs = b.train.num_item_attrs;
  return s;
}

std::string format_split_table(const SplitStatistics& s) {
  std::ostringstream out;
  auto row = [&](const char* group, const char* what, std::size_t v) {
    out << strprintf("%-34s %-10s %12zu\n", group, what, v);
  };
  row("Train", "Old Users", s.train.users);
  row("", "Old Items", s.train.items);
  row("", "Ratings", s.train.ratings);
  out << strprintf("%-34s %-10s %11.3f%%\n", "", "Density", 100.0 * s.train_density);
  row("Val", "Old Users", s.val.users);
  row("", "Old Items", s.val.items);
  row("", "Ratings", s.val.ratings);
  row("Test new user", "New Users", s.new_user.users);
  row("", "Old Items", s.new_user.items);
  row("", "Ratings", s.new_user.ratings);
  row("Test new item", "Old Users", s.new_item.users);
  row("", "New Items", s.new_item.items);
  row("", "Ratings", s.new_item.ratings);
  row("Test new user and new item", "New Users", s.both.users);
  row("", "New Items", s.both.items);
  row("", "Ratings", s.both.ratings);
  row("User Attributes", "", static_cast<std::size_t>(s.user_attrs));
  row("Item Attributes", "", static_cast<std::size_t>(s.item_attrs));
  return out.str();
}

Dataset make_synthetic(const SyntheticConfig& cfg) {
  PGD_REQUIRE(cfg.num_users > 0 && cfg.num_items > 0 && cfg.num_clusters > 1,
              "synthetic dataset needs users, items and at least two clusters");
  PGD_REQUIRE(cfg.attr_fields >= 1, "synthetic dataset needs at least one attribute field");
  Rng rng(cfg.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const auto C = static_cast<std::size_t>(cfg.num_clusters);

  auto noisy_cluster = [&](std::size_t truth) {
    if (unit(rng) < cfg.attr_accuracy) return truth;
    std::size_t other = uniform_index(rng, C - 1);
    return other >= truth ? other + 1 : other;
  };
  auto attributes_for = [&](const char* prefix, std::size_t cluster) {
    std::set<std::string> attrs;
    for (Index f = 0; f < cfg.attr_fields; ++f) {
      attrs.insert(strprintf("%s%d_c%zu", prefix, f, noisy_cluster(cluster)));
    }
    return attrs;
  };

  AttributeMap user_attrs, item_attrs;
  std::vector<std::size_t> item_cluster(static_cast<std::size_t>(cfg.num_items));
  std::vector<std::vector<std::size_t>> cluster_items(C);
  for (Index i = 0; i < cfg.num_items; ++i) {
    const std::size_t c = uniform_index(rng, C);
    item_cluster[static_cast<std::size_t>(i)] = c;
    cluster_items[c].push_back(static_cast<std::size_t>(i));
    item_attrs[strprintf("i%05d", i)] = attributes_for("ia", c);
  }
  std::vector<std::discrete_distribution<std::size_t>> popularity;
  for (const auto& members : cluster_items) {
    std::vector<double> w(members.size());
    for (std::size_t r = 0; r < w.size(); ++r) {
      w[r] = std::pow(static_cast<double>(r + 1), -cfg.popularity_skew);
    }
    popularity.emplace_back(w.begin(), w.end());
  }

  std::vector<std::pair<std::string, std::string>> pairs;
  const auto per_user = std::min(cfg.interactions_per_user, cfg.num_items);
  for (Index u = 0; u < cfg.num_users; ++u) {
    const std::size_t c = uniform_index(rng, C);
    const auto uname = strprintf("u%05d", u);
    user_attrs[uname] = attributes_for("ua", c);
    std::set<std::size_t> chosen;
    std::size_t attempts = 0;
    while (chosen.size() < static_cast<std::size_t>(per_user) && attempts++ < 100000) {
      std::size_t item;
      if (!cluster_items[c].empty() && unit(rng) < cfg.in_cluster_prob) {
        item = cluster_items[c][popularity[c](rng)];
      } else {
        item = uniform_index(rng, static_cast<std::size_t>(cfg.num_items));
      }
      chosen.insert(item);
    }
    for (std::size_t item : chosen) {
      pairs.emplace_back(uname, strprintf("i%05d", static_cast<Index>(item)));
    }
  }
  return build_dataset(pairs, user_attrs, item_attrs);
}

void write_dataset_files(const Dataset& ds, const fs::path& interactions,
                         const fs::path& user_attrs, const fs::path& item_attrs) {
  write_pairs(interactions, ds.interactions, ds.user_ids.names(), ds.item_ids.names());
  write_attrs(user_attrs, ds.user_ids.names(), ds.user_attrs, ds.user_attr_ids, 0);
  write_attrs(item_attrs, ds.item_ids.names(), ds.item_attrs, ds.item_attr_ids,
              ds.num_user_attrs);
}

}  // namespace pgd
