#include "pgd/graph.hpp"

#include <algorithm>
#include <cmath>
#include <tuple>

namespace pgd {

SparseAdjacency SparseAdjacency::from_undirected(Index num_nodes,
                                                 const std::vector<WeightedEdge>& edges) {
  PGD_REQUIRE(num_nodes >= 0, "negative node count");
  std::vector<std::tuple<Index, Index, double>> directed;
  directed.reserve(edges.size() * 2);
  for (const auto& e : edges) {
    PGD_REQUIRE(e.a >= 0 && e.a < num_nodes && e.b >= 0 && e.b < num_nodes,
                strprintf("edge (%d,%d) outside %d nodes", e.a, e.b, num_nodes));
    PGD_REQUIRE(e.a != e.b, strprintf("self-loop on node %d", e.a));
    PGD_REQUIRE(e.weight > 0.0, "edge weights must be positive");
    directed.emplace_back(e.a, e.b, e.weight);
    directed.emplace_back(e.b, e.a, e.weight);
  }
  std::sort(directed.begin(), directed.end(),
            [](const auto& x, const auto& y) {
              return std::tie(std::get<0>(x), std::get<1>(x)) <
                     std::tie(std::get<0>(y), std::get<1>(y));
            });

  SparseAdjacency adj;
  adj.num_nodes = num_nodes;
  adj.row_offsets.assign(static_cast<std::size_t>(num_nodes) + 1, 0);
  adj.degree.assign(static_cast<std::size_t>(num_nodes), 0.0);
  for (std::size_t n = 0; n < directed.size();) {
    const auto [row, col, w0] = directed[n];
    double w = w0;
    std::size_t m = n + 1;
    for (; m < directed.size() && std::get<0>(directed[m]) == row &&
           std::get<1>(directed[m]) == col;
         ++m) {
      w += std::get<2>(directed[m]);
    }
    adj.column_indices.push_back(col);
    adj.edge_weights.push_back(w);
    adj.degree[static_cast<std::size_t>(row)] += w;
    ++adj.row_offsets[static_cast<std::size_t>(row) + 1];
    n = m;
  }
  for (std::size_t r = 0; r < static_cast<std::size_t>(num_nodes); ++r) {
    adj.row_offsets[r + 1] += adj.row_offsets[r];
  }
  return adj;
}

double SparseAdjacency::weight(Index a, Index b) const {
  const auto begin = column_indices.begin() + static_cast<std::ptrdiff_t>(row_offsets[a]);
  const auto end = column_indices.begin() + static_cast<std::ptrdiff_t>(row_offsets[a + 1]);
  const auto it = std::lower_bound(begin, end, b);
  if (it == end || *it != b) return 0.0;
  return edge_weights[static_cast<std::size_t>(it - column_indices.begin())];
}

void SparseAdjacency::validate() const {
  PGD_REQUIRE(row_offsets.size() == static_cast<std::size_t>(num_nodes) + 1, "row_offsets size");
  PGD_REQUIRE(degree.size() == static_cast<std::size_t>(num_nodes), "degree size");
  PGD_REQUIRE(row_offsets.back() == column_indices.size() &&
                  column_indices.size() == edge_weights.size(),
              "CSR arrays disagree");
  for (Index r = 0; r < num_nodes; ++r) {
    double sum = 0.0;
    for (std::size_t e = row_offsets[r]; e < row_offsets[r + 1]; ++e) {
      const Index c = column_indices[e];
      PGD_REQUIRE(c >= 0 && c < num_nodes, "column out of range");
      PGD_REQUIRE(c != r, strprintf("self-loop on node %d", r));
      PGD_REQUIRE(edge_weights[e] > 0.0, "stored zero weight");
      PGD_REQUIRE(e == row_offsets[r] || column_indices[e - 1] < c, "unsorted row");
      PGD_REQUIRE(weight(c, r) == edge_weights[e],
                  strprintf("asymmetric edge (%d,%d)", r, c));
      sum += edge_weights[e];
    }
    PGD_REQUIRE(sum == degree[static_cast<std::size_t>(r)], "degree mismatch");
  }
}

TeacherGraph build_teacher_graph(const Dataset& ds) {
  TeacherGraph g;
  g.num_users = ds.num_users;
  g.num_items = ds.num_items;
  g.num_user_attrs = ds.num_user_attrs;
  g.num_item_attrs = ds.num_item_attrs;
  const Index attr0 = g.attr_offset();
  std::vector<WeightedEdge> edges;
  edges.reserve(ds.interactions.size() + ds.user_attrs.size() + ds.item_attrs.size());
  for (const auto& r : ds.interactions) {
    edges.push_back({r.user, g.item_offset() + r.item, 1.0});
  }
  for (Index u = 0; u < ds.num_users; ++u) {
    for (Index k : ds.user_attrs[static_cast<std::size_t>(u)]) edges.push_back({u, attr0 + k, 1.0});
  }
  for (Index i = 0; i < ds.num_items; ++i) {
    for (Index l : ds.item_attrs[static_cast<std::size_t>(i)]) {
      edges.push_back({g.item_offset() + i, attr0 + l, 1.0});
    }
  }
  g.adjacency = SparseAdjacency::from_undirected(attr0 + ds.num_attrs(), edges);
  return g;
}

StudentGraph build_student_graph(const Dataset& ds, StudentSide side, bool binarize) {
  StudentGraph g;
  g.side = side;
  const bool user_side = side == StudentSide::User;
  g.num_entities = user_side ? ds.num_items : ds.num_users;
  g.num_attrs = user_side ? ds.num_user_attrs : ds.num_item_attrs;
  const Index attr_shift = user_side ? 0 : ds.num_user_attrs;

  // (entity, local attribute) per co-occurrence, counted after sorting
  std::vector<std::pair<Index, Index>> links;
  for (const auto& r : ds.interactions) {
    const Index entity = user_side ? r.item : r.user;
    const auto& attrs = user_side ? ds.user_attrs[static_cast<std::size_t>(r.user)]
                                  : ds.item_attrs[static_cast<std::size_t>(r.item)];
    for (Index a : attrs) links.emplace_back(entity, a - attr_shift);
  }
  std::sort(links.begin(), links.end());
  std::vector<WeightedEdge> edges;
  for (std::size_t n = 0; n < links.size();) {
    std::size_t m = n;
    while (m < links.size() && links[m] == links[n]) ++m;
    const double count = binarize ? 1.0 : static_cast<double>(m - n);
    edges.push_back({links[n].first, g.num_entities + links[n].second, count});
    n = m;
  }
  g.adjacency = SparseAdjacency::from_undirected(g.num_entities + g.num_attrs, edges);
  return g;
}

RowOperator normalize_rows(const SparseAdjacency& adj) {
  RowOperator op;
  op.num_nodes = adj.num_nodes;
  op.row_offsets.assign(static_cast<std::size_t>(adj.num_nodes) + 1, 0);
  for (Index r = 0; r < adj.num_nodes; ++r) {
    const double deg = adj.degree[static_cast<std::size_t>(r)];
    for (std::size_t e = adj.row_offsets[r]; e < adj.row_offsets[r + 1]; ++e) {
      if (deg <= 0.0) break;
      op.column_indices.push_back(adj.column_indices[e]);
      op.values.push_back(adj.edge_weights[e] / deg);
    }
    op.row_offsets[static_cast<std::size_t>(r) + 1] = op.column_indices.size();
  }
  return op;
}

RowOperator RowOperator::transposed() const {
  RowOperator t;
  t.num_nodes = num_nodes;
  t.row_offsets.assign(static_cast<std::size_t>(num_nodes) + 1, 0);
  for (Index c : column_indices) ++t.row_offsets[static_cast<std::size_t>(c) + 1];
  for (std::size_t r = 0; r < static_cast<std::size_t>(num_nodes); ++r) {
    t.row_offsets[r + 1] += t.row_offsets[r];
  }
  t.column_indices.resize(column_indices.size());
  t.values.resize(values.size());
  std::vector<std::size_t> cursor(t.row_offsets.begin(), t.row_offsets.end() - 1);
  // visiting source rows in order keeps each transposed row sorted
  for (Index r = 0; r < num_nodes; ++r) {
    for (std::size_t e = row_offsets[r]; e < row_offsets[r + 1]; ++e) {
      const auto slot = cursor[static_cast<std::size_t>(column_indices[e])]++;
      t.column_indices[slot] = r;
      t.values[slot] = values[e];
    }
  }
  return t;
}

void dump_edges(const SparseAdjacency& adj, std::ostream& out) {
  for (Index r = 0; r < adj.num_nodes; ++r) {
    for (std::size_t e = adj.row_offsets[r]; e < adj.row_offsets[r + 1]; ++e) {
      out << r << '\t' << adj.column_indices[e] << '\t'
          << strprintf("%.17g", adj.edge_weights[e]) << '\n';
    }
  }
}

}  // namespace pgd
