#pragma once

#include <cstddef>
#include <ostream>
#include <vector>

#include "pgd/common.hpp"
#include "pgd/data.hpp"

namespace pgd {

struct WeightedEdge {
  Index a = 0;
  Index b = 0;
  double weight = 1.0;
};

// Symmetric weighted adjacency in CSR layout. Columns are sorted per row.
struct SparseAdjacency {
  Index num_nodes = 0;
  std::vector<std::size_t> row_offsets{0};
  std::vector<Index> column_indices;
  std::vector<double> edge_weights;
  std::vector<double> degree;

  // Each undirected edge is stored in both directions. Duplicate edges are
  // merged by summing weights; self-loops and non-positive weights throw.
  static SparseAdjacency from_undirected(Index num_nodes, const std::vector<WeightedEdge>& edges);

  std::size_t num_stored() const { return column_indices.size(); }
  double weight(Index a, Index b) const;  // 0 when absent
  // Throws ContractError when any structural invariant fails.
  void validate() const;
};

// Node order: [users | items | user attributes | item attributes].
struct TeacherGraph {
  SparseAdjacency adjacency;
  Index num_users = 0;
  Index num_items = 0;
  Index num_user_attrs = 0;
  Index num_item_attrs = 0;

  Index item_offset() const { return num_users; }
  Index attr_offset() const { return num_users + num_items; }
  Index num_nodes() const { return adjacency.num_nodes; }
};

enum class StudentSide { User, Item };

// User student: [items | user attributes], weights s_jk = #users carrying
// attribute k who clicked item j. Item student: [users | item attributes].
struct StudentGraph {
  StudentSide side = StudentSide::User;
  SparseAdjacency adjacency;
  Index num_entities = 0;
  Index num_attrs = 0;
};

TeacherGraph build_teacher_graph(const Dataset& dataset);
StudentGraph build_student_graph(const Dataset& dataset, StudentSide side, bool binarize = false);

// Row-scaled operator D^{-1} A in CSR layout.
struct RowOperator {
  Index num_nodes = 0;
  std::vector<std::size_t> row_offsets{0};
  std::vector<Index> column_indices;
  std::vector<double> values;

  RowOperator transposed() const;
};

// Rows with zero degree become empty rows.
RowOperator normalize_rows(const SparseAdjacency& adjacency);

// row<TAB>col<TAB>weight, sorted by (row, col).
void dump_edges(const SparseAdjacency& adjacency, std::ostream& out);

}  // namespace pgd
