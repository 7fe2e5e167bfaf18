#pragma once

#include <memory>
#include <span>
#include <vector>

#include "pgd/common.hpp"
#include "pgd/graph.hpp"

namespace pgd {

// Dense row-major rows x dim table of doubles.
class EmbeddingTable {
 public:
  EmbeddingTable() = default;
  EmbeddingTable(Index rows, Index dim, double fill = 0.0);

  Index rows() const { return rows_; }
  Index dim() const { return dim_; }
  std::size_t size() const { return values_.size(); }

  std::span<double> row(Index r) {
    return {values_.data() + static_cast<std::size_t>(r) * static_cast<std::size_t>(dim_),
            static_cast<std::size_t>(dim_)};
  }
  std::span<const double> row(Index r) const {
    return {values_.data() + static_cast<std::size_t>(r) * static_cast<std::size_t>(dim_),
            static_cast<std::size_t>(dim_)};
  }
  double& at(Index r, Index c) { return values_[static_cast<std::size_t>(r) * dim_ + c]; }
  double at(Index r, Index c) const { return values_[static_cast<std::size_t>(r) * dim_ + c]; }

  std::span<double> values() { return values_; }
  std::span<const double> values() const { return values_; }

  void fill(double v);
  bool all_finite() const;

  // Row-wise concatenation; all parts must share dim.
  static EmbeddingTable stack(std::initializer_list<const EmbeddingTable*> parts);
  // Copies rows [begin, begin + count).
  EmbeddingTable slice(Index begin, Index count) const;
  // Adds rows of src into rows [begin, begin + src.rows()).
  void add_rows_from(Index begin, const EmbeddingTable& src);

  bool operator==(const EmbeddingTable& other) const = default;

 private:
  Index rows_ = 0;
  Index dim_ = 0;
  std::vector<double> values_;
};

double dot(std::span<const double> a, std::span<const double> b);

// Normalized operator and its transpose, shared by every trace built on it.
struct Propagator {
  RowOperator forward;
  RowOperator adjoint;

  static std::shared_ptr<const Propagator> from(const SparseAdjacency& adjacency);
  Index num_nodes() const { return forward.num_nodes; }
};

struct PropagationTrace {
  // layer_outputs[0] is the input; layer_outputs[t+1] = X_t + Op X_t.
  std::vector<EmbeddingTable> layer_outputs;
  std::shared_ptr<const Propagator> op;

  const EmbeddingTable& output() const { return layer_outputs.back(); }
  int layers() const { return static_cast<int>(layer_outputs.size()) - 1; }
};

// out = in + op * in, row-parallel.
void residual_apply(const RowOperator& op, const EmbeddingTable& in, EmbeddingTable& out);

PropagationTrace propagate(std::shared_ptr<const Propagator> op, const EmbeddingTable& input,
                           int layers);

// Gradient with respect to the trace input, given the gradient at its output:
// (I + Op^T)^L grad.
EmbeddingTable backpropagate(const PropagationTrace& trace, const EmbeddingTable& grad_at_output);

}  // namespace pgd
