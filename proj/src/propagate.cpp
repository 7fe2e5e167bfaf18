#include "pgd/propagate.hpp"

#include <algorithm>
#include <cmath>

namespace pgd {

EmbeddingTable::EmbeddingTable(Index rows, Index dim, double fill)
    : rows_(rows), dim_(dim),
      values_(static_cast<std::size_t>(rows) * static_cast<std::size_t>(dim), fill) {
  PGD_REQUIRE(rows >= 0 && dim >= 0, "negative table shape");
}

void EmbeddingTable::fill(double v) { std::fill(values_.begin(), values_.end(), v); }

bool EmbeddingTable::all_finite() const {
  return std::all_of(values_.begin(), values_.end(), [](double x) { return std::isfinite(x); });
}

EmbeddingTable EmbeddingTable::stack(std::initializer_list<const EmbeddingTable*> parts) {
  Index rows = 0;
  Index dim = -1;
  for (const auto* p : parts) {
    if (dim < 0) dim = p->dim();
    PGD_REQUIRE(p->dim() == dim, "stacked tables differ in dim");
    rows += p->rows();
  }
  EmbeddingTable out(rows, std::max<Index>(dim, 0));
  auto dst = out.values_.begin();
  for (const auto* p : parts) dst = std::copy(p->values_.begin(), p->values_.end(), dst);
  return out;
}

EmbeddingTable EmbeddingTable::slice(Index begin, Index count) const {
  PGD_REQUIRE(begin >= 0 && count >= 0 && begin + count <= rows_, "slice out of range");
  EmbeddingTable out(count, dim_);
  const auto first = values_.begin() + static_cast<std::ptrdiff_t>(begin) * dim_;
  std::copy(first, first + static_cast<std::ptrdiff_t>(count) * dim_, out.values_.begin());
  return out;
}

void EmbeddingTable::add_rows_from(Index begin, const EmbeddingTable& src) {
  PGD_REQUIRE(src.dim_ == dim_ && begin >= 0 && begin + src.rows_ <= rows_,
              "add_rows_from shape mismatch");
  auto dst = values_.begin() + static_cast<std::ptrdiff_t>(begin) * dim_;
  for (double v : src.values_) *dst++ += v;
}

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t c = 0; c < a.size(); ++c) s += a[c] * b[c];
  return s;
}

std::shared_ptr<const Propagator> Propagator::from(const SparseAdjacency& adjacency) {
  auto p = std::make_shared<Propagator>();
  p->forward = normalize_rows(adjacency);
  p->adjoint = p->forward.transposed();
  return p;
}

void residual_apply(const RowOperator& op, const EmbeddingTable& in, EmbeddingTable& out) {
  PGD_REQUIRE(op.num_nodes == in.rows(),
              strprintf("operator has %d nodes but table has %d rows", op.num_nodes, in.rows()));
  out = in;
  const auto d = static_cast<std::size_t>(in.dim());
  parallel_for(static_cast<std::size_t>(op.num_nodes), [&](std::size_t b, std::size_t e) {
    for (std::size_t r = b; r < e; ++r) {
      double* dst = out.row(static_cast<Index>(r)).data();
      for (std::size_t k = op.row_offsets[r]; k < op.row_offsets[r + 1]; ++k) {
        const double w = op.values[k];
        const double* src = in.row(op.column_indices[k]).data();
        for (std::size_t c = 0; c < d; ++c) dst[c] += w * src[c];
      }
    }
  });
}

PropagationTrace propagate(std::shared_ptr<const Propagator> op, const EmbeddingTable& input,
                           int layers) {
  PGD_REQUIRE(op != nullptr, "null propagator");
  PGD_REQUIRE(layers >= 1, "propagation needs at least one layer");
  PGD_REQUIRE(op->num_nodes() == input.rows(),
              strprintf("operator has %d nodes but input has %d rows", op->num_nodes(),
                        input.rows()));
  PropagationTrace trace;
  trace.op = std::move(op);
  trace.layer_outputs.reserve(static_cast<std::size_t>(layers) + 1);
  trace.layer_outputs.push_back(input);
  for (int t = 0; t < layers; ++t) {
    EmbeddingTable next;
    residual_apply(trace.op->forward, trace.layer_outputs.back(), next);
    trace.layer_outputs.push_back(std::move(next));
  }
  return trace;
}

EmbeddingTable backpropagate(const PropagationTrace& trace, const EmbeddingTable& grad) {
  PGD_REQUIRE(trace.op != nullptr && !trace.layer_outputs.empty(), "empty trace");
  const auto& out = trace.output();
  PGD_REQUIRE(grad.rows() == out.rows() && grad.dim() == out.dim(),
              "gradient shape does not match trace output");
  EmbeddingTable g = grad;
  for (int t = 0; t < trace.layers(); ++t) {
    EmbeddingTable next;
    residual_apply(trace.op->adjoint, g, next);
    g = std::move(next);
  }
  return g;
}

}  // namespace pgd
