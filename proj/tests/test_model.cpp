#include <gtest/gtest.h>

#include <fstream>

#include "pgd/model.hpp"
#include "test_support.hpp"

namespace pgd {
namespace {

using testing::dense_forward;
using testing::DenseForward;
using testing::fixture_f1;
using testing::to_dense;

TEST(InitParams, DeterministicAndShaped) {
  const ModelDims dims{3, 4, 2, 5, 8};
  const PgdParams a = init_params(dims, {}, 9), b = init_params(dims, {}, 9);
  for (std::size_t t = 0; t < 5; ++t) EXPECT_EQ(*a.tables()[t], *b.tables()[t]);
  EXPECT_EQ(a.Y.rows(), 7);
  EXPECT_EQ(a.F.rows(), 5);
  EXPECT_NE(a.U, init_params(dims, {}, 10).U);
  EXPECT_EQ(ModelDims{}.dim, 64);
}

TEST(InitParams, VarianceMatchesDeclared) {
  const PgdParams p = init_params({1000, 0, 0, 0, 1000}, {}, 4);
  double sum = 0.0, sq = 0.0;
  for (double v : p.U.values()) {
    sum += v;
    sq += v * v;
  }
  const double n = static_cast<double>(p.U.size());
  const double var = sq / n - (sum / n) * (sum / n);
  EXPECT_GE(var, 0.0097);
  EXPECT_LE(var, 0.0103);
}

TEST(Forward, FixtureMatchesDenseOracle) {
  const Dataset ds = fixture_f1();
  const PgdParams p = init_params(ModelDims::of(ds, 6), LayerCounts::uniform(2), 42);
  const ForwardOutputs out = forward(p, ModelGraphs::build(ds));
  const DenseForward o = dense_forward(p, ds);
  EXPECT_LE(testing::max_abs(to_dense(out.teacher.user) - o.teacher.topRows(2)), 1e-12);
  EXPECT_LE(testing::max_abs(to_dense(out.teacher.item) - o.teacher.middleRows(2, 2)), 1e-12);
  EXPECT_LE(testing::max_abs(to_dense(out.teacher.attr) - o.teacher.bottomRows(3)), 1e-12);
  EXPECT_LE(testing::max_abs(to_dense(out.user_student.entity) - o.user_student.topRows(2)), 1e-12);
  EXPECT_LE(testing::max_abs(to_dense(out.user_student.attr) - o.user_student.bottomRows(2)), 1e-12);
  EXPECT_LE(testing::max_abs(to_dense(out.item_student.entity) - o.item_student.topRows(2)), 1e-12);
  EXPECT_LE(testing::max_abs(to_dense(out.item_student.attr) - o.item_student.bottomRows(1)), 1e-12);
}

TEST(Forward, FamilySplitRoundTrip) {
  const Dataset ds = fixture_f1();
  const PgdParams p = init_params(ModelDims::of(ds, 4), {}, 1);
  const ForwardOutputs out = forward(p, ModelGraphs::build(ds));
  const EmbeddingTable rebuilt =
      EmbeddingTable::stack({&out.teacher.user, &out.teacher.item, &out.teacher.attr});
  EXPECT_EQ(rebuilt, out.teacher.trace.output());
}

TEST(Forward, SinglePairOneLayer) {
  Dataset ds;
  ds.num_users = 1;
  ds.num_items = 1;
  ds.num_user_attrs = 1;
  ds.num_item_attrs = 1;
  ds.interactions = {{0, 0}};
  ds.user_attrs = {{0}};
  ds.item_attrs = {{1}};
  const PgdParams p = init_params(ModelDims::of(ds, 3), LayerCounts::uniform(1), 2);
  const ForwardOutputs out = forward(p, ModelGraphs::build(ds));
  // User row neighbors: item and its attribute, each weighted 1/2.
  for (Index c = 0; c < 3; ++c) {
    EXPECT_DOUBLE_EQ(out.teacher.user.at(0, c),
                     p.U.at(0, c) + 0.5 * (p.V.at(0, c) + p.Y.at(0, c)));
    // Student attribute with one item neighbor: e^1 = e + v.
    EXPECT_DOUBLE_EQ(out.user_student.attr.at(0, c), p.E.at(0, c) + p.V.at(0, c));
  }
}

TEST(Forward, NoInteractionsLeavesStudentsUnchanged) {
  Dataset ds = fixture_f1();
  ds.interactions.clear();
  const PgdParams p = init_params(ModelDims::of(ds, 4), {}, 3);
  const ForwardOutputs out = forward(p, ModelGraphs::build(ds));
  EXPECT_EQ(out.user_student.attr, p.E);
  EXPECT_EQ(out.user_student.entity, p.V);
  EXPECT_EQ(out.item_student.attr, p.F);
}

TEST(Forward, SharedItemEmbeddingFeedsBothPaths) {
  const Dataset ds = fixture_f1();
  const PgdParams p = init_params(ModelDims::of(ds, 4), {}, 5);
  const ModelGraphs g = ModelGraphs::build(ds);
  const ForwardOutputs base = forward(p, g);
  PgdParams q = p;
  q.V.at(1, 2) += 1e-3;
  const ForwardOutputs moved = forward(q, g);
  EXPECT_NE(moved.teacher.item.at(1, 2), base.teacher.item.at(1, 2));
  EXPECT_NE(moved.user_student.entity.at(1, 2), base.user_student.entity.at(1, 2));
  // The item-student reads U and F only.
  EXPECT_EQ(moved.item_student.attr, base.item_student.attr);
}

TEST(Compose, SumSemantics) {
  EmbeddingTable t(3, 2);
  t.at(0, 0) = 1.5;
  t.at(0, 1) = -2.0;
  t.at(2, 0) = 1.5;
  t.at(2, 1) = -2.0;
  const std::vector<Index> one{0}, two{0, 2}, shifted{10, 12}, none{};
  EXPECT_EQ(compose_entity_embedding(t, one), (std::vector<double>{1.5, -2.0}));
  EXPECT_EQ(compose_entity_embedding(t, two), (std::vector<double>{3.0, -4.0}));
  EXPECT_EQ(compose_entity_embedding(t, shifted, 10), (std::vector<double>{3.0, -4.0}));
  EXPECT_THROW(compose_entity_embedding(t, none), ContractError);
  EXPECT_THROW(compose_entity_embedding(t, std::vector<Index>{3}), ContractError);
}

TEST(Compose, FixtureNewUserFromStudentOutputs) {
  const Dataset ds = fixture_f1();
  const PgdParams p = init_params(ModelDims::of(ds, 5), {}, 42);
  const ForwardOutputs out = forward(p, ModelGraphs::build(ds));
  const DenseForward o = dense_forward(p, ds);
  const auto u = user_embedding(TaskKind::NewUser, out, EntityRef::cold({0, 1}));
  const Eigen::VectorXd expected = (o.user_student.row(2) + o.user_student.row(3)).transpose();
  for (Index c = 0; c < 5; ++c) EXPECT_NEAR(u[c], expected(c), 1e-12);
}

TEST(Score, DotProductAndZero) {
  const Dataset ds = fixture_f1();
  PgdParams p = init_params(ModelDims::of(ds, 2), LayerCounts::uniform(1), 1);
  ForwardOutputs out = forward(p, ModelGraphs::build(ds));
  out.teacher.user.fill(0.0);
  out.teacher.user.at(0, 0) = 1.0;
  out.teacher.item.at(1, 0) = 0.5;
  out.teacher.item.at(1, 1) = 2.0;
  EXPECT_EQ(score(TaskKind::Warm, out, EntityRef::warm(0), EntityRef::warm(1)), 0.5);
  EXPECT_EQ(score(TaskKind::Warm, out, EntityRef::warm(1), EntityRef::warm(1)), 0.0);
  out.item_student.attr.fill(0.0);
  EXPECT_EQ(score(TaskKind::NewItem, out, EntityRef::warm(0), EntityRef::cold({2})), 0.0);
}

TEST(Score, EveryTaskMatchesDenseOracle) {
  std::mt19937_64 rng(42);
  const Dataset ds = testing::random_dataset(rng, 5, 6, 3, 3, 0.4);
  const PgdParams p = init_params(ModelDims::of(ds, 4), {2, 3, 1}, 42);
  const ForwardOutputs out = forward(p, ModelGraphs::build(ds));
  const DenseForward o = dense_forward(p, ds);
  const Eigen::RowVectorXd eu = o.user_student.row(6) + o.user_student.row(8);  // E rows 0, 2
  const Eigen::RowVectorXd fi = o.item_student.row(5 + 1);                     // F row 1
  const std::vector<Index> cold_user{0, 2}, cold_item{4};
  EXPECT_NEAR(score(TaskKind::Warm, out, EntityRef::warm(3), EntityRef::warm(2)),
              o.teacher.row(3).dot(o.teacher.row(5 + 2)), 1e-12);
  EXPECT_NEAR(score(TaskKind::NewUser, out, EntityRef::cold(cold_user), EntityRef::warm(2)),
              eu.dot(o.teacher.row(5 + 2)), 1e-12);
  EXPECT_NEAR(score(TaskKind::NewItem, out, EntityRef::warm(3), EntityRef::cold(cold_item)),
              o.teacher.row(3).dot(fi), 1e-12);
  EXPECT_NEAR(score(TaskKind::NewBoth, out, EntityRef::cold(cold_user), EntityRef::cold(cold_item)),
              eu.dot(fi), 1e-12);
}

TEST(Score, FixtureTaskThreeMatchesDenseOracle) {
  const Dataset ds = fixture_f1();
  const PgdParams p = init_params(ModelDims::of(ds, 8), {}, 42);
  const ForwardOutputs out = forward(p, ModelGraphs::build(ds));
  const DenseForward o = dense_forward(p, ds);
  const double expected = (o.user_student.row(2) + o.user_student.row(3)).dot(o.item_student.row(2));
  EXPECT_NEAR(score(TaskKind::NewBoth, out, EntityRef::cold({0, 1}), EntityRef::cold({2})), expected,
              1e-12);
}

TEST(Score, ColdUsersWithSameAttributesScoreIdentically) {
  const Dataset ds = fixture_f1();
  const PgdParams p = init_params(ModelDims::of(ds, 4), {}, 7);
  const ForwardOutputs out = forward(p, ModelGraphs::build(ds));
  for (Index j = 0; j < 2; ++j) {
    EXPECT_EQ(score(TaskKind::NewUser, out, EntityRef::cold({0}), EntityRef::warm(j)),
              score(TaskKind::NewUser, out, EntityRef::cold(ds.user_attrs[1]), EntityRef::warm(j)));
  }
}

TEST(Score, ReferenceKindMustMatchTask) {
  const Dataset ds = fixture_f1();
  const PgdParams p = init_params(ModelDims::of(ds, 2), {}, 1);
  const ForwardOutputs out = forward(p, ModelGraphs::build(ds));
  EXPECT_THROW(score(TaskKind::Warm, out, EntityRef::cold({0}), EntityRef::warm(0)), ContractError);
  EXPECT_THROW(score(TaskKind::NewUser, out, EntityRef::warm(0), EntityRef::warm(0)), ContractError);
  EXPECT_THROW(score(TaskKind::NewItem, out, EntityRef::warm(0), EntityRef::warm(0)), ContractError);
  EXPECT_THROW(parse_task("cold"), ContractError);
  EXPECT_EQ(parse_task(task_token(TaskKind::NewBoth)), TaskKind::NewBoth);
}

TEST(Checkpoint, RoundTripAndValidation) {
  const Dataset ds = fixture_f1();
  PgdParams p = init_params(ModelDims::of(ds, 3), {1, 2, 3}, 77);
  p.binarize_student_graph = true;
  const auto dir = testing::scratch_dir("ckpt");
  save_checkpoint(p, dir / "m.ckpt");
  const PgdParams q = load_checkpoint(dir / "m.ckpt");
  EXPECT_EQ(q.dims, p.dims);
  EXPECT_EQ(q.layers, p.layers);
  EXPECT_EQ(q.seed, 77u);
  EXPECT_TRUE(q.binarize_student_graph);
  for (std::size_t t = 0; t < 5; ++t) EXPECT_EQ(*q.tables()[t], *p.tables()[t]);
  EXPECT_EQ(checkpoint_fingerprint(p), checkpoint_fingerprint(q));
  check_compatible(q, ds);

  Dataset other = ds;
  other.num_item_attrs = 2;
  EXPECT_THROW(check_compatible(q, other), ContractError);

  testing::write_file(dir / "bad.ckpt", "not a checkpoint");
  EXPECT_ANY_THROW(load_checkpoint(dir / "bad.ckpt"));
  // Truncated payload.
  std::ifstream in(dir / "m.ckpt", std::ios::binary);
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  testing::write_file(dir / "short.ckpt", bytes.substr(0, bytes.size() - 8));
  EXPECT_ANY_THROW(load_checkpoint(dir / "short.ckpt"));
}

}  // namespace
}  // namespace pgd
