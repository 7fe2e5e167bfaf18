#include "pgd/model.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <random>

namespace pgd {

namespace {

constexpr char kMagic[8] = {'P', 'G', 'D', 'C', 'K', 'P', 'T', '\0'};
constexpr std::uint32_t kVersion = 1;

void fill_gaussian(EmbeddingTable& t, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 0.1);  // variance 0.01
  for (double& v : t.values()) v = normal(rng);
}

}  // namespace

PgdParams init_params(const ModelDims& dims, const LayerCounts& layers, std::uint64_t seed) {
  PGD_REQUIRE(dims.num_users >= 0 && dims.num_items >= 0 && dims.num_user_attrs >= 0 &&
                  dims.num_item_attrs >= 0 && dims.dim > 0,
              "invalid model dims");
  PGD_REQUIRE(layers.teacher >= 1 && layers.user_student >= 1 && layers.item_student >= 1,
              "layer counts must be positive");
  PgdParams p;
  p.dims = dims;
  p.layers = layers;
  p.seed = seed;
  p.U = EmbeddingTable(dims.num_users, dims.dim);
  p.V = EmbeddingTable(dims.num_items, dims.dim);
  p.Y = EmbeddingTable(dims.num_user_attrs + dims.num_item_attrs, dims.dim);
  p.E = EmbeddingTable(dims.num_user_attrs, dims.dim);
  p.F = EmbeddingTable(dims.num_item_attrs, dims.dim);
  Rng rng(seed);
  for (auto* t : p.tables()) fill_gaussian(*t, rng);
  return p;
}

ModelGraphs ModelGraphs::build(const Dataset& dataset, bool binarize) {
  ModelGraphs g;
  g.teacher = build_teacher_graph(dataset);
  g.user_student = build_student_graph(dataset, StudentSide::User, binarize);
  g.item_student = build_student_graph(dataset, StudentSide::Item, binarize);
  g.teacher_op = Propagator::from(g.teacher.adjacency);
  g.user_student_op = Propagator::from(g.user_student.adjacency);
  g.item_student_op = Propagator::from(g.item_student.adjacency);
  return g;
}

TeacherOutputs teacher_forward(const PgdParams& params, const ModelGraphs& graphs) {
  const auto& g = graphs.teacher;
  PGD_REQUIRE(g.num_users == params.dims.num_users && g.num_items == params.dims.num_items &&
                  g.num_user_attrs == params.dims.num_user_attrs &&
                  g.num_item_attrs == params.dims.num_item_attrs,
              "teacher graph does not match parameter dims");
  TeacherOutputs out;
  out.trace = propagate(graphs.teacher_op, EmbeddingTable::stack({&params.U, &params.V, &params.Y}),
                        params.layers.teacher);
  const auto& last = out.trace.output();
  out.user = last.slice(0, g.num_users);
  out.item = last.slice(g.item_offset(), g.num_items);
  out.attr = last.slice(g.attr_offset(), g.num_user_attrs + g.num_item_attrs);
  return out;
}

StudentOutputs student_forward(const PgdParams& params, const ModelGraphs& graphs,
                               StudentSide side) {
  const bool user_side = side == StudentSide::User;
  const auto& g = user_side ? graphs.user_student : graphs.item_student;
  PGD_REQUIRE(g.side == side, "student graph side mismatch");
  const EmbeddingTable& entity = user_side ? params.V : params.U;
  const EmbeddingTable& attr = user_side ? params.E : params.F;
  PGD_REQUIRE(g.num_entities == entity.rows() && g.num_attrs == attr.rows(),
              "student graph does not match parameter dims");
  StudentOutputs out;
  out.trace = propagate(user_side ? graphs.user_student_op : graphs.item_student_op,
                        EmbeddingTable::stack({&entity, &attr}),
                        user_side ? params.layers.user_student : params.layers.item_student);
  out.entity = out.trace.output().slice(0, g.num_entities);
  out.attr = out.trace.output().slice(g.num_entities, g.num_attrs);
  return out;
}

ForwardOutputs forward(const PgdParams& params, const ModelGraphs& graphs) {
  ForwardOutputs out;
  out.teacher = teacher_forward(params, graphs);
  out.user_student = student_forward(params, graphs, StudentSide::User);
  out.item_student = student_forward(params, graphs, StudentSide::Item);
  out.num_user_attrs = params.dims.num_user_attrs;
  return out;
}

std::vector<double> compose_entity_embedding(const EmbeddingTable& attr_table,
                                             std::span<const Index> attrs, Index offset) {
  PGD_REQUIRE(!attrs.empty(), "cold entity needs at least one attribute");
  std::vector<double> out(static_cast<std::size_t>(attr_table.dim()), 0.0);
  for (Index a : attrs) {
    const Index r = a - offset;
    PGD_REQUIRE(r >= 0 && r < attr_table.rows(), strprintf("attribute %d out of range", a));
    const auto row = attr_table.row(r);
    for (std::size_t c = 0; c < out.size(); ++c) out[c] += row[c];
  }
  return out;
}

std::string_view task_token(TaskKind task) {
  switch (task) {
    case TaskKind::Warm: return "warm";
    case TaskKind::NewUser: return "nu";
    case TaskKind::NewItem: return "ni";
    case TaskKind::NewBoth: return "nn";
  }
  return "?";
}

TaskKind parse_task(std::string_view token) {
  if (token == "warm") return TaskKind::Warm;
  if (token == "nu") return TaskKind::NewUser;
  if (token == "ni") return TaskKind::NewItem;
  if (token == "nn") return TaskKind::NewBoth;
  throw ContractError("unknown task '" + std::string(token) + "' (expected warm, nu, ni, nn)");
}

std::vector<double> user_embedding(TaskKind task, const ForwardOutputs& out, const EntityRef& user) {
  const bool cold = task == TaskKind::NewUser || task == TaskKind::NewBoth;
  if (cold) {
    PGD_REQUIRE(!user.is_warm(), "task needs a cold user given by attributes");
    return compose_entity_embedding(out.user_student.attr, user.attrs, 0);
  }
  PGD_REQUIRE(user.is_warm() && user.index < out.teacher.user.rows(),
              "task needs a warm user index");
  const auto row = out.teacher.user.row(user.index);
  return {row.begin(), row.end()};
}

std::vector<double> item_embedding(TaskKind task, const ForwardOutputs& out, const EntityRef& item) {
  const bool cold = task == TaskKind::NewItem || task == TaskKind::NewBoth;
  if (cold) {
    PGD_REQUIRE(!item.is_warm(), "task needs a cold item given by attributes");
    return compose_entity_embedding(out.item_student.attr, item.attrs, out.num_user_attrs);
  }
  PGD_REQUIRE(item.is_warm() && item.index < out.teacher.item.rows(),
              "task needs a warm item index");
  const auto row = out.teacher.item.row(item.index);
  return {row.begin(), row.end()};
}

double score(TaskKind task, const ForwardOutputs& outputs, const EntityRef& user,
             const EntityRef& item) {
  return dot(user_embedding(task, outputs, user), item_embedding(task, outputs, item));
}

namespace {

template <typename T>
void put(std::string& buf, T value) {
  static_assert(std::is_trivially_copyable_v<T>);
  char bytes[sizeof(T)];
  std::memcpy(bytes, &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  buf.append(bytes, sizeof(T));
}

template <typename T>
T take(const std::string& buf, std::size_t& pos) {
  if (pos + sizeof(T) > buf.size()) throw DataError("truncated checkpoint");
  char bytes[sizeof(T)];
  std::memcpy(bytes, buf.data() + pos, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  pos += sizeof(T);
  T value;
  std::memcpy(&value, bytes, sizeof(T));
  return value;
}

std::string serialize(const PgdParams& p) {
  std::string buf(kMagic, sizeof(kMagic));
  put<std::uint32_t>(buf, kVersion);
  put<std::uint32_t>(buf, p.binarize_student_graph ? 1u : 0u);
  for (Index v : {p.dims.num_users, p.dims.num_items, p.dims.num_user_attrs, p.dims.num_item_attrs,
                  p.dims.dim}) {
    put<std::uint64_t>(buf, static_cast<std::uint64_t>(v));
  }
  for (int v : {p.layers.teacher, p.layers.user_student, p.layers.item_student}) {
    put<std::uint32_t>(buf, static_cast<std::uint32_t>(v));
  }
  put<std::uint64_t>(buf, p.seed);
  for (const auto* t : p.tables()) {
    for (double v : t->values()) put<double>(buf, v);
  }
  return buf;
}

}  // namespace

void save_checkpoint(const PgdParams& params, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  const auto bytes = serialize(params);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("cannot write checkpoint " + path.string());
}

PgdParams load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint " + path.string());
  const std::string buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (buf.size() < sizeof(kMagic) || std::memcmp(buf.data(), kMagic, sizeof(kMagic)) != 0) {
    throw DataError(path.string() + " is not a checkpoint");
  }
  std::size_t pos = sizeof(kMagic);
  const auto version = take<std::uint32_t>(buf, pos);
  if (version != kVersion) throw DataError(strprintf("unsupported checkpoint version %u", version));
  PgdParams p;
  p.binarize_student_graph = take<std::uint32_t>(buf, pos) & 1u;
  auto dim = [&] {
    const auto v = take<std::uint64_t>(buf, pos);
    if (v > static_cast<std::uint64_t>(INT32_MAX)) throw DataError("checkpoint dimension overflow");
    return static_cast<Index>(v);
  };
  p.dims.num_users = dim();
  p.dims.num_items = dim();
  p.dims.num_user_attrs = dim();
  p.dims.num_item_attrs = dim();
  p.dims.dim = dim();
  p.layers.teacher = static_cast<int>(take<std::uint32_t>(buf, pos));
  p.layers.user_student = static_cast<int>(take<std::uint32_t>(buf, pos));
  p.layers.item_student = static_cast<int>(take<std::uint32_t>(buf, pos));
  p.seed = take<std::uint64_t>(buf, pos);
  const Index d = p.dims.dim;
  p.U = EmbeddingTable(p.dims.num_users, d);
  p.V = EmbeddingTable(p.dims.num_items, d);
  p.Y = EmbeddingTable(p.dims.num_user_attrs + p.dims.num_item_attrs, d);
  p.E = EmbeddingTable(p.dims.num_user_attrs, d);
  p.F = EmbeddingTable(p.dims.num_item_attrs, d);
  for (auto* t : p.tables()) {
    for (double& v : t->values()) v = take<double>(buf, pos);
  }
  if (pos != buf.size()) throw DataError("trailing bytes in checkpoint " + path.string());
  return p;
}

void check_compatible(const PgdParams& params, const Dataset& ds) {
  const auto& d = params.dims;
  if (d.num_users != ds.num_users || d.num_items != ds.num_items ||
      d.num_user_attrs != ds.num_user_attrs || d.num_item_attrs != ds.num_item_attrs) {
    throw ContractError(strprintf(
        "checkpoint dims (M=%d N=%d D_u=%d D_v=%d) do not match split (M=%d N=%d D_u=%d D_v=%d)",
        d.num_users, d.num_items, d.num_user_attrs, d.num_item_attrs, ds.num_users, ds.num_items,
        ds.num_user_attrs, ds.num_item_attrs));
  }
}

std::string checkpoint_fingerprint(const PgdParams& params) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : serialize(params)) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return strprintf("%016llx", static_cast<unsigned long long>(h));
}

}  // namespace pgd
