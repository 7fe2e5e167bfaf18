#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "pgd/data.hpp"
#include "pgd/graph.hpp"
#include "pgd/propagate.hpp"

namespace pgd {

inline constexpr Index kDefaultDim = 64;

struct ModelDims {
  Index num_users = 0;
  Index num_items = 0;
  Index num_user_attrs = 0;
  Index num_item_attrs = 0;
  Index dim = kDefaultDim;

  static ModelDims of(const Dataset& ds, Index dim = kDefaultDim) {
    return {ds.num_users, ds.num_items, ds.num_user_attrs, ds.num_item_attrs, dim};
  }
  bool operator==(const ModelDims&) const = default;
};

struct LayerCounts {
  int teacher = 2;
  int user_student = 2;
  int item_student = 2;

  static LayerCounts uniform(int layers) { return {layers, layers, layers}; }
  bool operator==(const LayerCounts&) const = default;
};

// Trainable tables. U and V are shared by the teacher and the students; Y
// feeds only the teacher, E only the user student, F only the item student
// (F row r is item attribute num_user_attrs + r).
struct PgdParams {
  ModelDims dims;
  LayerCounts layers;
  std::uint64_t seed = 0;
  bool binarize_student_graph = false;
  EmbeddingTable U, V, Y, E, F;

  static constexpr std::array<std::string_view, 5> kTableNames{"U", "V", "Y", "E", "F"};
  std::array<EmbeddingTable*, 5> tables() { return {&U, &V, &Y, &E, &F}; }
  std::array<const EmbeddingTable*, 5> tables() const { return {&U, &V, &Y, &E, &F}; }
};

// Every entry i.i.d. N(0, 0.01).
PgdParams init_params(const ModelDims& dims, const LayerCounts& layers, std::uint64_t seed);

// Graphs and their propagators for one training dataset.
struct ModelGraphs {
  TeacherGraph teacher;
  StudentGraph user_student;
  StudentGraph item_student;
  std::shared_ptr<const Propagator> teacher_op;
  std::shared_ptr<const Propagator> user_student_op;
  std::shared_ptr<const Propagator> item_student_op;

  static ModelGraphs build(const Dataset& dataset, bool binarize_student_graph = false);
};

struct TeacherOutputs {
  EmbeddingTable user, item, attr;
  PropagationTrace trace;
};

struct StudentOutputs {
  EmbeddingTable attr;    // E^L or F^L
  EmbeddingTable entity;  // V^L (user student) or U^L (item student)
  PropagationTrace trace;
};

TeacherOutputs teacher_forward(const PgdParams& params, const ModelGraphs& graphs);
StudentOutputs student_forward(const PgdParams& params, const ModelGraphs& graphs,
                               StudentSide side);

struct ForwardOutputs {
  TeacherOutputs teacher;
  StudentOutputs user_student;
  StudentOutputs item_student;
  Index num_user_attrs = 0;  // offset of item attributes in global indexing
};

ForwardOutputs forward(const PgdParams& params, const ModelGraphs& graphs);

// Sum of rows attrs[n] - offset of the table.
std::vector<double> compose_entity_embedding(const EmbeddingTable& attr_table,
                                             std::span<const Index> attrs, Index offset = 0);

enum class TaskKind { Warm, NewUser, NewItem, NewBoth };

std::string_view task_token(TaskKind task);  // warm | nu | ni | nn
TaskKind parse_task(std::string_view token);  // throws ContractError

// A warm entity by index, or a cold entity by its global attribute indices.
struct EntityRef {
  Index index = -1;
  std::vector<Index> attrs;

  static EntityRef warm(Index i) { return {i, {}}; }
  static EntityRef cold(std::vector<Index> a) { return {-1, std::move(a)}; }
  bool is_warm() const { return index >= 0; }
};

std::vector<double> user_embedding(TaskKind task, const ForwardOutputs& outputs,
                                   const EntityRef& user);
std::vector<double> item_embedding(TaskKind task, const ForwardOutputs& outputs,
                                   const EntityRef& item);
double score(TaskKind task, const ForwardOutputs& outputs, const EntityRef& user,
             const EntityRef& item);

void save_checkpoint(const PgdParams& params, const std::filesystem::path& path);
PgdParams load_checkpoint(const std::filesystem::path& path);
// Throws ContractError when the checkpoint was trained on different dims.
void check_compatible(const PgdParams& params, const Dataset& dataset);
// 64-bit FNV-1a over header and tables, as hex.
std::string checkpoint_fingerprint(const PgdParams& params);

}  // namespace pgd
