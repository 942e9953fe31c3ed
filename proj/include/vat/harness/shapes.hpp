#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "vat/geom/sdf.hpp"
#include "vat/nd/rng.hpp"

namespace vat::harness {

// The synthetic shape catalog: eight analytic-SDF classes (class id doubles
// as the conditioning label). Parameters are jittered tightly around a
// canonical instance per class, so class identity carries almost all of the
// geometric information — the regime the conditional prior is graded in.
inline constexpr int kNumShapeClasses = 8;

struct ShapeSpec {
  int class_id = 0;
  std::string kind;           // one of class_kind(0..7)
  std::vector<float> params;  // layout documented per kind in shapes.cpp

  // Builds the analytic signed distance field. Throws std::invalid_argument
  // on an unknown kind or wrong parameter count.
  geom::SdfField field() const;

  // Throws std::invalid_argument unless the class id, kind, and parameter
  // count are consistent and the shape provably stays inside [-0.5, 0.5]^3
  // with margin >= 0.02.
  void validate() const;

  bool operator==(const ShapeSpec&) const = default;
};

// Kind string for a class id (throws on out-of-range ids).
const char* class_kind(int class_id);

// The class's reference instance (mean parameters); generation quality is
// measured against this shape.
ShapeSpec canonical_shape(int class_id);

// Canonical parameters plus a small uniform jitter.
ShapeSpec random_shape(int class_id, nd::Rng& rng);

// count shapes cycling through the classes round-robin; shape i derives its
// parameters from Rng(seed).split(i), so regeneration is exact.
std::vector<ShapeSpec> make_dataset(int count, std::uint64_t seed);

// JSON dataset file: {"seed": ..., "count": ..., "shapes": [...]}. Writing is
// byte-deterministic for a given dataset.
void save_dataset(const std::vector<ShapeSpec>& shapes, std::uint64_t seed,
                  const std::string& path);
std::vector<ShapeSpec> load_dataset(const std::string& path, std::uint64_t* seed_out = nullptr);

}  // namespace vat::harness
