#pragma once

// Scalar selection. Tape data defaults to 32-bit floats; defining
// SOFTMESH_REAL_F64 switches every array in the library to 64-bit, which is
// what the gradient checks run under. The two variants use distinct inline
// namespaces so a single executable can link both.

#if defined(SOFTMESH_REAL_F64)
#define SOFTMESH_BEGIN_NAMESPACE \
  namespace softmesh {           \
  inline namespace f64 {
#else
#define SOFTMESH_BEGIN_NAMESPACE \
  namespace softmesh {           \
  inline namespace f32 {
#endif
#define SOFTMESH_END_NAMESPACE \
  }                            \
  }

SOFTMESH_BEGIN_NAMESPACE

#if defined(SOFTMESH_REAL_F64)
using Real = double;
inline constexpr const char* kRealName = "f64";
#else
using Real = float;
inline constexpr const char* kRealName = "f32";
#endif

SOFTMESH_END_NAMESPACE
