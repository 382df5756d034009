#include "emberflow/gemm.hpp"

#include <algorithm>
#include <cstring>
#include <string>
#include <vector>

#include "emberflow/parallel.hpp"

// Goto-style blocked GEMM: B is packed into NR-wide column panels, A into
// MR-tall row panels, and an MR x NR register tile is updated one k step at a
// time. The k loop is never split across accumulators, which is what keeps the
// per-element summation order equal to the naive triple loop.

namespace emberflow {
namespace {

#if defined(__AVX512F__)
constexpr std::size_t kVecBytes = 64;
constexpr std::size_t kTileRows = 8;
#elif defined(__AVX__)
constexpr std::size_t kVecBytes = 32;
constexpr std::size_t kTileRows = 6;
#else
constexpr std::size_t kVecBytes = 16;
constexpr std::size_t kTileRows = 4;
#endif

constexpr std::size_t kBlockK = 256;
constexpr std::size_t kBlockN = 2048;

template <typename T>
struct Tile {
  typedef T vec __attribute__((vector_size(kVecBytes)));
  static constexpr std::size_t lanes = kVecBytes / sizeof(T);
  static constexpr std::size_t rows = kTileRows;
  static constexpr std::size_t cols = 2 * lanes;
  static constexpr std::size_t block_m = kTileRows * 12;

  static vec load(const T* p) noexcept {
    vec v;
    std::memcpy(&v, p, sizeof(vec));
    return v;
  }
  static void store(T* p, const vec& v) noexcept { std::memcpy(p, &v, sizeof(vec)); }

  // c is a full rows x cols tile with row stride ldc.
  static void kernel(std::size_t kc, const T* ap, const T* bp, T* c, std::size_t ldc, bool load_c) noexcept {
    vec acc[rows][2];
    if (load_c) {
      for (std::size_t r = 0; r < rows; ++r) {
        acc[r][0] = load(c + r * ldc);
        acc[r][1] = load(c + r * ldc + lanes);
      }
    } else {
      for (std::size_t r = 0; r < rows; ++r) {
        acc[r][0] = vec{};
        acc[r][1] = vec{};
      }
    }
    for (std::size_t p = 0; p < kc; ++p) {
      const vec b0 = load(bp);
      const vec b1 = load(bp + lanes);
      for (std::size_t r = 0; r < rows; ++r) {
        const T a = ap[r];
        acc[r][0] += a * b0;
        acc[r][1] += a * b1;
      }
      ap += rows;
      bp += cols;
    }
    for (std::size_t r = 0; r < rows; ++r) {
      store(c + r * ldc, acc[r][0]);
      store(c + r * ldc + lanes, acc[r][1]);
    }
  }
};

template <typename T>
struct Operand {
  const T* data;
  std::size_t ld;
  bool transposed;
  // Element (row, col) of op(X).
  T operator()(std::size_t row, std::size_t col) const noexcept {
    return transposed ? data[col * ld + row] : data[row * ld + col];
  }
};

template <typename T>
void pack_a(const Operand<T>& a, std::size_t i0, std::size_t mc, std::size_t p0, std::size_t kc, T* out) {
  constexpr std::size_t mr = Tile<T>::rows;
  for (std::size_t panel = 0; panel < mc; panel += mr) {
    const std::size_t rows = std::min(mr, mc - panel);
    if (a.transposed) {
      for (std::size_t p = 0; p < kc; ++p) {
        const T* src = a.data + (p0 + p) * a.ld + i0 + panel;
        for (std::size_t r = 0; r < rows; ++r) out[p * mr + r] = src[r];
        for (std::size_t r = rows; r < mr; ++r) out[p * mr + r] = T{0};
      }
    } else {
      for (std::size_t r = 0; r < rows; ++r) {
        const T* src = a.data + (i0 + panel + r) * a.ld + p0;
        for (std::size_t p = 0; p < kc; ++p) out[p * mr + r] = src[p];
      }
      for (std::size_t r = rows; r < mr; ++r) {
        for (std::size_t p = 0; p < kc; ++p) out[p * mr + r] = T{0};
      }
    }
    out += mr * kc;
  }
}

template <typename T>
void pack_b(const Operand<T>& b, std::size_t p0, std::size_t kc, std::size_t j0, std::size_t nc, T* out) {
  constexpr std::size_t nr = Tile<T>::cols;
  for (std::size_t panel = 0; panel < nc; panel += nr) {
    const std::size_t cols = std::min(nr, nc - panel);
    if (!b.transposed && cols == nr) {
      for (std::size_t p = 0; p < kc; ++p) {
        std::memcpy(out + p * nr, b.data + (p0 + p) * b.ld + j0 + panel, nr * sizeof(T));
      }
    } else if (b.transposed) {
      for (std::size_t c = 0; c < cols; ++c) {
        const T* src = b.data + (j0 + panel + c) * b.ld + p0;
        for (std::size_t p = 0; p < kc; ++p) out[p * nr + c] = src[p];
      }
      for (std::size_t c = cols; c < nr; ++c) {
        for (std::size_t p = 0; p < kc; ++p) out[p * nr + c] = T{0};
      }
    } else {
      for (std::size_t p = 0; p < kc; ++p) {
        for (std::size_t c = 0; c < cols; ++c) out[p * nr + c] = b(p0 + p, j0 + panel + c);
        for (std::size_t c = cols; c < nr; ++c) out[p * nr + c] = T{0};
      }
    }
    out += nr * kc;
  }
}

std::size_t round_up(std::size_t x, std::size_t to) { return (x + to - 1) / to * to; }

std::size_t required(bool transposed, std::size_t rows, std::size_t cols, std::size_t ld) {
  // op(X) is rows x cols; storage is cols x rows when transposed.
  const std::size_t stored_rows = transposed ? cols : rows;
  const std::size_t stored_cols = transposed ? rows : cols;
  if (ld < stored_cols) throw ShapeError("gemm: leading dimension smaller than row length");
  return stored_rows == 0 ? 0 : (stored_rows - 1) * ld + stored_cols;
}

}  // namespace

template <typename T>
void gemm(Transpose ta, Transpose tb, std::size_t m, std::size_t n, std::size_t k, std::span<const T> a,
          std::size_t lda, std::span<const T> b, std::size_t ldb, std::span<T> c, std::size_t ldc,
          bool accumulate) {
  using K = Tile<T>;
  const bool a_t = ta == Transpose::yes;
  const bool b_t = tb == Transpose::yes;
  if (m == 0 || n == 0) return;
  if (ldc < n) throw ShapeError("gemm: ldc smaller than n");
  if (c.size() < (m - 1) * ldc + n) throw ShapeError("gemm: output buffer too small");
  if (k == 0) {
    if (!accumulate) {
      for (std::size_t i = 0; i < m; ++i) std::fill_n(c.data() + i * ldc, n, T{0});
    }
    return;
  }
  if (a.size() < required(a_t, m, k, lda)) throw ShapeError("gemm: A buffer too small");
  if (b.size() < required(b_t, k, n, ldb)) throw ShapeError("gemm: B buffer too small");

  const Operand<T> op_a{a.data(), lda, a_t};
  const Operand<T> op_b{b.data(), ldb, b_t};

  thread_local std::vector<T> b_pack;
  const std::size_t m_blocks = (m + K::block_m - 1) / K::block_m;

  for (std::size_t j0 = 0; j0 < n; j0 += kBlockN) {
    const std::size_t nc = std::min(kBlockN, n - j0);
    const std::size_t nc_padded = round_up(nc, K::cols);
    for (std::size_t p0 = 0; p0 < k; p0 += kBlockK) {
      const std::size_t kc = std::min(kBlockK, k - p0);
      const bool load_c = accumulate || p0 > 0;
      b_pack.resize(nc_padded * kc);
      pack_b(op_b, p0, kc, j0, nc, b_pack.data());
      const T* packed_b = b_pack.data();

      parallel_for(m_blocks, 1, [&](std::size_t blk_begin, std::size_t blk_end) {
        thread_local std::vector<T> a_pack;
        a_pack.resize(K::block_m * kc);
        alignas(64) T edge[K::rows * K::cols];
        for (std::size_t blk = blk_begin; blk < blk_end; ++blk) {
          const std::size_t i0 = blk * K::block_m;
          const std::size_t mc = std::min(K::block_m, m - i0);
          pack_a(op_a, i0, mc, p0, kc, a_pack.data());
          for (std::size_t jr = 0; jr < nc; jr += K::cols) {
            const std::size_t cols = std::min(K::cols, nc - jr);
            const T* bp = packed_b + (jr / K::cols) * K::cols * kc;
            for (std::size_t ir = 0; ir < mc; ir += K::rows) {
              const std::size_t rows = std::min(K::rows, mc - ir);
              const T* ap = a_pack.data() + (ir / K::rows) * K::rows * kc;
              T* ctile = c.data() + (i0 + ir) * ldc + j0 + jr;
              if (rows == K::rows && cols == K::cols) {
                K::kernel(kc, ap, bp, ctile, ldc, load_c);
              } else {
                if (load_c) {
                  for (std::size_t r = 0; r < rows; ++r) {
                    std::copy_n(ctile + r * ldc, cols, edge + r * K::cols);
                  }
                }
                K::kernel(kc, ap, bp, edge, K::cols, load_c);
                for (std::size_t r = 0; r < rows; ++r) std::copy_n(edge + r * K::cols, cols, ctile + r * ldc);
              }
            }
          }
        }
      });
    }
  }
}

template void gemm<float>(Transpose, Transpose, std::size_t, std::size_t, std::size_t, std::span<const float>,
                          std::size_t, std::span<const float>, std::size_t, std::span<float>, std::size_t, bool);
template void gemm<double>(Transpose, Transpose, std::size_t, std::size_t, std::size_t, std::span<const double>,
                           std::size_t, std::span<const double>, std::size_t, std::span<double>, std::size_t,
                           bool);

}  // namespace emberflow
