#ifndef LESITA_DATAGEN_HPP
#define LESITA_DATAGEN_HPP

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include "lesita/common.hpp"
#include "lesita/rng.hpp"

namespace lesita {

// ---------------------------------------------------------------------------
// Synthetic coupled sparse codes.
// ---------------------------------------------------------------------------

struct SyntheticSpec {
  Index k = 256;    // code length
  Index s = 25;     // nonzeros per code
  Index rho = 25;   // shared support positions, 0 <= rho <= s
  Index count = 1;  // number of (alpha, w) pairs
  std::uint64_t seed = 0;

  void validate() const {
    if (k < 1) throw InvalidParameterError("SyntheticSpec: k must be positive");
    if (s < 1 || s > k) throw InvalidParameterError("SyntheticSpec: need 1 <= s <= k");
    if (rho < 0 || rho > s) throw InvalidParameterError("SyntheticSpec: need 0 <= rho <= s");
    if (s - rho > k - s)
      throw InvalidParameterError(
          "SyntheticSpec: s - rho non-shared SI positions cannot avoid the code support "
          "(need s - rho <= k - s)");
    if (count < 1) throw InvalidParameterError("SyntheticSpec: count must be positive");
  }
};

struct CoupledCodes {
  Matrix Alpha;  // k x count
  Matrix W;      // k x count
};

namespace detail {

// A standard-normal draw that is never exactly zero, so support sizes stay
// exact by construction.
inline double nonzero_normal(Rng& rng) {
  double v = rng.normal();
  while (v == 0.0) v = rng.normal();
  return v;
}

}  // namespace detail

// Each alpha has exactly s standard-normal nonzeros on a uniform support; w
// shares rho of those positions with w[i] = |kappa| alpha[i] (same sign), and
// places its remaining s - rho nonzeros outside alpha's support.  Sample j is
// a pure function of (seed, j).
inline CoupledCodes gen_coupled_codes(const SyntheticSpec& spec) {
  spec.validate();
  CoupledCodes out;
  out.Alpha = Matrix::Zero(spec.k, spec.count);
  out.W = Matrix::Zero(spec.k, spec.count);
  for (Index j = 0; j < spec.count; ++j) {
    Rng rng = Rng(spec.seed).split(static_cast<std::uint64_t>(j));
    const std::vector<Index> support = rng.sample_without_replacement(spec.k, spec.s);
    std::vector<bool> in_support(static_cast<std::size_t>(spec.k), false);
    for (Index i : support) in_support[static_cast<std::size_t>(i)] = true;
    for (Index i : support) out.Alpha(i, j) = detail::nonzero_normal(rng);
    // The support came out of a uniform partial shuffle, so its first rho
    // entries are a uniform subset: share those.
    for (Index p = 0; p < spec.rho; ++p) {
      const Index i = support[static_cast<std::size_t>(p)];
      out.W(i, j) = std::abs(detail::nonzero_normal(rng)) * out.Alpha(i, j);
    }
    if (spec.s > spec.rho) {
      std::vector<Index> complement;
      complement.reserve(static_cast<std::size_t>(spec.k - spec.s));
      for (Index i = 0; i < spec.k; ++i)
        if (!in_support[static_cast<std::size_t>(i)]) complement.push_back(i);
      const std::vector<Index> extra =
          rng.sample_without_replacement(spec.k - spec.s, spec.s - spec.rho);
      for (Index p : extra)
        out.W(complement[static_cast<std::size_t>(p)], j) = detail::nonzero_normal(rng);
    }
  }
  return out;
}

// Random Gaussian dictionary with entries N(0, 1/n): columns have unit
// expected squared norm.
inline Matrix gen_dictionary(Index n, Index k, std::uint64_t seed) {
  if (n < 1 || k < 1) throw InvalidParameterError("gen_dictionary: dimensions must be positive");
  if (n > k) throw InvalidParameterError("gen_dictionary: need n <= k (overcomplete dictionary)");
  Rng rng(seed);
  return rng.normal_matrix(n, k) / std::sqrt(static_cast<double>(n));
}

// y = Phi x + e with e ~ N(0, sigma^2); sigma = 0 is exact.  Batched: samples
// as columns.
inline Matrix measure(const Matrix& x, const Matrix& Phi, double noise_sigma, Rng& rng) {
  if (Phi.cols() != x.rows()) throw DimensionError("measure: Phi columns must match signal length");
  if (noise_sigma < 0.0) throw InvalidParameterError("measure: noise_sigma must be nonnegative");
  Matrix y = Phi * x;
  if (noise_sigma > 0.0) y += noise_sigma * rng.normal_matrix(y.rows(), y.cols());
  return y;
}

inline Vector measure(const Vector& x, const Matrix& Phi, double noise_sigma, Rng& rng) {
  return Vector(measure(Matrix(x), Phi, noise_sigma, rng).col(0));
}

// ---------------------------------------------------------------------------
// Image patches.  Images are 2D arrays indexed (row, col); patches are
// flattened row-major and stacked as columns.
// ---------------------------------------------------------------------------

struct PatchSpec {
  Index patch_size = 16;
  Index stride = 4;

  void validate() const {
    if (patch_size < 1) throw InvalidParameterError("PatchSpec: patch_size must be positive");
    if (stride < 1 || stride > patch_size)
      throw InvalidParameterError("PatchSpec: need 1 <= stride <= patch_size");
  }
};

struct PatchGeometry {
  Index image_rows = 0;
  Index image_cols = 0;
  Index patch_size = 0;
  Index stride = 0;

  Index anchor_rows() const { return (image_rows - patch_size) / stride + 1; }
  Index anchor_cols() const { return (image_cols - patch_size) / stride + 1; }
  Index count() const { return anchor_rows() * anchor_cols(); }
  Index patch_dim() const { return patch_size * patch_size; }
};

inline PatchGeometry patch_geometry(Index image_rows, Index image_cols, const PatchSpec& spec) {
  spec.validate();
  if (image_rows < spec.patch_size || image_cols < spec.patch_size)
    throw DataError("patch_geometry: image smaller than the patch size");
  return PatchGeometry{image_rows, image_cols, spec.patch_size, spec.stride};
}

// Top-left anchored patches in row-major anchor order (rows outer).  Result is
// patch_dim x count.
inline Matrix extract_patches(const Matrix& image, const PatchSpec& spec) {
  const PatchGeometry geo = patch_geometry(image.rows(), image.cols(), spec);
  Matrix out(geo.patch_dim(), geo.count());
  Index p = 0;
  for (Index ar = 0; ar + geo.patch_size <= geo.image_rows; ar += geo.stride)
    for (Index ac = 0; ac + geo.patch_size <= geo.image_cols; ac += geo.stride, ++p)
      for (Index pr = 0; pr < geo.patch_size; ++pr)
        for (Index pc = 0; pc < geo.patch_size; ++pc)
          out(pr * geo.patch_size + pc, p) = image(ar + pr, ac + pc);
  return out;
}

// Inverse of extract_patches: overlapping pixels are averaged by coverage
// count.  Pixels no patch covers (possible when the stride does not divide
// image_size - patch_size) are left at zero.
inline Matrix assemble_patches(const Matrix& patches, const PatchGeometry& geo) {
  if (patches.rows() != geo.patch_dim())
    throw DimensionError("assemble_patches: patch length does not match the geometry");
  if (patches.cols() != geo.count())
    throw DimensionError("assemble_patches: patch count does not match the geometry");
  Matrix sum = Matrix::Zero(geo.image_rows, geo.image_cols);
  Matrix cover = Matrix::Zero(geo.image_rows, geo.image_cols);
  Index p = 0;
  for (Index ar = 0; ar + geo.patch_size <= geo.image_rows; ar += geo.stride)
    for (Index ac = 0; ac + geo.patch_size <= geo.image_cols; ac += geo.stride, ++p)
      for (Index pr = 0; pr < geo.patch_size; ++pr)
        for (Index pc = 0; pc < geo.patch_size; ++pc) {
          sum(ar + pr, ac + pc) += patches(pr * geo.patch_size + pc, p);
          cover(ar + pr, ac + pc) += 1.0;
        }
  for (Index r = 0; r < geo.image_rows; ++r)
    for (Index c = 0; c < geo.image_cols; ++c)
      if (cover(r, c) > 0.0) sum(r, c) /= cover(r, c);
  return sum;
}

inline Matrix central_crop(const Matrix& image, Index rows, Index cols) {
  if (rows < 1 || cols < 1) throw InvalidParameterError("central_crop: target must be positive");
  if (image.rows() < rows || image.cols() < cols)
    throw DataError("central_crop: image smaller than the crop");
  const Index r0 = (image.rows() - rows) / 2;
  const Index c0 = (image.cols() - cols) / 2;
  return image.block(r0, c0, rows, cols);
}

// Patch means as a row vector; subtracting them is an optional preprocessing
// step (off by default everywhere).
inline Eigen::RowVectorXd patch_means(const Matrix& patches) {
  return patches.colwise().mean();
}

inline void remove_patch_means(Matrix& patches, const Eigen::RowVectorXd& means) {
  if (means.size() != patches.cols())
    throw DimensionError("remove_patch_means: one mean per patch required");
  patches.rowwise() -= means;
}

inline void restore_patch_means(Matrix& patches, const Eigen::RowVectorXd& means) {
  if (means.size() != patches.cols())
    throw DimensionError("restore_patch_means: one mean per patch required");
  patches.rowwise() += means;
}

// `count` patch pairs at common uniformly random anchors (not restricted to
// the stride grid).  Both images must have identical size.
inline std::pair<Matrix, Matrix> sample_patch_pairs(const Matrix& image_x, const Matrix& image_z,
                                                    Index patch_size, Index count, Rng& rng) {
  if (image_x.rows() != image_z.rows() || image_x.cols() != image_z.cols())
    throw DimensionError("sample_patch_pairs: images must be aligned (same size)");
  if (image_x.rows() < patch_size || image_x.cols() < patch_size)
    throw DataError("sample_patch_pairs: image smaller than the patch size");
  if (count < 1) throw InvalidParameterError("sample_patch_pairs: count must be positive");
  const Index n = patch_size * patch_size;
  Matrix px(n, count);
  Matrix pz(n, count);
  const std::uint64_t row_range = static_cast<std::uint64_t>(image_x.rows() - patch_size + 1);
  const std::uint64_t col_range = static_cast<std::uint64_t>(image_x.cols() - patch_size + 1);
  for (Index j = 0; j < count; ++j) {
    const Index ar = static_cast<Index>(rng.uniform_int(row_range));
    const Index ac = static_cast<Index>(rng.uniform_int(col_range));
    for (Index pr = 0; pr < patch_size; ++pr)
      for (Index pc = 0; pc < patch_size; ++pc) {
        px(pr * patch_size + pc, j) = image_x(ar + pr, ac + pc);
        pz(pr * patch_size + pc, j) = image_z(ar + pr, ac + pc);
      }
  }
  return {std::move(px), std::move(pz)};
}

// ---------------------------------------------------------------------------
// Synthetic correlated image pairs: a shared smooth base plus per-image
// detail, each normalized to [0, 1].  Stands in for aligned multispectral
// pairs when no real data is available.
// ---------------------------------------------------------------------------

namespace detail {

// Separable [1 4 6 4 1]/16 smoothing with clamped borders, `passes` times.
inline Matrix smooth(const Matrix& image, int passes) {
  static const double kKernel[5] = {1.0 / 16, 4.0 / 16, 6.0 / 16, 4.0 / 16, 1.0 / 16};
  Matrix cur = image;
  const Index rows = image.rows();
  const Index cols = image.cols();
  Matrix tmp(rows, cols);
  for (int pass = 0; pass < passes; ++pass) {
    for (Index r = 0; r < rows; ++r)
      for (Index c = 0; c < cols; ++c) {
        double acc = 0.0;
        for (int o = -2; o <= 2; ++o) {
          const Index cc = std::clamp<Index>(c + o, 0, cols - 1);
          acc += kKernel[o + 2] * cur(r, cc);
        }
        tmp(r, c) = acc;
      }
    for (Index c = 0; c < cols; ++c)
      for (Index r = 0; r < rows; ++r) {
        double acc = 0.0;
        for (int o = -2; o <= 2; ++o) {
          const Index rr = std::clamp<Index>(r + o, 0, rows - 1);
          acc += kKernel[o + 2] * tmp(rr, c);
        }
        cur(r, c) = acc;
      }
  }
  return cur;
}

inline void normalize_unit_range(Matrix& image) {
  const double lo = image.minCoeff();
  const double hi = image.maxCoeff();
  if (hi > lo)
    image = (image.array() - lo) / (hi - lo);
  else
    image.setConstant(0.5);
}

}  // namespace detail

// detail_weight 0 gives identical images; larger values decorrelate them.
inline std::pair<Matrix, Matrix> gen_correlated_images(Index rows, Index cols, Rng& rng,
                                                       double detail_weight = 0.35,
                                                       int smooth_passes = 5) {
  if (rows < 1 || cols < 1)
    throw InvalidParameterError("gen_correlated_images: size must be positive");
  if (detail_weight < 0.0)
    throw InvalidParameterError("gen_correlated_images: detail_weight must be nonnegative");
  const Matrix base = detail::smooth(rng.normal_matrix(rows, cols), smooth_passes);
  const Matrix detail_x = detail::smooth(rng.normal_matrix(rows, cols), smooth_passes);
  const Matrix detail_z = detail::smooth(rng.normal_matrix(rows, cols), smooth_passes);
  Matrix x = base + detail_weight * detail_x;
  Matrix z = base + detail_weight * detail_z;
  detail::normalize_unit_range(x);
  detail::normalize_unit_range(z);
  return {std::move(x), std::move(z)};
}

// ---------------------------------------------------------------------------
// Grayscale conversion and PGM files (optional conveniences; raw arrays are
// the canonical data path).
// ---------------------------------------------------------------------------

// ITU-R 601 luminance; inputs and output in [0, 1].
inline Matrix rgb_to_gray(const Matrix& r, const Matrix& g, const Matrix& b) {
  require_same_length(r, g, "rgb_to_gray");
  require_same_length(r, b, "rgb_to_gray");
  return 0.299 * r + 0.587 * g + 0.114 * b;
}

// 8-bit binary PGM (P5) into [0, 1].
inline Matrix read_pgm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("read_pgm: cannot open " + path);
  std::string magic;
  in >> magic;
  if (magic != "P5") throw DataError("read_pgm: " + path + " is not a binary (P5) PGM file");
  auto next_token = [&in, &path]() {
    // Skip whitespace and '#' comment lines between header fields.
    std::string tok;
    int ch = in.get();
    while (ch != EOF && (std::isspace(ch) || ch == '#')) {
      if (ch == '#')
        while (ch != EOF && ch != '\n') ch = in.get();
      ch = in.get();
    }
    while (ch != EOF && !std::isspace(ch)) {
      tok.push_back(static_cast<char>(ch));
      ch = in.get();
    }
    if (tok.empty()) throw DataError("read_pgm: truncated header in " + path);
    return tok;
  };
  const long cols = std::stol(next_token());
  const long rows = std::stol(next_token());
  const long maxval = std::stol(next_token());
  if (cols < 1 || rows < 1 || maxval < 1 || maxval > 255)
    throw DataError("read_pgm: unsupported header in " + path);
  std::vector<unsigned char> raw(static_cast<std::size_t>(rows * cols));
  in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (in.gcount() != static_cast<std::streamsize>(raw.size()))
    throw DataError("read_pgm: truncated pixel data in " + path);
  Matrix img(rows, cols);
  for (long r = 0; r < rows; ++r)
    for (long c = 0; c < cols; ++c)
      img(r, c) = static_cast<double>(raw[static_cast<std::size_t>(r * cols + c)]) /
                  static_cast<double>(maxval);
  return img;
}

inline void write_pgm(const std::string& path, const Matrix& image) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("write_pgm: cannot open " + path + " for writing");
  out << "P5\n" << image.cols() << " " << image.rows() << "\n255\n";
  for (Index r = 0; r < image.rows(); ++r)
    for (Index c = 0; c < image.cols(); ++c) {
      const double v = std::clamp(image(r, c), 0.0, 1.0);
      out.put(static_cast<char>(static_cast<unsigned char>(std::lround(v * 255.0))));
    }
  if (!out) throw DataError("write_pgm: write failed for " + path);
}

}  // namespace lesita

#endif  // LESITA_DATAGEN_HPP
