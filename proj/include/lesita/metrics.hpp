#ifndef LESITA_METRICS_HPP
#define LESITA_METRICS_HPP

#include <cmath>
#include <vector>

#include "lesita/common.hpp"

namespace lesita {

// Reporting floors: a perfect estimate would be -inf dB (NMSE) or +inf dB
// (PSNR), clamped to keep CSV output finite.
inline constexpr double kNmseFloorDb = -200.0;
inline constexpr double kPsnrCeilDb = 200.0;

// 10 log10(|est - ref|^2 / |ref|^2)
template <class DA, class DB>
double nmse_db(const Eigen::MatrixBase<DA>& est, const Eigen::MatrixBase<DB>& ref) {
  require_same_length(est.derived(), ref.derived(), "nmse_db");
  const double ref_energy = ref.derived().squaredNorm();
  if (ref_energy <= 0.0) throw InvalidParameterError("nmse_db: reference has zero energy");
  const double err_energy = (est.derived() - ref.derived()).squaredNorm();
  if (err_energy == 0.0) return kNmseFloorDb;
  const double db = 10.0 * std::log10(err_energy / ref_energy);
  return db < kNmseFloorDb ? kNmseFloorDb : db;
}

// Dataset aggregate.  The headline number is the mean of per-sample dB values;
// the dB of the mean error/energy ratio is kept alongside since the two
// conventions can differ by several dB on heavy-tailed errors.
struct NmseAggregate {
  double mean_db = 0.0;
  double db_of_mean_ratio = 0.0;
  Index count = 0;
};

template <class DA, class DB>
NmseAggregate nmse_db_aggregate(const Eigen::MatrixBase<DA>& est_cols, const Eigen::MatrixBase<DB>& ref_cols) {
  require_same_length(est_cols.derived(), ref_cols.derived(), "nmse_db_aggregate");
  const Index n = est_cols.cols();
  if (n == 0) throw InvalidParameterError("nmse_db_aggregate: empty batch");
  NmseAggregate agg;
  agg.count = n;
  double sum_db = 0.0, sum_ratio = 0.0;
  for (Index j = 0; j < n; ++j) {
    sum_db += nmse_db(est_cols.derived().col(j), ref_cols.derived().col(j));
    sum_ratio += (est_cols.derived().col(j) - ref_cols.derived().col(j)).squaredNorm() /
                 ref_cols.derived().col(j).squaredNorm();
  }
  agg.mean_db = sum_db / static_cast<double>(n);
  agg.db_of_mean_ratio =
      sum_ratio == 0.0 ? kNmseFloorDb : 10.0 * std::log10(sum_ratio / static_cast<double>(n));
  return agg;
}

// 10 log10(peak^2 / MSE); peak is 1.0 for [0,1]-scaled images.
template <class DA, class DB>
double psnr_db(const Eigen::MatrixBase<DA>& est, const Eigen::MatrixBase<DB>& ref, double peak = 1.0) {
  require_same_length(est.derived(), ref.derived(), "psnr_db");
  if (peak <= 0.0) throw InvalidParameterError("psnr_db: peak must be positive");
  const double mse = (est.derived() - ref.derived()).squaredNorm() / static_cast<double>(est.size());
  if (mse == 0.0) return kPsnrCeilDb;
  const double db = 10.0 * std::log10(peak * peak / mse);
  return db > kPsnrCeilDb ? kPsnrCeilDb : db;
}

}  // namespace lesita

#endif  // LESITA_METRICS_HPP
