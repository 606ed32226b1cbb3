#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace svcam {

struct Interval {
  double lo = 0.0;
  double hi = 0.0;

  bool contains(double v) const { return v >= lo && v <= hi; }
  double width() const { return hi - lo; }
};

// One subject's repeated measurements. z holds the discrete covariates
// (without the intercept), x the continuous ones.
struct SubjectRecord {
  std::string id;
  std::vector<double> times;
  std::vector<double> responses;
  Eigen::MatrixXd z;  // m x q
  Eigen::MatrixXd x;  // m x p
};

struct SampleSummary {
  std::size_t n = 0;
  std::size_t N = 0;
  double nbar_h = 0.0;
  double nbar_2 = 0.0;
};

/// Ragged longitudinal sample stored observation-major.
///
/// Observations of subject i occupy rows [offset(i), offset(i+1)). The
/// intercept column of Z is synthesized by `z_aug` and never stored.
/// Instances are immutable; derived datasets (bootstrap responses, subject
/// deletion) are built through the `with_*` / `without_*` members.
class LongitudinalDataset {
 public:
  LongitudinalDataset() = default;

  /// Validates the records and sets supports to the observed ranges unless
  /// explicit supports are given.
  LongitudinalDataset(std::vector<SubjectRecord> subjects, std::size_t p, std::size_t q,
                      std::optional<Interval> time_support = std::nullopt,
                      std::vector<Interval> covariate_supports = {});

  std::size_t n() const { return ids_.size(); }
  std::size_t N() const { return times_.size(); }
  std::size_t p() const { return p_; }
  std::size_t q() const { return q_; }

  std::size_t offset(std::size_t i) const { return offsets_[i]; }
  std::size_t m(std::size_t i) const { return offsets_[i + 1] - offsets_[i]; }
  const std::string& id(std::size_t i) const { return ids_[i]; }
  std::size_t subject_of(std::size_t obs) const { return subject_of_[obs]; }

  double t(std::size_t obs) const { return times_[obs]; }
  double y(std::size_t obs) const { return y_[obs]; }
  double z(std::size_t obs, std::size_t l) const { return z_(obs, l); }
  double x(std::size_t obs, std::size_t k) const { return x_(obs, k); }
  /// Per-observation SUBJ weight 1/m_i.
  double w(std::size_t obs) const { return obs_weight_[obs]; }

  /// (1, z_1, ..., z_q) for one observation.
  Eigen::VectorXd z_aug(std::size_t obs) const;
  Eigen::VectorXd x_row(std::size_t obs) const { return x_.row(obs).transpose(); }

  std::span<const double> times() const { return times_; }
  std::span<const double> responses() const { return y_; }
  std::span<const double> weights() const { return obs_weight_; }
  const Eigen::MatrixXd& z_matrix() const { return z_; }
  const Eigen::MatrixXd& x_matrix() const { return x_; }
  std::vector<double> x_column(std::size_t k) const;

  const Interval& time_support() const { return time_support_; }
  const Interval& covariate_support(std::size_t k) const { return covariate_supports_[k]; }
  const std::vector<Interval>& covariate_supports() const { return covariate_supports_; }

  /// Subjects contributing no within-subject pairs.
  std::size_t singleton_count() const;

  std::vector<SubjectRecord> records() const;

  LongitudinalDataset with_responses(std::span<const double> y) const;
  LongitudinalDataset without_subject(std::size_t i) const;
  LongitudinalDataset with_supports(Interval time_support,
                                    std::vector<Interval> covariate_supports) const;

 private:
  std::size_t p_ = 0;
  std::size_t q_ = 0;
  std::vector<std::string> ids_;
  std::vector<std::size_t> offsets_{0};
  std::vector<std::size_t> subject_of_;
  std::vector<double> times_;
  std::vector<double> y_;
  std::vector<double> obs_weight_;
  Eigen::MatrixXd z_;
  Eigen::MatrixXd x_;
  Interval time_support_;
  std::vector<Interval> covariate_supports_;
};

/// Column mapping for long-format CSV. Empty z/x lists mean "detect
/// z1..zq and x1..xp from the header".
struct ColumnSchema {
  std::string subject = "subject";
  std::string time = "time";
  std::string response = "y";
  std::vector<std::string> z_columns;
  std::vector<std::string> x_columns;
  bool detect = true;
};

LongitudinalDataset load_longitudinal(const std::string& path, const ColumnSchema& schema = {});
LongitudinalDataset parse_longitudinal(const std::string& text, const ColumnSchema& schema = {});
void write_longitudinal(const std::string& path, const LongitudinalDataset& ds);
std::string format_longitudinal(const LongitudinalDataset& ds);

SampleSummary summarize(const LongitudinalDataset& ds);

double subj_weight(const LongitudinalDataset& ds, std::size_t i);

}  // namespace svcam
