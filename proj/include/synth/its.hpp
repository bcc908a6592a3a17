#pragma once

#include <Eigen/Dense>
#include <array>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "synth/date.hpp"
#include "synth/error.hpp"

namespace synth::its {

struct Order {
  int p = 0;
  int d = 0;
  int q = 0;
  bool operator==(const Order&) const = default;
};
std::string to_string(const Order& o);  // "(p,d,q)"

// Columns [1, t, D_t, (t - t0) D_t] with D_t = 1 iff t >= t0, t zero-based.
// Requires 0 < t0 < n.
Eigen::MatrixXd design_matrix(Eigen::Index n, Eigen::Index t0);

struct SeriesPoint {
  Date date;
  double value = 0;
};

enum class GapPolicy { reject, interpolate };

// Checks a daily series for missing days. Gaps are an error under `reject`
// and filled linearly between neighbours under `interpolate`. Input must be
// strictly increasing in date.
std::vector<SeriesPoint> regularize_daily(const std::vector<SeriesPoint>& points, GapPolicy policy);

// Means over consecutive bins of `days` days starting at the first date; the
// last bin may be short. Each bin is dated by its first day.
std::vector<SeriesPoint> resample(const std::vector<SeriesPoint>& daily, int days);

// Index of the first point dated on or after `when`.
Eigen::Index intervention_index(const std::vector<SeriesPoint>& series, Date when);

struct ITSSpec {
  Eigen::VectorXd y;
  Eigen::Index t0 = 0;
  Order order;
};

enum class Stars { ns, one, two, three };
std::string_view to_string(Stars s);  // "", "*", "**", "***"
Stars stars_for(double p_value);

struct Coef {
  double estimate = 0;
  double se = 0;
  double p_value = 1;
  Stars stars = Stars::ns;
  // False for the level under d = 1, which differencing removes. The estimate
  // is then the first observation and se / p_value are NaN.
  bool identified = true;
};

struct FitOptions {
  int max_iterations = 5000;
  double f_tolerance = 1e-12;  // relative spread of simplex values
  double x_tolerance = 1e-8;   // simplex diameter in the unconstrained space
  double hessian_step = 1e-4;  // relative central-difference step
  // Leading observations (original index) left out of the sum of squares.
  // Negative means p + d, the least the recursion needs.
  int condition = -1;
};

struct ITSResult {
  Order order;
  Eigen::Index t0 = 0;
  std::array<Coef, 4> beta;  // level, pre-trend, level change, trend change
  std::vector<double> phi;
  std::vector<double> theta;
  double sigma2 = 0;
  double css = 0;
  double aic = 0;
  Eigen::Index n_used = 0;   // residuals in the sum of squares
  Eigen::VectorXd residuals;
  bool degenerate = false;   // perfect fit; no standard errors
  int iterations = 0;
  bool converged = true;
  std::vector<double> css_trace;  // best value after each simplex iteration
};

class FitError : public Error {
 public:
  FitError(const std::string& what, ITSResult best) : Error(what), best_(std::move(best)) {}
  const ITSResult& best() const noexcept { return best_; }

 private:
  ITSResult best_;
};

// Regression on the design matrix with ARMA(p, q) errors on the d-th
// difference, by conditional sum of squares. Needs y.size() >= 24 + p + q,
// 0 <= p, q <= 3 and d in {0, 1}. Throws FitError when the simplex does not
// converge in max_iterations.
ITSResult fit_its(const ITSSpec& spec, const FitOptions& options = {});

struct Selection {
  Order order;
  ITSResult fit;
  std::map<std::string, double> aic_by_order;  // fits that succeeded
};

// Grid p, q in 0..3, d in 0..1 by AIC on a common conditioning window, ties
// toward fewer parameters; the winner is refitted with default options. A
// constant series selects (0,0,0) and comes back degenerate.
Selection select_order(const Eigen::VectorXd& y, Eigen::Index t0, const FitOptions& options = {});

// Independent fits on up to `jobs` threads; results in input order.
std::vector<ITSResult> fit_many(const std::vector<ITSSpec>& specs, int jobs, const FitOptions& options = {});

// "+2.56%***" style cell.
std::string format_effect(const Coef& c);

// One row per stratum label, four cells each: unreliable level change and
// trend change, then reliable. Missing fits print "-".
struct TableRow {
  std::string stratum;
  std::array<std::string, 4> cells;
};
struct GroupFit {
  std::string reliability;  // "unreliable" or "reliable"
  std::string stratum;      // "ALL", "B10K", ...
  ITSResult fit;
};
std::vector<TableRow> report_table(const std::vector<GroupFit>& fits);
std::string table_text(const std::vector<TableRow>& rows);

// class,stratum,order,t0,n_used,coefficient estimates with se/p/stars,
// sigma2,aic,flags
std::string to_csv(const std::vector<GroupFit>& fits);

}  // namespace synth::its
