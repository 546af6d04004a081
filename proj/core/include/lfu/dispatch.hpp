#pragma once

#include <optional>

#include <Eigen/Dense>

#include "lfu/grid.hpp"
#include "lfu/qp.hpp"

namespace lfu {

/// Dispatch variables are laid out as [P_g, angles, s].
struct DispatchResult {
  Eigen::VectorXd P_g;    // MW
  Eigen::VectorXd theta;  // rad
  Eigen::VectorXd s;      // MW of unserved forecast load
  QpSolution qp;
};

/// Redispatch variables are laid out as [P_ls, P_gs, angles].
struct RedispatchResult {
  Eigen::VectorXd P_ls;   // MW shed, per load
  Eigen::VectorXd P_gs;   // MW stored, per generator
  Eigen::VectorXd theta;  // rad
  QpSolution qp;
};

enum class GenerationClass { Under, Over };

/// Previous stage solutions used as active-set hints. Updated by every call
/// that receives it, so chaining consecutive samples reuses the last region.
struct TaskWarmStart {
  std::optional<QpSolution> dispatch;
  std::optional<QpSolution> redispatch;
};

/// Economic dispatch against a forecast. The forecast enters only through
/// the balance rows of the equality offset h (first `buses` entries).
QpSpec build_dispatch(const GridCase& grid, const Eigen::VectorXd& forecast_mw);

/// Real-time balancing of a fixed schedule against realized loads. P_g and
/// y enter only through h.
QpSpec build_redispatch(const GridCase& grid, const Eigen::VectorXd& P_g,
                        const Eigen::VectorXd& actual_mw);

DispatchResult solve_dispatch(const GridCase& grid, const Eigen::VectorXd& forecast_mw,
                              const QpSolution* warm = nullptr);
RedispatchResult solve_redispatch(const GridCase& grid, const Eigen::VectorXd& P_g,
                                  const Eigen::VectorXd& actual_mw, const QpSolution* warm = nullptr);

/// Operation cost ($): quadratic and linear generator cost plus quadratic and
/// linear shedding and storage penalties.
double gen_cost(const Eigen::VectorXd& P_g, const Eigen::VectorXd& P_ls,
                const Eigen::VectorXd& P_gs, const GridCase& grid);

struct TaskEvaluation {
  double loss = 0.0;
  DispatchResult dispatch;
  RedispatchResult redispatch;
};

/// Dispatch at the forecast, redispatch at the realized load, cost of both.
TaskEvaluation evaluate_task(const Eigen::VectorXd& forecast_mw, const Eigen::VectorXd& actual_mw,
                             const GridCase& grid, TaskWarmStart* warm = nullptr);

double task_loss(const Eigen::VectorXd& forecast_mw, const Eigen::VectorXd& actual_mw,
                 const GridCase& grid, TaskWarmStart* warm = nullptr);

struct TaskGradient {
  double loss = 0.0;
  Eigen::VectorXd grad;  // d loss / d forecast_mw
  Eigen::MatrixXd dispatch_jacobian;    // dP_g / d forecast
  Eigen::MatrixXd redispatch_jacobian;  // d[P_ls; P_gs] / dP_g
};

/// Exact gradient of the task loss on the current active-set region of both
/// stages. LICQ and degeneracy failures are rethrown with the stage named.
TaskGradient task_loss_grad(const Eigen::VectorXd& forecast_mw, const Eigen::VectorXd& actual_mw,
                            const GridCase& grid, TaskWarmStart* warm = nullptr);

/// Under when the forecast total is below the actual total; ties are Over.
GenerationClass classify_generation(const Eigen::VectorXd& forecast, const Eigen::VectorXd& actual);

const char* to_string(GenerationClass c);

}  // namespace lfu
