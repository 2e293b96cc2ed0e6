#pragma once

// Recovers the uncertainty realization driving the primary system from one
// plant transition (x_t, u_t) -> x_next, either by enumerating the finite
// realization set of the tree or by minimizing over the continuous box of
// the significant dimensions with the rest pinned to nominal. The chosen
// estimate then propagates the primary state between controller solves.

#include <Eigen/Core>

#include <optional>

#include "tems/model.hpp"
#include "tems/scenario_tree.hpp"

namespace tems {

enum class EstimateSource { finite, box };

struct EstimateResult {
  Eigen::VectorXd d_bar;
  double residual = 0.0;             // squared prediction error at d_bar
  double penalized_objective = 0.0;  // residual + (d-prev)'W(d-prev)
  EstimateSource source = EstimateSource::finite;
  int candidate_index = -1;          // finite case: position in the list
};

// argmin over the candidates of |x_next - f(x_t, u_t, d)|^2 plus the
// regularization. Ties prefer the previous estimate, then the lowest index.
// W may be empty (no regularization); it is ignored without prev.
EstimateResult estimate_finite(const ModelSpec& model, const Eigen::VectorXd& x_t,
                               const Eigen::VectorXd& u_t, const Eigen::VectorXd& x_next,
                               const RealizationSet& candidates,
                               const std::optional<Eigen::VectorXd>& prev = std::nullopt,
                               const Eigen::MatrixXd& W = Eigen::MatrixXd());

// Same objective over the box: significant dimensions free within their
// bounds, the others fixed at nominal. Solved with the SQP solver from two
// starts (prev and the box center); on solver failure falls back to
// enumerating box vertices plus nominal, flagged by source = finite.
EstimateResult estimate_box(const ModelSpec& model, const Eigen::VectorXd& x_t,
                            const Eigen::VectorXd& u_t, const Eigen::VectorXd& x_next,
                            const UncertaintyDecl& box, const Eigen::VectorXd& prev,
                            const Eigen::MatrixXd& W = Eigen::MatrixXd());

// z+ = f(z, v, d_bar): the primary-state update between solves. Throws on a
// non-finite result.
Eigen::VectorXd propagate_primary(const ModelSpec& model, const Eigen::VectorXd& z_t,
                                  const Eigen::VectorXd& v_t,
                                  const Eigen::VectorXd& d_bar);

}  // namespace tems
