"""Damped Gauss-Newton refinement for manifold least squares.

Shared by the block-model and biclustering pipelines: both project a noisy
block matrix onto its rank-r representation by minimizing
||target - Sigma(theta)||_F^2 over the chart.
"""

import numpy as np

__all__ = ["refine_least_squares"]

GRAD_TOL = 1e-10
MAX_ITER = 100
MAX_HALVINGS = 30


def refine_least_squares(x0, target_vec, value_fn, jacobian_fn, from_vector):
    """Minimize ||target_vec - value_fn(theta)||_2^2 over chart vectors.

    from_vector turns a raw vector into a validated chart point and may
    raise on domain violations; such steps are halved like any failed step.
    Stops when ||J^T residual||_2 <= 1e-10, after 100 iterations, or when 30
    halvings cannot improve the objective.

    Returns (theta, info) with info = {iterations, grad_norm, converged}.
    """
    x = np.asarray(x0, dtype=float).copy()
    theta = from_vector(x)
    res = target_vec - value_fn(theta)
    obj = float(res @ res)
    grad_norm = np.inf
    for it in range(MAX_ITER):
        J = jacobian_fn(theta)
        grad = J.T @ res
        grad_norm = float(np.linalg.norm(grad))
        if grad_norm <= GRAD_TOL:
            return theta, {"iterations": it, "grad_norm": grad_norm, "converged": True}
        step = np.linalg.lstsq(J, res, rcond=None)[0]
        t = 1.0
        accepted = False
        for _ in range(MAX_HALVINGS + 1):
            try:
                cand_theta = from_vector(x + t * step)
            except Exception:
                t *= 0.5
                continue
            cand_res = target_vec - value_fn(cand_theta)
            cand_obj = float(cand_res @ cand_res)
            if cand_obj < obj:
                x = x + t * step
                theta, res, obj = cand_theta, cand_res, cand_obj
                accepted = True
                break
            t *= 0.5
        if not accepted:
            # no descent direction left at this resolution
            return theta, {
                "iterations": it,
                "grad_norm": grad_norm,
                "converged": grad_norm <= GRAD_TOL,
            }
    return theta, {
        "iterations": MAX_ITER,
        "grad_norm": grad_norm,
        "converged": grad_norm <= GRAD_TOL,
    }
