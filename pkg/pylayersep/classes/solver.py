# solver.py - inexact augmented-Lagrangian layer separation with joint disparity refinement

import logging
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.sparse.linalg import LinearOperator, cg

from pylayersep.classes.errors import DimensionError, ObjectiveError, SolverDivergenceError
from pylayersep.classes.lightfield import DisparityMap, LayerStack, unroll
from pylayersep.classes.prox import project_nonneg, soft_threshold, solve_quadratic_gradient, svt
from pylayersep.classes.warp import gradient, gradient_adjoint, linearize

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class SolverState:
    """Every primal, auxiliary and dual variable of one ALM iterate.

    Per-channel variables are C×K×(h·w) (B, C, L3, L4: C×K×2h·w); disparity
    variables are shared by all channels. `d` is the linearization point d^(t)
    and `delta_d` the current Δd, so the working disparity is d + Δd.
    """
    image_shape: tuple
    I: np.ndarray
    T: np.ndarray
    S: np.ndarray
    G: np.ndarray
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    d: np.ndarray
    delta_d: np.ndarray
    omega: np.ndarray
    E: np.ndarray
    F: np.ndarray
    L1: np.ndarray
    L2: np.ndarray
    L3: np.ndarray
    L4: np.ndarray
    L5: np.ndarray
    L6: np.ndarray
    mu: float
    objective_history: list = field(default_factory=list)
    residual_history: list = field(default_factory=list)

    @classmethod
    def zeros(cls, stack, d, mu=0.0):
        """Layers, auxiliaries and multipliers zero, linearized at d.

        The given d overrides the declared d⁰ = 0, so ω starts at d and F at Dd
        to keep E = d − ω and F = Dω satisfied as in the all-zero start.
        """
        data = np.array(stack.data)
        channels, views, size = data.shape
        zeros_stack = np.zeros_like(data)
        zeros_grad = np.zeros((channels, views, 2 * size))
        d = unroll(d.d) if isinstance(d, DisparityMap) else np.asarray(d, dtype=np.float64).reshape(-1)
        if d.size != size:
            raise DimensionError(f"disparity has {d.size} pixels, stack rows have {size}")
        return cls(
            image_shape=stack.image_shape,
            I=data, T=zeros_stack.copy(), S=zeros_stack.copy(), G=data.copy(), A=zeros_stack.copy(),
            B=zeros_grad.copy(), C=zeros_grad.copy(),
            d=d.astype(np.float64), delta_d=np.zeros(size), omega=d.astype(np.float64),
            E=np.zeros(size), F=gradient(d, stack.image_shape),
            L1=zeros_stack.copy(), L2=zeros_stack.copy(), L3=zeros_grad.copy(), L4=zeros_grad.copy(),
            L5=np.zeros(size), L6=np.zeros(2 * size),
            mu=float(mu),
        )

    @property
    def d_current(self):
        return self.d + self.delta_d

    def feasibility(self):
        return float(np.linalg.norm(self.G - self.T - self.S))


@dataclass(frozen=True, eq=False)
class SeparationResult:
    """Reference-view layers, refined disparity and convergence diagnostics.

    `feasibility` is ‖G−T−S‖_F at the exit of the inner loop that produced the
    returned layers and `feasibility_tol` the inner_tol·‖I‖ bound it was held to;
    `status` is converged, max_iterations or stalled.
    """
    T_ref: np.ndarray
    S_ref: np.ndarray
    d: DisparityMap
    objective_history: list
    converged: bool
    status: str
    outer_iterations: int
    inner_iterations: list
    feasibility: float
    T: LayerStack = None
    S: LayerStack = None
    valid_mask: np.ndarray = None
    feasibility_tol: float = np.inf


def prepare_linearization(stack, jacobians, ref_index):
    """Masked samples take the reference row's value and a zero Jacobian"""
    data = np.array(stack.data)
    j_hat = np.stack([jac.j_hat for jac in jacobians], axis=1)
    if stack.mask is not None:
        invalid = ~stack.mask
        reference = np.broadcast_to(data[:, ref_index:ref_index + 1, :], data.shape)
        data = np.where(invalid[None], reference, data)
        j_hat = np.where(invalid[None], 0.0, j_hat)
    return data, j_hat


def _nuclear_norm(T):
    if not np.all(np.isfinite(T)):
        return np.nan
    return sum(np.linalg.svd(T[c], compute_uv=False).sum() for c in range(T.shape[0]))


def objective(state, config):
    """‖T‖∗ + λ₁‖DT⊙DS‖₁ + λ₂‖DI−DT−DS‖²_F + λ₃‖DT‖₁ + λ₄‖DS‖₁ + λ₅‖d−ω‖₁ + λ₆‖Dω‖₁ (+ λ_S‖S‖₁)

    Evaluated at the working disparity d + Δd; channel terms are summed.
    """
    shape = state.image_shape
    DT = gradient(state.T, shape)
    DS = gradient(state.S, shape)
    DI = gradient(state.I, shape)
    d = state.d_current

    terms = {
        'nuclear': _nuclear_norm(state.T),
        'coupling': config.lambda1 * np.abs(DT * DS).sum(),
        'gradient_data': config.lambda2 * np.square(DI - DT - DS).sum(),
        'sparse_DT': config.lambda3 * np.abs(DT).sum(),
        'sparse_DS': config.lambda4 * np.abs(DS).sum(),
        'disparity_fidelity': config.lambda5 * np.abs(d - state.omega).sum(),
        'disparity_tv': config.lambda6 * np.abs(gradient(state.omega, shape)).sum(),
        'sparse_S': config.lambda_sparse * np.abs(state.S).sum(),
    }
    total = 0.0
    for name, value in terms.items():
        if not np.isfinite(value):
            raise ObjectiveError(name, value)
        total += float(value)
    return total


def _solve_shifted_laplacian(rhs, shape, diagonal, x0, config):
    """Solve (diagonal·Id + DᵀD) X = rhs row by row, all rows as one block-diagonal CG system"""
    lead = rhs.shape[:-1]
    size = rhs.size

    def matvec(x):
        rows = x.reshape(lead + (-1,))
        return (diagonal * rows + gradient_adjoint(gradient(rows, shape), shape)).reshape(-1)

    operator = LinearOperator((size, size), matvec=matvec, dtype=np.float64)
    solution, info = cg(operator, rhs.reshape(-1), x0=x0.reshape(-1), rtol=config.cg_tol, atol=0.0,
                        maxiter=config.cg_maxiter)
    if info > 0:
        logger.warning("conjugate gradient stopped after %d iterations without reaching rtol %.1e",
                       info, config.cg_tol)
    return solution.reshape(rhs.shape)


def inner_step(state, stack, J, config):
    """One ADM sweep in the order A, B, C, E, F, ω, S, T, Δd, then the multiplier updates and μ ← nμ.

    `stack` is the (masked) warped stack I(d^(t)) as a C×K×h·w array or LayerStack
    and `J` the matching C×K×h·w array of Ĵ values.
    """
    shape = state.image_shape
    I = np.asarray(stack.data if isinstance(stack, LayerStack) else stack, dtype=np.float64)
    J = np.asarray(J, dtype=np.float64)
    mu = state.mu
    DI = gradient(I, shape)

    A = np.stack([svt(state.T[c] - state.L2[c] / mu, 1.0 / mu) for c in range(state.T.shape[0])])

    DT = gradient(state.T, shape)
    DS = gradient(state.S, shape)
    B = solve_quadratic_gradient(state.C, DI, config.lambda2, mu, DT - state.L3 / mu,
                                 threshold=1.0, weights=config.lambda1 * np.abs(state.C) + config.lambda3)
    C = solve_quadratic_gradient(B, DI, config.lambda2, mu, DS - state.L4 / mu,
                                 threshold=1.0, weights=config.lambda1 * np.abs(B) + config.lambda4)

    d = state.d_current
    E = soft_threshold(d - state.omega - state.L5 / mu, config.lambda5 / mu)
    F = soft_threshold(gradient(state.omega, shape) - state.L6 / mu, config.lambda6 / mu)

    omega_rhs = (d - E - state.L5 / mu) + gradient_adjoint(F + state.L6 / mu, shape)
    omega = _solve_shifted_laplacian(omega_rhs, shape, 1.0, state.omega, config)

    # on S ⪰ 0 the ℓ¹ term is linear, a constant shift of the right-hand side
    S_rhs = (state.G - state.T + state.L1 / mu) + gradient_adjoint(C + state.L4 / mu, shape) \
        - config.lambda_sparse / mu
    S = project_nonneg(_solve_shifted_laplacian(S_rhs, shape, 1.0, state.S, config))

    T_rhs = (state.G - S + state.L1 / mu) + (A + state.L2 / mu) + gradient_adjoint(B + state.L3 / mu, shape)
    T = project_nonneg(_solve_shifted_laplacian(T_rhs, shape, 2.0, state.T, config))

    # per pixel: min Σ_c,i (r + Δd·Ĵ)² + (q − Δd)²
    r = I - T - S + state.L1 / mu
    q = E - state.d + omega + state.L5 / mu
    delta_d = (q - np.sum(J * r, axis=(0, 1))) / (np.sum(J * J, axis=(0, 1)) + 1.0)
    low = np.maximum(-config.max_step, config.dmin - state.d)
    high = np.minimum(config.max_step, config.dmax - state.d)
    delta_d = np.clip(delta_d, low, high)
    G = I + delta_d * J
    d_new = state.d + delta_d

    DT = gradient(T, shape)
    DS = gradient(S, shape)
    L1 = state.L1 + mu * (G - T - S)
    L2 = state.L2 + mu * (A - T)
    L3 = state.L3 + mu * (B - DT)
    L4 = state.L4 + mu * (C - DS)
    L5 = state.L5 + mu * (E - d_new + omega)
    L6 = state.L6 + mu * (F - gradient(omega, shape))

    new_state = replace(
        state, I=I, T=T, S=S, G=G, A=A, B=B, C=C, delta_d=delta_d, omega=omega, E=E, F=F,
        L1=L1, L2=L2, L3=L3, L4=L4, L5=L5, L6=L6,
        mu=min(config.n * mu, config.mu_max),
        residual_history=state.residual_history + [float(np.linalg.norm(G - T - S))],
    )
    _check_divergence(new_state.residual_history, config.divergence_window)
    return new_state


def _check_divergence(residuals, window):
    if len(residuals) <= window:
        return
    recent = residuals[-(window + 1):]
    if all(later > earlier for earlier, later in zip(recent, recent[1:])):
        raise SolverDivergenceError(
            f"feasibility residual grew for {window} consecutive inner steps "
            f"({recent[0]:.3e} -> {recent[-1]:.3e})", residuals)


@dataclass
class LayerSeparator:
    """Runs the alternating solver with outer re-linearization for one light field; one solve per instance"""
    lightfield: object
    config: object
    state: SolverState = None
    inner_iterations: list = field(default_factory=list)

    def _linearize(self, d):
        disparity = DisparityMap(d.reshape(self.lightfield.shape))
        stack, jacobians = linearize(self.lightfield, disparity, order=self.config.interpolation_order,
                                     step=self.config.jacobian_step)
        data, j_hat = prepare_linearization(stack, jacobians, self.lightfield.ref_index)
        return stack, data, j_hat

    def _resolve_config(self, data):
        if self.config.is_resolved:
            return self.config
        spectral = max(float(np.linalg.norm(data[c], 2)) for c in range(data.shape[0]))
        return self.config.resolve(data.shape[1], data.shape[2], spectral)

    def _inner_loop(self, state, data, j_hat, outer):
        tolerance = self.config.inner_tol * float(np.linalg.norm(data))
        state = replace(state, mu=self.config.mu0, residual_history=[])
        converged = False
        steps = 0
        for inner in range(self.config.max_inner):
            mu = state.mu
            state = inner_step(state, data, j_hat, self.config)
            steps = inner + 1
            residual = state.residual_history[-1]
            if logger.isEnabledFor(logging.DEBUG):
                logger.debug("outer %d inner %d objective %.6f residual %.3e mu %.3e",
                             outer, inner, objective(state, self.config), residual, mu)
            if residual <= tolerance:
                converged = True
                break
        self.inner_iterations.append(steps)
        return state, converged

    def _relinearized(self, state, d):
        """State moved to linearization point d with Δd = 0 and I re-warped"""
        stack, data, j_hat = self._linearize(d)
        return replace(state, I=data, G=data.copy(), d=d, delta_d=np.zeros_like(d)), stack, data, j_hat

    def separate(self, d0):
        lf = self.lightfield
        d = np.clip(unroll(d0.d), self.config.dmin, self.config.dmax)
        stack, data, j_hat = self._linearize(d)
        self.config = self._resolve_config(data)
        state = SolverState.zeros(LayerStack(data, lf.shape), d, mu=self.config.mu0)

        history = []
        accepted = None
        accepted_exit = (np.inf, False, np.inf)
        status = 'max_iterations'
        for outer in range(self.config.max_outer):
            tolerance = self.config.inner_tol * float(np.linalg.norm(data))
            state, inner_converged = self._inner_loop(state, data, j_hat, outer)
            exit_residual = state.residual_history[-1]
            candidate = np.clip(state.d_current, self.config.dmin, self.config.dmax)
            moved, new_stack, new_data, new_j_hat = self._relinearized(state, candidate)
            value = objective(moved, self.config)

            if history and value > history[-1] + self.config.objective_slack:
                if value - history[-1] < self.config.outer_tol:
                    # the previous iterate already is a fixed point of the outer loop
                    logger.info("outer %d: objective %.6f within outer_tol of %.6f, previous iterate kept",
                                outer, value, history[-1])
                    status = 'converged'
                    break
                kept = replace(state, delta_d=np.zeros_like(state.d), G=data.copy())
                kept_value = objective(kept, self.config)
                if kept_value <= history[-1] + self.config.objective_slack:
                    accepted = kept
                    accepted_exit = (exit_residual, inner_converged, tolerance)
                    history.append(kept_value)
                    logger.info("outer %d: disparity update rejected, layers kept (objective %.6f)",
                                outer, kept_value)
                else:
                    logger.info("outer %d: iterate rejected, keeping previous (objective %.6f > %.6f)",
                                outer, kept_value, history[-1])
                status = 'stalled'
                break

            mean_step = float(np.mean(np.abs(candidate - state.d)))
            accepted = moved
            accepted_exit = (exit_residual, inner_converged, tolerance)
            state, stack, data, j_hat = moved, new_stack, new_data, new_j_hat
            history.append(value)
            logger.info("outer %d: objective %.6f, mean |Δd| %.4f, inner steps %d",
                        outer, value, mean_step, self.inner_iterations[-1])
            if len(history) > 1 and abs(history[-2] - history[-1]) < self.config.outer_tol:
                status = 'converged'
                break

        self.state = replace(accepted, objective_history=history)
        feasibility, inner_converged, tolerance = accepted_exit
        # stalled and max_iterations runs never count as converged
        converged = status == 'converged' and inner_converged
        if not converged:
            logger.warning("separation stopped without convergence (status %s, residual %.3e)",
                           status, feasibility)
        return self._result(stack, history, converged, status, feasibility, tolerance)

    def _result(self, stack, history, converged, status, feasibility, tolerance):
        lf = self.lightfield
        state = self.state
        T = LayerStack(state.T, lf.shape)
        S = LayerStack(state.S, lf.shape)
        d = DisparityMap.clipped(state.d_current.reshape(lf.shape), self.config.dmin, self.config.dmax)
        valid = np.all(stack.mask, axis=0).reshape(lf.shape) if stack.mask is not None else None
        return SeparationResult(
            T_ref=T.roll_row(lf.ref_index),
            S_ref=S.roll_row(lf.ref_index),
            d=d,
            objective_history=list(history),
            converged=converged,
            status=status,
            outer_iterations=len(self.inner_iterations),
            inner_iterations=list(self.inner_iterations),
            feasibility=float(feasibility),
            feasibility_tol=float(tolerance),
            T=T,
            S=S,
            valid_mask=valid,
        )


def separate(lf, d0, config):
    """Separate transmitted and secondary layers of `lf` starting from disparity d0"""
    return LayerSeparator(lf, config).separate(d0)
