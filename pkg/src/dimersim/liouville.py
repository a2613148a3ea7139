"""Vectorized Liouvillian: nullspace steady states, spectral gap, speed-limit bound.

Row-major vectorization: |i><j| maps onto |i> (x) |j>, so A rho -> (A (x) 1) v
and rho B -> (1 (x) B^T) v. The dense superoperator is capped at 6 qubits
(4096^2 complex); larger systems go through long-time integration instead.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as la

from .model import SystemModel
from .operators import CapacityError, collective_lowering, dagger, ground_state

DENSE_LIOUVILLIAN_MAX_QUBITS = 6


class DegenerateSteadyStateError(RuntimeError):
    """Nullspace dimension exceeds one where a unique steady state was required."""

    def __init__(self, null_dim: int):
        super().__init__(f"steady-state nullspace is {null_dim}-dimensional")
        self.null_dim = null_dim


@dataclass
class LiouvillianMatrix:
    n_qubits: int
    matrix: np.ndarray
    built_at_omega: float
    gamma_total: float


@dataclass
class SteadyStateResult:
    rho_ss: np.ndarray | None
    residual: float
    null_dim: int
    clip_magnitude: float = 0.0
    null_basis: np.ndarray | None = None  # columns: vectorized nullspace, when degenerate


@dataclass
class GapResult:
    eigenvalues: np.ndarray
    gap: float
    n_zero_modes: int


def vectorize(rho: np.ndarray) -> np.ndarray:
    if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
        raise ValueError(f"vectorize needs a square matrix, got shape {rho.shape}")
    return np.asarray(rho, dtype=complex).reshape(-1)


def devectorize(v: np.ndarray) -> np.ndarray:
    v = np.asarray(v, dtype=complex)
    d = int(round(np.sqrt(v.size)))
    if d * d != v.size:
        raise ValueError(f"vector length {v.size} is not a perfect square")
    return v.reshape(d, d)


def hamiltonian_superop(h: np.ndarray) -> np.ndarray:
    """-i (H (x) 1 - 1 (x) H^T)."""
    eye = np.eye(h.shape[0], dtype=complex)
    return -1j * (np.kron(h, eye) - np.kron(eye, h.T))


def dissipator_superop(op: np.ndarray) -> np.ndarray:
    """D[L] as a superoperator: L (x) L* - (1/2)(L^dag L (x) 1 + 1 (x) (L^dag L)^T)."""
    eye = np.eye(op.shape[0], dtype=complex)
    ldl = dagger(op) @ op
    return np.kron(op, np.conj(op)) - 0.5 * (np.kron(ldl, eye) + np.kron(eye, ldl.T))


def build_liouvillian(model: SystemModel, omega_const: float | None = None) -> LiouvillianMatrix:
    """Dense superoperator for a time-independent model.

    `omega_const` overrides the drive value; by default the model must already
    be time-independent (constant drive, or evaluated past the control window)
    and the saturated drive value is used. An active control field at the
    evaluation time is unsupported: freeze it first.
    """
    if model.n_qubits > DENSE_LIOUVILLIAN_MAX_QUBITS:
        raise CapacityError(
            f"dense Liouvillian capped at {DENSE_LIOUVILLIAN_MAX_QUBITS} qubits; "
            "use long-time integration with a residual certificate instead"
        )
    t_eval = model.constant_from()
    if omega_const is None:
        omega_const = model.omega(t_eval)
    if np.max(np.abs(model.control_field(t_eval))) > 0:
        raise ValueError("control field is still active; the Liouvillian would be time-dependent")
    h = np.zeros((model.dim, model.dim), dtype=complex)
    for part in model.hamiltonian_parts():
        label_is_drive = part.label == "drive"
        coeff = omega_const if label_is_drive else part.coeff(t_eval)
        if coeff != 0.0:
            h += coeff * part.matrix
    liou = hamiltonian_superop(h)
    for ch in model.jump_channels():
        rate = ch.rate(t_eval)
        if ch.label == "drive_noise":
            rate = model.noise.eta_drive**2 * omega_const**2
        if rate != 0.0:
            liou += rate * dissipator_superop(ch.operator(t_eval))
    return LiouvillianMatrix(
        n_qubits=model.n_qubits,
        matrix=liou,
        built_at_omega=float(omega_const),
        gamma_total=model.gamma_total,
    )


def steady_state(
    liou: LiouvillianMatrix,
    require_unique: bool = True,
    svd_rel_threshold: float = 1e-10,
) -> SteadyStateResult:
    """Nullspace steady state via singular-value thresholding.

    Singular values below svd_rel_threshold * sigma_max count as zero. A
    unique nullspace vector is devectorized, Hermitized, projected onto the
    positive cone (clipping eigenvalues above -1e-12) and trace-normalized;
    degeneracy returns the nullspace basis or raises when uniqueness was
    demanded.
    """
    mat = liou.matrix
    _, svals, vh = la.svd(mat)
    cutoff = svd_rel_threshold * svals[0]
    null_dim = int(np.sum(svals < cutoff))
    if null_dim == 0:
        # fall back to the smallest singular vector; residual will expose trouble
        null_dim = 1
    null_vecs = vh[-null_dim:].conj().T  # columns
    if null_dim > 1:
        if require_unique:
            raise DegenerateSteadyStateError(null_dim)
        return SteadyStateResult(
            rho_ss=None,
            residual=float(np.linalg.norm(mat @ null_vecs[:, -1])),
            null_dim=null_dim,
            null_basis=null_vecs,
        )
    rho = devectorize(null_vecs[:, 0])
    rho = 0.5 * (rho + dagger(rho))
    tr = np.trace(rho)
    # fix the overall sign/phase so the trace is positive real
    if abs(tr) < 1e-14:
        raise DegenerateSteadyStateError(null_dim)
    rho = rho / tr
    evals, evecs = la.eigh(rho)
    clip_magnitude = float(max(0.0, -np.min(evals)))
    if np.min(evals) < -1e-12:
        evals = np.clip(evals, 0.0, None)
        rho = (evecs * evals) @ dagger(evecs)
        rho = rho / np.trace(rho)
    residual = float(np.linalg.norm(mat @ vectorize(rho)))
    return SteadyStateResult(
        rho_ss=rho,
        residual=residual,
        null_dim=1,
        clip_magnitude=clip_magnitude,
    )


def liouvillian_gap(liou: LiouvillianMatrix, zero_tol: float = 1e-10) -> GapResult:
    """Spectral gap: smallest |Re lambda| over the nonzero modes.

    Eigenvalues with |Re| below zero_tol * gamma_total count as zero modes;
    any eigenvalue with significantly positive real part indicates a broken
    generator and raises.
    """
    evals = la.eigvals(liou.matrix)
    scale = max(liou.gamma_total, 1.0)
    if np.max(np.real(evals)) > 1e-8 * scale:
        raise ValueError(
            f"Liouvillian has a growing mode: max Re(lambda) = {np.max(np.real(evals)):.3e}"
        )
    nonzero = np.abs(np.real(evals)) >= zero_tol * liou.gamma_total
    n_zero = int(np.sum(~nonzero))
    if not np.any(nonzero):
        raise ValueError("all eigenvalues are zero modes; no relaxation gap")
    gap = float(np.min(np.abs(np.real(evals[nonzero]))))
    return GapResult(eigenvalues=evals, gap=gap, n_zero_modes=n_zero)


def propagate_expm(
    liou: LiouvillianMatrix, rho0: np.ndarray, t: float
) -> np.ndarray:
    """Exact propagation rho(t) = expm(L t) rho0 for time-independent models.

    Serves as the independent oracle for the fixed-step integrator.
    """
    v = la.expm(liou.matrix * t) @ vectorize(rho0)
    return devectorize(v)


def dimer_time_from_fidelity(fidelity: float) -> float:
    """Chirality-weighted relaxation time dgamma*tau needed for a steady-state fidelity F.

    Inverse of fidelity_from_dimer_time; diverges as F -> 1.
    """
    if not 0.0 < fidelity < 1.0:
        raise ValueError(f"fidelity must lie in (0, 1), got {fidelity}")
    return 1.5 * (1.0 / (1.0 - fidelity) - 1.0)


def fidelity_from_dimer_time(dgamma_tau: float) -> float:
    """F = 2 x / (2 x + 3) with x = dgamma * tau."""
    if dgamma_tau < 0:
        raise ValueError("dgamma_tau must be >= 0")
    return 2.0 * dgamma_tau / (2.0 * dgamma_tau + 3.0)


def qsl_activity(target: np.ndarray, gamma_total: float) -> tuple[float, float]:
    """Dissipative speed-limit functional and its (unnormalized) time bound.

    A = gamma * ||c^dag |phi><phi| c||_F = gamma * ||c^dag phi||^2 for the
    collective zero-phase jump operator; returns (A, 1/A) with the bound
    +inf for a perfectly dark target. Only the scaling of the bound is
    physical; the proportionality constant is not fixed.
    """
    target = np.asarray(target, dtype=complex)
    n = int(round(np.log2(target.size)))
    if 2**n != target.size:
        raise ValueError("target length must be a power of two")
    if abs(np.linalg.norm(target) - 1.0) > 1e-10:
        raise ValueError("target must be normalized")
    c = collective_lowering(np.zeros(n), n)
    amp = dagger(c) @ target
    activity = float(gamma_total * np.real(np.vdot(amp, amp)))
    bound = float("inf") if activity == 0.0 else 1.0 / activity
    return activity, bound


def finite_drive_dimer_state(delta_gamma: float, omega: float) -> np.ndarray:
    """Unique two-qubit steady state at finite drive and chirality.

    ((i dgamma/omega)|gg> - |ge> + |eg>) / sqrt(2 + (dgamma/omega)^2); reduces
    to the singlet as omega/dgamma -> infinity and to |gg> as omega -> 0.
    """
    if omega == 0.0:
        return ground_state(2)
    x = delta_gamma / omega
    vec = np.zeros(4, dtype=complex)
    vec[0] = 1j * x
    vec[1] = -1.0
    vec[2] = 1.0
    return vec / np.sqrt(2.0 + x**2)
