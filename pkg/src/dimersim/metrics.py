"""State-quality measures: partial trace, pair concurrence, purity, fidelity."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .operators import SIGMA_Y


class InvalidStateError(ValueError):
    """Density matrix violates positivity beyond the clipping tolerance."""


_SYSY = np.kron(SIGMA_Y, SIGMA_Y)


@dataclass
class MetricSample:
    """Scalar observables extracted from one state along a trajectory."""

    t: float
    concurrence_per_pair: tuple[float, ...]
    purity_per_pair: tuple[float, ...]
    global_purity: float
    fidelity_to_target: float


def partial_trace(rho: np.ndarray, keep: tuple[int, ...] | list[int]) -> np.ndarray:
    """Reduced state on the 1-based sites in `keep` (site order preserved)."""
    keep = tuple(keep)
    if not keep:
        raise ValueError("keep must be nonempty")
    dim = rho.shape[0]
    n = int(round(np.log2(dim)))
    if 2**n != dim or rho.shape != (dim, dim):
        raise ValueError(f"rho must be square with power-of-two dimension, got {rho.shape}")
    if any(not 1 <= s <= n for s in keep) or len(set(keep)) != len(keep):
        raise ValueError(f"keep sites must be distinct and within 1..{n}")
    tensor = rho.reshape((2,) * (2 * n))
    traced = [s for s in range(1, n + 1) if s not in keep]
    # trace axes pairwise, highest site index first so axis numbers stay valid
    for s in sorted(traced, reverse=True):
        tensor = np.trace(tensor, axis1=s - 1, axis2=tensor.ndim // 2 + s - 1)
        n -= 1
        # axes above s shift down by one on both ket and bra sides; recompute keep map
        keep = tuple(k if k < s else k - 1 for k in keep)
    d_keep = 2 ** len(keep)
    out = tensor.reshape(d_keep, d_keep)
    # remaining axes are in ascending site order; reorder to the requested order
    ranks = np.argsort(np.argsort(keep))
    if not np.all(ranks == np.arange(len(keep))):
        axes = list(ranks) + [r + len(keep) for r in ranks]
        out = out.reshape((2,) * (2 * len(keep))).transpose(axes).reshape(d_keep, d_keep)
    return out


def concurrence(rho2: np.ndarray, clip: float = 1e-10) -> float:
    """Wootters concurrence of a two-qubit density matrix.

    Eigenvalues of rho * (sy x sy) rho^* (sy x sy) more negative than -clip
    raise InvalidStateError instead of being masked; smaller negatives are
    clipped to zero before the square root.
    """
    if rho2.shape != (4, 4):
        raise ValueError(f"concurrence needs a 4x4 density matrix, got {rho2.shape}")
    rho_tilde = _SYSY @ np.conj(rho2) @ _SYSY
    evals = np.linalg.eigvals(rho2 @ rho_tilde)
    evals = np.real(evals)
    if np.min(evals) < -clip:
        raise InvalidStateError(
            f"concurrence eigenvalue {np.min(evals):.3e} below clipping tolerance -{clip:.0e}"
        )
    lam = np.sqrt(np.sort(np.clip(evals, 0.0, None))[::-1])
    return float(max(0.0, lam[0] - lam[1] - lam[2] - lam[3]))


def purity(rho: np.ndarray) -> float:
    """tr(rho^2), in (0, 1]."""
    return float(np.real(np.einsum("ij,ji->", rho, rho)))


def fidelity_to_pure(rho: np.ndarray, target: np.ndarray) -> float:
    """<target| rho |target>; overlap-squared for pure rho."""
    target = np.asarray(target, dtype=complex)
    if rho.shape[0] != target.size:
        raise ValueError(
            f"dimension mismatch: rho is {rho.shape}, target has length {target.size}"
        )
    val = float(np.real(np.conj(target) @ rho @ target))
    return min(max(val, 0.0), 1.0)


def pair_metrics(
    rho: np.ndarray,
    pairs: tuple[tuple[int, int], ...],
    target: np.ndarray | None,
    t: float = 0.0,
) -> MetricSample:
    """Concurrence and purity per pair plus global purity and target fidelity."""
    c_vals = []
    p_vals = []
    for (i, j) in pairs:
        rho_pair = partial_trace(rho, (i, j))
        c_vals.append(concurrence(rho_pair))
        p_vals.append(purity(rho_pair))
    fid = fidelity_to_pure(rho, target) if target is not None else float("nan")
    return MetricSample(
        t=t,
        concurrence_per_pair=tuple(c_vals),
        purity_per_pair=tuple(p_vals),
        global_purity=purity(rho),
        fidelity_to_target=fid,
    )
