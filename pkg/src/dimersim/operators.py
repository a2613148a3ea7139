"""Elementary operator algebra on the N-qubit Hilbert space.

Basis conventions, fixed once for the whole package:

* single qubit: index 0 is the ground state |g>, index 1 the excited state |e>;
* N qubits: computational basis, big-endian in site order, i.e. site 1 is the
  most significant bit (|e g> for N=2 is basis index 2);
* ``sigma_z |e> = +|e>``, so the excited-state projector is (1 + sigma_z)/2.
"""

from __future__ import annotations

import numpy as np

MAX_QUBITS = 10

# single-site operators in the (|g>, |e>) basis
SIGMA_MINUS = np.array([[0.0, 1.0], [0.0, 0.0]], dtype=complex)  # |g><e|
SIGMA_PLUS = np.array([[0.0, 0.0], [1.0, 0.0]], dtype=complex)   # |e><g|
SIGMA_X = np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex)
SIGMA_Y = np.array([[0.0, -1.0j], [1.0j, 0.0]], dtype=complex)
SIGMA_Z = np.array([[-1.0, 0.0], [0.0, 1.0]], dtype=complex)     # sigma_z|e> = +|e>
IDENTITY_2 = np.eye(2, dtype=complex)


class CapacityError(ValueError):
    """Requested system size exceeds the dense-operator capacity cap."""


def _check_n_qubits(n_qubits: int) -> None:
    if n_qubits < 1:
        raise ValueError(f"n_qubits must be >= 1, got {n_qubits}")
    if n_qubits > MAX_QUBITS:
        raise CapacityError(
            f"n_qubits = {n_qubits} exceeds the dense capacity cap of {MAX_QUBITS}"
        )


def embed_site_operator(local: np.ndarray, site: int, n_qubits: int) -> np.ndarray:
    """Embed a 2x2 operator at `site` (1-based), identity on all other sites.

    Site 1 is the leftmost tensor factor (most significant bit).
    """
    _check_n_qubits(n_qubits)
    local = np.asarray(local, dtype=complex)
    if local.shape != (2, 2):
        raise ValueError(f"local operator must be 2x2, got shape {local.shape}")
    if not 1 <= site <= n_qubits:
        raise IndexError(f"site {site} out of range 1..{n_qubits}")
    out = np.eye(2 ** (site - 1), dtype=complex)
    out = np.kron(out, local)
    out = np.kron(out, np.eye(2 ** (n_qubits - site), dtype=complex))
    return out


def embed_two_site_operator(
    local4: np.ndarray, site_a: int, site_b: int, n_qubits: int
) -> np.ndarray:
    """Embed a two-qubit (4x4) operator on sites (site_a, site_b), identity elsewhere.

    The 4x4 operator is read in the big-endian (site_a, site_b) product basis.
    Sites need not be adjacent; site_a < site_b is required.
    """
    _check_n_qubits(n_qubits)
    local4 = np.asarray(local4, dtype=complex)
    if local4.shape != (4, 4):
        raise ValueError(f"two-site operator must be 4x4, got shape {local4.shape}")
    if not (1 <= site_a < site_b <= n_qubits):
        raise IndexError(f"need 1 <= site_a < site_b <= {n_qubits}, got ({site_a}, {site_b})")
    # expand over elementary matrices E_ac (x) E_bd; 16 sparse products
    dim = 2 ** n_qubits
    out = np.zeros((dim, dim), dtype=complex)
    units = [np.zeros((2, 2), dtype=complex) for _ in range(4)]
    for k, (r, c) in enumerate([(0, 0), (0, 1), (1, 0), (1, 1)]):
        units[k][r, c] = 1.0
    for ka, (ra, ca) in enumerate([(0, 0), (0, 1), (1, 0), (1, 1)]):
        for kb, (rb, cb) in enumerate([(0, 0), (0, 1), (1, 0), (1, 1)]):
            coeff = local4[2 * ra + rb, 2 * ca + cb]
            if coeff == 0:
                continue
            out += coeff * (
                embed_site_operator(units[ka], site_a, n_qubits)
                @ embed_site_operator(units[kb], site_b, n_qubits)
            )
    return out


def lowering(site: int, n_qubits: int) -> np.ndarray:
    """Lowering operator |g><e| embedded at `site`."""
    return embed_site_operator(SIGMA_MINUS, site, n_qubits)


def number_operator(n_qubits: int) -> np.ndarray:
    """Total excitation number, sum_i sigma_i^dag sigma_i."""
    return sum(
        embed_site_operator(SIGMA_PLUS @ SIGMA_MINUS, s, n_qubits)
        for s in range(1, n_qubits + 1)
    )


def collective_lowering(phases: np.ndarray, n_qubits: int) -> np.ndarray:
    """Collective jump operator sum_j exp(i phi_j) sigma_j.

    With all phases zero this is the single merged jump operator c; the
    left/right-going operators are obtained with +phases and -phases.
    """
    phases = np.atleast_1d(np.asarray(phases, dtype=float))
    if phases.shape != (n_qubits,):
        raise ValueError(
            f"phases must have length n_qubits = {n_qubits}, got shape {phases.shape}"
        )
    dim = 2 ** n_qubits
    out = np.zeros((dim, dim), dtype=complex)
    for j in range(n_qubits):
        out += np.exp(1j * phases[j]) * lowering(j + 1, n_qubits)
    return out


def ground_state(n_qubits: int) -> np.ndarray:
    """|g>^(x)N as a state vector."""
    _check_n_qubits(n_qubits)
    vec = np.zeros(2 ** n_qubits, dtype=complex)
    vec[0] = 1.0
    return vec


def basis_state(bits: str | list[int], n_qubits: int | None = None) -> np.ndarray:
    """Computational basis ket from a bit pattern, e.g. 'eg' or [1, 0].

    'g'/0 is ground, 'e'/1 excited; leftmost entry is site 1.
    """
    if isinstance(bits, str):
        table = {"g": 0, "e": 1, "0": 0, "1": 1}
        vals = [table[ch] for ch in bits]
    else:
        vals = [int(b) for b in bits]
    n = len(vals) if n_qubits is None else n_qubits
    if len(vals) != n:
        raise ValueError("bit pattern length does not match n_qubits")
    index = 0
    for b in vals:
        index = (index << 1) | (b & 1)
    vec = np.zeros(2 ** n, dtype=complex)
    vec[index] = 1.0
    return vec


def dagger(op: np.ndarray) -> np.ndarray:
    return np.conj(op.T)


def normalize(vec: np.ndarray) -> np.ndarray:
    nrm = np.linalg.norm(vec)
    if nrm == 0:
        raise ValueError("cannot normalize the zero vector")
    return vec / nrm


def is_hermitian(op: np.ndarray, tol: float = 1e-12) -> bool:
    return bool(np.max(np.abs(op - dagger(op))) <= tol)


def spectral_norm(op: np.ndarray) -> float:
    """Largest singular value; used for integrator step-size control."""
    return float(np.linalg.norm(op, 2))
