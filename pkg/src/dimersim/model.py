"""Physics assembly: bath, drive schedule, target dark states, control fields.

Everything a Liouvillian evaluation needs at time t lives in a SystemModel:
Hamiltonian pieces with their time-dependent coefficients, and the list of
jump channels (bath, free-space decay, and the two noise dissipators obtained
from averaging white control noise).

Rates are expressed in units of the total bath decay rate, times in its
inverse; the total rate itself is carried explicitly as gamma_L + gamma_R.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Sequence

import numpy as np

from .operators import (
    SIGMA_X,
    SIGMA_Y,
    SIGMA_Z,
    collective_lowering,
    dagger,
    embed_site_operator,
    embed_two_site_operator,
    ground_state,
    is_hermitian,
    lowering,
    normalize,
    spectral_norm,
)

# control-field Pauli z with |g> as the +1 state; the two-body control forms
# are written in this convention and calibrated against the outer-product
# generator at assembly time (see local_pauli_generator).
_Z_CTRL = -SIGMA_Z


class UnsupportedConfigurationError(ValueError):
    """Control mode incompatible with the requested system."""


class ControlMode(Enum):
    NONE = "none"
    APPROXIMATE_GENERATOR = "approximate_generator"
    EXACT_GENERATOR = "exact_generator"
    LOCAL_PAULI = "local_pauli"
    COUNTERDIABATIC = "counterdiabatic"


@dataclass(frozen=True)
class BathConfig:
    """Collective 1D-bath decay: left/right rates, propagation phases, free-space loss."""

    gamma_left: float = 0.5
    gamma_right: float = 0.5
    phases: tuple[float, ...] | None = None  # per-qubit phi_j; None = all zero
    gamma_free: float = 0.0

    def __post_init__(self) -> None:
        for name in ("gamma_left", "gamma_right", "gamma_free"):
            v = getattr(self, name)
            if not math.isfinite(v) or v < 0:
                raise ValueError(f"{name} must be finite and >= 0, got {v}")
        if self.gamma_left + self.gamma_right <= 0:
            raise ValueError("gamma_left + gamma_right must be positive")

    @property
    def gamma_total(self) -> float:
        return self.gamma_left + self.gamma_right

    @property
    def delta_gamma(self) -> float:
        return self.gamma_right - self.gamma_left

    def phase_vector(self, n_qubits: int) -> np.ndarray:
        if self.phases is None:
            return np.zeros(n_qubits)
        phases = np.asarray(self.phases, dtype=float)
        if phases.shape != (n_qubits,):
            raise ValueError(
                f"phases must have length {n_qubits}, got shape {phases.shape}"
            )
        return phases

    def has_uniform_phases(self, n_qubits: int) -> bool:
        """True when every pairwise phase phi_k - phi_j vanishes mod 2pi."""
        phases = self.phase_vector(n_qubits)
        return bool(np.max(np.abs(np.exp(1j * (phases - phases[0])) - 1.0)) < 1e-12)


@dataclass(frozen=True)
class DriveProtocol:
    """Rabi drive schedule: linear ramp saturating at t_f, or constant.

    In ramp mode Omega(t) = m * gamma^2 * min(t, t_f), i.e. Omega/gamma grows
    with slope m per unit of gamma*t and saturates at t_f (the Heaviside
    convention with step value 1/2 at the kink gives the same, continuous,
    value). theta_k is the sharpness of the rotation-angle schedule.
    """

    ramp_slope: float | None = None
    saturation_time: float | None = None
    theta_k: float = 10.0
    constant_omega: float | None = None

    def __post_init__(self) -> None:
        ramp_mode = self.ramp_slope is not None or self.saturation_time is not None
        const_mode = self.constant_omega is not None
        if ramp_mode == const_mode:
            raise ValueError("exactly one of ramp mode and constant mode must be set")
        if ramp_mode:
            if self.ramp_slope is None or self.saturation_time is None:
                raise ValueError("ramp mode needs both ramp_slope and saturation_time")
            if self.ramp_slope < 0:
                raise ValueError("ramp_slope must be >= 0")
            if self.saturation_time <= 0:
                raise ValueError("saturation_time must be > 0")
        else:
            if self.constant_omega < 0:
                raise ValueError("constant_omega must be >= 0")
        if self.theta_k <= 0:
            raise ValueError("theta_k must be > 0")

    @staticmethod
    def ramp(slope: float, t_f: float, k: float = 10.0) -> "DriveProtocol":
        return DriveProtocol(ramp_slope=slope, saturation_time=t_f, theta_k=k)

    @staticmethod
    def constant(omega: float, k: float = 10.0) -> "DriveProtocol":
        return DriveProtocol(constant_omega=omega, theta_k=k)

    @property
    def is_ramp(self) -> bool:
        return self.constant_omega is None

    def control_window_end(self) -> float:
        """Time after which the control field is switched off."""
        return self.saturation_time if self.is_ramp else 0.0


def drive_value(protocol: DriveProtocol, t: float, gamma_total: float = 1.0) -> float:
    """Rabi frequency Omega(t) in the same rate units as gamma_total."""
    if t < 0:
        raise ValueError(f"t must be >= 0, got {t}")
    if not protocol.is_ramp:
        return float(protocol.constant_omega)
    return protocol.ramp_slope * gamma_total**2 * min(t, protocol.saturation_time)


def drive_slope(protocol: DriveProtocol, t: float, gamma_total: float = 1.0) -> float:
    """dOmega/dt; the ramp kink at t_f uses the left derivative."""
    if not protocol.is_ramp:
        return 0.0
    return protocol.ramp_slope * gamma_total**2 if t <= protocol.saturation_time else 0.0


def theta_of_omega(k: float, omega_over_gamma: float) -> float:
    """Rotation-angle schedule (pi/2)(1 - exp(-k * Omega/gamma)) in [0, pi/2)."""
    if k <= 0:
        raise ValueError("k must be > 0")
    if omega_over_gamma < 0:
        raise ValueError("omega must be >= 0")
    return 0.5 * np.pi * (1.0 - np.exp(-k * omega_over_gamma))


def theta_rate(protocol: DriveProtocol, t: float, gamma_total: float = 1.0) -> float:
    """d theta/dt by the chain rule through the drive schedule (no finite differences)."""
    omega = drive_value(protocol, t, gamma_total)
    return (
        0.5
        * np.pi
        * (protocol.theta_k / gamma_total)
        * np.exp(-protocol.theta_k * omega / gamma_total)
        * drive_slope(protocol, t, gamma_total)
    )


@dataclass(frozen=True)
class NoiseConfig:
    """White multiplicative control-noise strengths (drive and control field)."""

    eta_drive: float = 0.0
    eta_control: float = 0.0

    def __post_init__(self) -> None:
        for name in ("eta_drive", "eta_control"):
            v = getattr(self, name)
            if not math.isfinite(v) or v < 0:
                raise ValueError(f"{name} must be finite and >= 0, got {v}")


@dataclass(frozen=True)
class PairingSpec:
    """Qubit pairing choice: explicit disjoint pairs, or every perfect matching."""

    pairs: tuple[tuple[int, int], ...] | None  # None = all perfect matchings

    @staticmethod
    def disjoint(pairs: Sequence[tuple[int, int]]) -> "PairingSpec":
        return PairingSpec(pairs=tuple((int(i), int(j)) for i, j in pairs))

    @staticmethod
    def adjacent(n_qubits: int) -> "PairingSpec":
        """Geometrically local pairs (1,2), (3,4), ..."""
        if n_qubits % 2:
            raise ValueError("adjacent pairing needs even n_qubits")
        return PairingSpec.disjoint([(i, i + 1) for i in range(1, n_qubits, 2)])

    @staticmethod
    def all_matchings() -> "PairingSpec":
        return PairingSpec(pairs=None)

    @property
    def is_all_matchings(self) -> bool:
        return self.pairs is None

    def validate(self, n_qubits: int) -> None:
        if self.pairs is None:
            if n_qubits % 2:
                raise ValueError("all-matchings target needs even n_qubits")
            return
        seen: set[int] = set()
        for i, j in self.pairs:
            if not (1 <= i < j <= n_qubits):
                raise ValueError(f"pair ({i}, {j}) must satisfy 1 <= i < j <= {n_qubits}")
            if i in seen or j in seen:
                raise ValueError(f"pair ({i}, {j}) overlaps another pair")
            seen.update((i, j))

    def metric_pairs(self, n_qubits: int) -> tuple[tuple[int, int], ...]:
        """Pairs whose concurrence is tracked; adjacent pairs for all-matchings."""
        if self.pairs is not None:
            return self.pairs
        return tuple((i, i + 1) for i in range(1, n_qubits, 2))


def perfect_matchings(n_qubits: int) -> list[tuple[tuple[int, int], ...]]:
    """All (n-1)!! perfect matchings of 1..n with i < j inside each pair."""
    if n_qubits % 2:
        raise ValueError("perfect matchings need even n_qubits")

    def rec(remaining: tuple[int, ...]):
        if not remaining:
            yield ()
            return
        first = remaining[0]
        for k in range(1, len(remaining)):
            partner = remaining[k]
            rest = remaining[1:k] + remaining[k + 1 :]
            for tail in rec(rest):
                yield ((first, partner),) + tail

    return list(rec(tuple(range(1, n_qubits + 1))))


def singlet(i: int, j: int, n_qubits: int) -> np.ndarray:
    """(|e_i g_j> - |g_i e_j>)/sqrt(2), ground on every other site."""
    if not (1 <= i < j <= n_qubits):
        raise ValueError(f"need 1 <= i < j <= {n_qubits}, got ({i}, {j})")
    vec = np.zeros(2 ** n_qubits, dtype=complex)
    bit_i = 1 << (n_qubits - i)
    bit_j = 1 << (n_qubits - j)
    vec[bit_i] = 1.0 / np.sqrt(2.0)   # excited on the lower index carries +
    vec[bit_j] = -1.0 / np.sqrt(2.0)
    return vec


def triplet(i: int, j: int, n_qubits: int) -> np.ndarray:
    """(|e_i g_j> + |g_i e_j>)/sqrt(2); superradiant partner of the singlet."""
    if not (1 <= i < j <= n_qubits):
        raise ValueError(f"need 1 <= i < j <= {n_qubits}, got ({i}, {j})")
    vec = np.zeros(2 ** n_qubits, dtype=complex)
    vec[1 << (n_qubits - i)] = 1.0 / np.sqrt(2.0)
    vec[1 << (n_qubits - j)] = 1.0 / np.sqrt(2.0)
    return vec


def _singlet_product(pairs: Sequence[tuple[int, int]], n_qubits: int) -> np.ndarray:
    """Product of singlets over disjoint pairs, ground elsewhere (unnormalized choices sum)."""
    vec = np.zeros(2 ** n_qubits, dtype=complex)
    amp = (1.0 / np.sqrt(2.0)) ** len(pairs)
    # each pair contributes (+ excited-on-i) or (- excited-on-j)
    for choice in itertools.product((0, 1), repeat=len(pairs)):
        index = 0
        sign = 1.0
        for (i, j), c in zip(pairs, choice):
            if c == 0:
                index |= 1 << (n_qubits - i)
            else:
                index |= 1 << (n_qubits - j)
                sign = -sign
        vec[index] += sign * amp
    return vec


def target_state(spec: PairingSpec, n_qubits: int) -> np.ndarray:
    """Normalized dark-state target: singlet product, or sum over all matchings.

    The all-matchings sum is normalized numerically; the matching terms are
    not mutually orthogonal so no closed-form norm is assumed.
    """
    spec.validate(n_qubits)
    if spec.pairs is not None:
        return _singlet_product(spec.pairs, n_qubits)
    total = np.zeros(2 ** n_qubits, dtype=complex)
    for matching in perfect_matchings(n_qubits):
        total += _singlet_product(matching, n_qubits)
    return normalize(total)


def build_x_operator(target: np.ndarray, n_qubits: int) -> np.ndarray:
    """Rank-2 rotation generator |g...g><target| + |target><g...g|."""
    target = np.asarray(target, dtype=complex)
    if abs(np.linalg.norm(target) - 1.0) > 1e-10:
        raise ValueError("target state must be normalized")
    g = ground_state(n_qubits)
    return np.outer(g, np.conj(target)) + np.outer(target, np.conj(g))


def pair_x_operator(i: int, j: int, n_qubits: int) -> np.ndarray:
    """Two-body generator |gg><S| + |S><gg| on pair (i, j), identity elsewhere."""
    s2 = singlet(1, 2, 2)
    g2 = ground_state(2)
    x2 = np.outer(g2, np.conj(s2)) + np.outer(s2, np.conj(g2))
    return embed_two_site_operator(x2, i, j, n_qubits)


def local_pauli_generator(
    pairs: Sequence[tuple[int, int]], n_qubits: int
) -> tuple[np.ndarray, float]:
    """Sum of calibrated two-body Pauli control terms, one per pair.

    The raw two-body combination
        (1/2)(sx_i - sx_j) + (1/2)(sx_i z_j - z_i sx_j)
    (z in the control convention with |g> as the +1 state) is proportional to
    the outer-product pair generator; the proportionality constant depends on
    the Pauli sign conventions, so it is measured here by direct matrix
    comparison and divided out. Returns (generator, measured scale).
    """
    dim = 2 ** n_qubits
    total = np.zeros((dim, dim), dtype=complex)
    scale_seen: float | None = None
    for (i, j) in pairs:
        sx_i = embed_site_operator(SIGMA_X, i, n_qubits)
        sx_j = embed_site_operator(SIGMA_X, j, n_qubits)
        z_i = embed_site_operator(_Z_CTRL, i, n_qubits)
        z_j = embed_site_operator(_Z_CTRL, j, n_qubits)
        raw = 0.5 * (sx_i - sx_j) + 0.5 * (sx_i @ z_j - z_i @ sx_j)
        x_pair = pair_x_operator(i, j, n_qubits)
        scale = float(
            np.real(np.vdot(x_pair, raw)) / np.real(np.vdot(x_pair, x_pair))
        )
        if scale == 0.0 or np.max(np.abs(raw - scale * x_pair)) > 1e-12 * abs(scale):
            raise UnsupportedConfigurationError(
                "two-body control form is not proportional to the pair generator"
            )
        if scale_seen is None:
            scale_seen = scale
        total += raw / scale
    return total, float(scale_seen if scale_seen is not None else 1.0)


def build_coherent_interaction(bath: BathConfig, n_qubits: int) -> np.ndarray:
    """Bath-mediated coherent qubit-qubit coupling.

    sum_{j<k} (i/2)(gamma_R e^{-i phi_jk} - gamma_L e^{i phi_jk}) sigma_j^dag sigma_k + h.c.
    with phi_jk = phi_k - phi_j; Hermitian by construction, zero for symmetric rates
    at zero phases.
    """
    phases = bath.phase_vector(n_qubits)
    dim = 2 ** n_qubits
    out = np.zeros((dim, dim), dtype=complex)
    sig = [lowering(s, n_qubits) for s in range(1, n_qubits + 1)]
    for j in range(n_qubits):
        for k in range(j + 1, n_qubits):
            phi_jk = phases[k] - phases[j]
            coeff = 0.5j * (
                bath.gamma_right * np.exp(-1j * phi_jk)
                - bath.gamma_left * np.exp(1j * phi_jk)
            )
            term = coeff * (dagger(sig[j]) @ sig[k])
            out += term + dagger(term)
    return out


def build_drive(omega_t: float, n_qubits: int) -> np.ndarray:
    """Local drive (Omega/2) sum_i sigma_i^x at the instantaneous Rabi frequency."""
    if omega_t < 0:
        raise ValueError("omega must be >= 0")
    return omega_t * drive_quadrature(n_qubits)


def drive_quadrature(n_qubits: int) -> np.ndarray:
    """(1/2) sum_i sigma_i^x; the drive Hamiltonian is Omega(t) times this."""
    dim = 2 ** n_qubits
    out = np.zeros((dim, dim), dtype=complex)
    for s in range(1, n_qubits + 1):
        out += 0.5 * embed_site_operator(SIGMA_X, s, n_qubits)
    return out


def counterdiabatic_field(ramp_slope: float, t: float) -> np.ndarray:
    """Closed-form counterdiabatic field for two qubits under Omega(t) = m t.

    Valid for the fully chiral point gamma_R = 1, gamma_L = 0 (its coefficients
    hard-code that choice); three two-body Pauli terms in the control z/y
    convention.
    """
    m = ramp_slope
    x1 = embed_site_operator(SIGMA_X, 1, 2)
    x2 = embed_site_operator(SIGMA_X, 2, 2)
    y1 = embed_site_operator(SIGMA_Y, 1, 2)
    y2 = embed_site_operator(SIGMA_Y, 2, 2)
    z1 = embed_site_operator(_Z_CTRL, 1, 2)
    z2 = embed_site_operator(_Z_CTRL, 2, 2)
    t1 = x1 - x2 + x1 @ z2 - z1 @ x2
    t2 = x1 @ y2 + y1 @ x2
    t3 = -x1 + x2 + x1 @ z2 - z1 @ x2
    c1 = 0.5 * m / (1.0 + 2.0 * m**2 * t**2)
    den = 1.0 + 6.0 * m**2 * t**2 + 8.0 * m**4 * t**4
    c2 = 0.5 * 2.0 * m**2 * t / den
    c3 = 0.5 * m / den
    return c1 * t1 + c2 * t2 + c3 * t3


@dataclass
class HamiltonianPart:
    """One additive Hamiltonian piece: coefficient(t) * matrix."""

    label: str
    matrix: np.ndarray
    coeff: Callable[[float], float]
    norm: float = 0.0  # spectral norm of `matrix`, for step-size control

    def __post_init__(self) -> None:
        if self.norm == 0.0:
            self.norm = spectral_norm(self.matrix)


@dataclass
class JumpChannel:
    """Dissipator rate(t) * D[op]; op may be time-dependent (op_fn set)."""

    label: str
    rate: Callable[[float], float]
    op: np.ndarray | None = None
    op_fn: Callable[[float], np.ndarray] | None = None
    op_norm: float = 0.0

    def __post_init__(self) -> None:
        if (self.op is None) == (self.op_fn is None):
            raise ValueError("exactly one of op and op_fn must be given")
        if self.op is not None and self.op_norm == 0.0:
            self.op_norm = spectral_norm(self.op)

    @property
    def is_static(self) -> bool:
        return self.op is not None

    def operator(self, t: float) -> np.ndarray:
        return self.op if self.op is not None else self.op_fn(t)


class SystemModel:
    """Everything needed to evaluate the master equation at any time.

    Immutable after assembly; evaluating the Hamiltonian or the jump list
    allocates per call and is safe to share across workers.
    """

    def __init__(
        self,
        n_qubits: int,
        bath: BathConfig,
        detunings: np.ndarray,
        protocol: DriveProtocol,
        control: ControlMode,
        pairing: PairingSpec | None,
        target: np.ndarray,
        noise: NoiseConfig,
        merge_collective: bool | None = None,
    ):
        self.n_qubits = n_qubits
        self.dim = 2 ** n_qubits
        self.bath = bath
        self.detunings = detunings
        self.protocol = protocol
        self.control = control
        self.pairing = pairing
        self.target = target
        self.noise = noise
        self.local_pauli_scale: float | None = None

        self._h_parts: list[HamiltonianPart] = []
        self._channels: list[JumpChannel] = []
        self._control_parts: list[HamiltonianPart] = []

        gamma = bath.gamma_total
        t_off = protocol.control_window_end()

        def omega(t: float) -> float:
            return drive_value(protocol, t, gamma)

        def dtheta(t: float) -> float:
            return theta_rate(protocol, t, gamma) if t <= t_off else 0.0

        self.omega = omega
        self.theta_rate = dtheta
        self.control_window_end = t_off

        # static Hamiltonian pieces
        det_op = np.zeros((self.dim, self.dim), dtype=complex)
        for s in range(1, n_qubits + 1):
            det_op += -detunings[s - 1] * embed_site_operator(
                np.diag([0.0, 1.0]).astype(complex), s, n_qubits
            )
        h_c = build_coherent_interaction(bath, n_qubits)
        a_drive = drive_quadrature(n_qubits)
        if np.any(detunings):
            self._h_parts.append(HamiltonianPart("detuning", det_op, lambda t: 1.0))
        if np.max(np.abs(h_c)) > 0:
            self._h_parts.append(HamiltonianPart("coherent_interaction", h_c, lambda t: 1.0))
        self._h_parts.append(HamiltonianPart("drive", a_drive, omega))

        # control field
        if control is ControlMode.NONE:
            pass
        elif control in (ControlMode.APPROXIMATE_GENERATOR, ControlMode.EXACT_GENERATOR):
            x_op = build_x_operator(target, n_qubits)
            self._control_parts.append(HamiltonianPart("rotation_generator", x_op, dtheta))
            if control is ControlMode.EXACT_GENERATOR:
                # subtract the bath interaction and the drive while the window is open
                def gate(t: float) -> float:
                    return 1.0 if t <= t_off else 0.0

                if np.max(np.abs(h_c)) > 0:
                    self._control_parts.append(
                        HamiltonianPart("minus_coherent", -h_c, gate)
                    )
                self._control_parts.append(
                    HamiltonianPart(
                        "minus_drive", -a_drive, lambda t: omega(t) if t <= t_off else 0.0
                    )
                )
        elif control is ControlMode.LOCAL_PAULI:
            if pairing is None or pairing.is_all_matchings:
                raise UnsupportedConfigurationError(
                    "local two-body control needs an explicit disjoint pairing"
                )
            gen, scale = local_pauli_generator(pairing.pairs, n_qubits)
            self.local_pauli_scale = scale
            self._control_parts.append(HamiltonianPart("local_pauli", gen, dtheta))
        elif control is ControlMode.COUNTERDIABATIC:
            if n_qubits != 2:
                raise UnsupportedConfigurationError(
                    "counterdiabatic control is only available for 2 qubits"
                )
            if not protocol.is_ramp:
                raise UnsupportedConfigurationError(
                    "counterdiabatic control needs the linear-ramp drive"
                )
            if abs(bath.gamma_right - 1.0) > 1e-12 or abs(bath.gamma_left) > 1e-12:
                raise UnsupportedConfigurationError(
                    "counterdiabatic field is derived for gamma_R = 1, gamma_L = 0"
                )
            m = protocol.ramp_slope
            x1 = embed_site_operator(SIGMA_X, 1, 2)
            x2 = embed_site_operator(SIGMA_X, 2, 2)
            y1 = embed_site_operator(SIGMA_Y, 1, 2)
            y2 = embed_site_operator(SIGMA_Y, 2, 2)
            z1 = embed_site_operator(_Z_CTRL, 1, 2)
            z2 = embed_site_operator(_Z_CTRL, 2, 2)

            def gated(fn: Callable[[float], float]) -> Callable[[float], float]:
                return lambda t: fn(t) if t <= t_off else 0.0

            den = lambda t: 1.0 + 6.0 * m**2 * t**2 + 8.0 * m**4 * t**4
            self._control_parts.extend(
                [
                    HamiltonianPart(
                        "cd_subspace",
                        x1 - x2 + x1 @ z2 - z1 @ x2,
                        gated(lambda t: 0.5 * m / (1.0 + 2.0 * m**2 * t**2)),
                    ),
                    HamiltonianPart(
                        "cd_cross",
                        x1 @ y2 + y1 @ x2,
                        gated(lambda t: m**2 * t / den(t)),
                    ),
                    HamiltonianPart(
                        "cd_upper",
                        -x1 + x2 + x1 @ z2 - z1 @ x2,
                        gated(lambda t: 0.5 * m / den(t)),
                    ),
                ]
            )
        self._h_parts.extend(self._control_parts)

        # jump channels: bath, free-space, noise
        uniform = bath.has_uniform_phases(n_qubits)
        if merge_collective is None:
            merge_collective = uniform
        if merge_collective and not uniform:
            raise ValueError("cannot merge dissipators with non-uniform phases")
        phases = bath.phase_vector(n_qubits)
        if merge_collective:
            c = collective_lowering(np.zeros(n_qubits), n_qubits)
            self._channels.append(JumpChannel("bath", lambda t: gamma, op=c))
        else:
            c_left = collective_lowering(phases, n_qubits)
            c_right = collective_lowering(-phases, n_qubits)
            if bath.gamma_left > 0:
                self._channels.append(
                    JumpChannel("bath_left", lambda t: bath.gamma_left, op=c_left)
                )
            if bath.gamma_right > 0:
                self._channels.append(
                    JumpChannel("bath_right", lambda t: bath.gamma_right, op=c_right)
                )
        if bath.gamma_free > 0:
            for s in range(1, n_qubits + 1):
                self._channels.append(
                    JumpChannel(
                        f"free_space_{s}",
                        lambda t: bath.gamma_free,
                        op=lowering(s, n_qubits),
                    )
                )
        if noise.eta_drive > 0:
            eta1sq = noise.eta_drive**2
            self._channels.append(
                JumpChannel(
                    "drive_noise",
                    lambda t: eta1sq * omega(t) ** 2,
                    op=a_drive,
                )
            )
        if noise.eta_control > 0 and control is not ControlMode.NONE:
            eta2sq = noise.eta_control**2
            if control in (ControlMode.APPROXIMATE_GENERATOR, ControlMode.LOCAL_PAULI):
                gen = self._control_parts[0].matrix
                self._channels.append(
                    JumpChannel(
                        "control_noise",
                        lambda t: eta2sq * dtheta(t) ** 2,
                        op=gen,
                    )
                )
            else:
                self._channels.append(
                    JumpChannel(
                        "control_noise",
                        lambda t: eta2sq,
                        op_fn=self.control_field,
                    )
                )

        for part in self._h_parts:
            if not is_hermitian(part.matrix, tol=1e-12 * max(1.0, part.norm)):
                raise ValueError(f"Hamiltonian part '{part.label}' is not Hermitian")

    # -- evaluation ---------------------------------------------------------

    @property
    def gamma_total(self) -> float:
        return self.bath.gamma_total

    @property
    def delta_gamma(self) -> float:
        return self.bath.delta_gamma

    def hamiltonian_parts(self) -> list[HamiltonianPart]:
        return list(self._h_parts)

    def hamiltonian(self, t: float) -> np.ndarray:
        out = np.zeros((self.dim, self.dim), dtype=complex)
        for part in self._h_parts:
            c = part.coeff(t)
            if c != 0.0:
                out += c * part.matrix
        return out

    def control_field(self, t: float) -> np.ndarray:
        out = np.zeros((self.dim, self.dim), dtype=complex)
        for part in self._control_parts:
            c = part.coeff(t)
            if c != 0.0:
                out += c * part.matrix
        return out

    def jump_channels(self) -> list[JumpChannel]:
        return list(self._channels)

    def constant_from(self) -> float:
        """Earliest time after which the full generator is time-independent."""
        return self.control_window_end if self.protocol.is_ramp else 0.0

    def is_time_independent_at(self, t: float) -> bool:
        return t >= self.constant_from()

    def metric_pairs(self) -> tuple[tuple[int, int], ...]:
        if self.pairing is not None:
            return self.pairing.metric_pairs(self.n_qubits)
        return tuple((i, i + 1) for i in range(1, self.n_qubits, 2))


def assemble_model(
    bath: BathConfig,
    detunings: Sequence[float] | np.ndarray | None,
    protocol: DriveProtocol,
    control: ControlMode,
    target: PairingSpec | np.ndarray,
    noise: NoiseConfig | None = None,
    n_qubits: int | None = None,
    merge_collective: bool | None = None,
) -> SystemModel:
    """Validate inputs and assemble the full system model.

    `target` is either a pairing specification (the normalized dark state is
    built from it) or an explicit normalized state vector.
    """
    if isinstance(target, PairingSpec):
        if n_qubits is None:
            raise ValueError("n_qubits is required with a pairing specification")
        pairing = target
        target_vec = target_state(pairing, n_qubits)
    else:
        target_vec = np.asarray(target, dtype=complex)
        inferred = int(round(np.log2(target_vec.size)))
        if 2**inferred != target_vec.size:
            raise ValueError("target vector length must be a power of two")
        if n_qubits is None:
            n_qubits = inferred
        elif n_qubits != inferred:
            raise ValueError(
                f"target vector is for {inferred} qubits, model built for {n_qubits}"
            )
        pairing = None
    if detunings is None:
        detunings = np.zeros(n_qubits)
    detunings = np.asarray(detunings, dtype=float)
    if detunings.shape != (n_qubits,):
        raise ValueError(
            f"detunings must have length {n_qubits}, got shape {detunings.shape}"
        )
    bath.phase_vector(n_qubits)  # validates length
    return SystemModel(
        n_qubits=n_qubits,
        bath=bath,
        detunings=detunings,
        protocol=protocol,
        control=control,
        pairing=pairing,
        target=target_vec,
        noise=noise or NoiseConfig(),
        merge_collective=merge_collective,
    )


def build_control_field(
    mode: ControlMode,
    target: PairingSpec | np.ndarray,
    protocol: DriveProtocol,
    bath: BathConfig,
    t: float,
    n_qubits: int | None = None,
) -> np.ndarray:
    """Control Hamiltonian at time t (zero once the control window has closed)."""
    if t < 0:
        raise ValueError("t must be >= 0")
    model = assemble_model(
        bath=bath,
        detunings=None,
        protocol=protocol,
        control=mode,
        target=target,
        n_qubits=n_qubits,
    )
    return model.control_field(t)
