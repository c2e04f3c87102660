"""Reference zoo of the ten studied activation functions.

Five are plain DSL expressions (exactly differentiable), one more uses the
DSL's batch statistics (``turbulent``), two are native pointwise functions
trained via finite differences (``quaternion``, ``pler``), and two are
native tensor-level functions kept forward-only (``fisg``, ``spf``).

All hard-coded constants are part of each function's definition and are
pinned by the fidelity tests; nothing here is tunable.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.special import expit

from . import exprlang
from .exprlang import Expr, NonFiniteOutput
from .nn import ExprActivation, FiniteDifferenceActivation
from .tensor import tensor2

__all__ = [
    "ZooEntry",
    "UnknownActivation",
    "ShapeTooSmall",
    "NotTrainable",
    "names",
    "builtin",
    "eval_entry",
    "fd_gradient",
    "trainable_activation",
    "metadata_rows",
]


class UnknownActivation(KeyError):
    pass


class ShapeTooSmall(ValueError):
    pass


class NotTrainable(ValueError):
    pass


@dataclass(frozen=True)
class ZooEntry:
    name: str
    display_name: str
    kind: str  # "dsl-expressible" | "native-pointwise" | "native-tensor"
    trainability: str  # "exact-ad" | "finite-difference" | "forward-only"
    expr: Expr | None
    fn: Callable[[np.ndarray], np.ndarray] | None
    source_dataset: str
    note: str


# ---------------------------------------------------------------------------
# DSL spellings

_RELU_TEXT = "(relu x)"
_GELU_TEXT = "(gelu x)"
_GELUSINE_TEXT = "(add (gelu x) (mul 0.1 (sin x)))"
_GELUSINC_TEXT = "(mul (gelu x) (add 1.0 (mul 0.5 (sinc x))))"
# tanh(1.5 x) * exp(-0.2 x^2) resonant bump plus a 0.1 x linear leak
_GMTU_TEXT = (
    "(add (mul (tanh (mul 1.5 x)) (exp (neg (mul 0.2 (mul x x))))) (mul 0.1 x))"
)
# sign(x) log1p(0.5|x|) base plus 0.2 exp(-z^2/2) sin(2x) ripples, where z is
# the whole-batch standardization of x (the DSL has no let-binding, so the
# z subterm appears twice)
_TURBULENT_Z = "(div (sub x (batch-mean x)) (batch-std x))"
_TURBULENT_TEXT = (
    "(add (mul (sign x) (log1p (mul 0.5 (abs x)))) "
    f"(mul 0.2 (mul (exp (mul -0.5 (mul {_TURBULENT_Z} {_TURBULENT_Z}))) "
    "(sin (mul 2.0 x)))))"
)


# ---------------------------------------------------------------------------
# Native pointwise functions


def _quaternion(x: np.ndarray) -> np.ndarray:
    """Hypercomplex gated unit: x times a four-component oscillatory gate.

    A damped complex term contributes the (w, i) components via a Gaussian
    envelope with Chebyshev-modulated center; two further (j, k) envelopes
    add semi-orthogonal oscillations.  f(0) = 0 and f(x) -> x for large |x|
    because every envelope carries an x^2 exp(-..) factor.
    """
    a = 0.1 + 0.05 * np.cos(4.0 * x)
    b = 0.5 + 0.2 * np.sin(2.5 * x + 2.0 * a)
    y_chaos = (np.sin(2.1 * x) * np.cos(1.3 * x) + 1.0) / 2.0

    c_amp = 0.05 + 0.1 * y_chaos
    u = np.tanh(2.0 * x)
    u2 = u * u
    cheby_t4 = 8.0 * u2 * u2 - 8.0 * u2 + 1.0
    cr = 0.1 + c_amp * cheby_t4

    ci_amp = 0.2 + 0.4 * (1.0 - y_chaos)
    u_i = np.tanh(2.0 * x)
    cheby_t3 = 4.0 * (u_i * u_i * u_i) - 3.0 * u_i
    ci = ci_amp * cheby_t3

    stable_magnitude = a * x**2 * np.exp(-b * (x - cr) ** 2)
    phase = 2.0 * b * ci * (x - cr)
    q_w = stable_magnitude * np.cos(phase)
    q_i = stable_magnitude * np.sin(phase)

    d_amp = 0.1 + 0.2 * y_chaos
    u_d = np.tanh(1.5 * x)
    cheby_t2 = 2.0 * u_d**2 - 1.0
    d_shift = d_amp * cheby_t2

    q_j_envelope = (0.5 * a * x**2) * np.exp(-b * (x - d_shift) ** 2)
    q_k_envelope = (0.5 * b * x**2) * np.exp(-a * (x + d_shift) ** 2)
    q_j = q_j_envelope * np.sin(2.0 * x + ci)
    q_k = q_k_envelope * np.cos(2.5 * x - cr)

    gate = 1.0 - (q_w - 0.2 * q_i - 0.15 * q_j - 0.15 * q_k)
    return x * gate


def _pler(x: np.ndarray) -> np.ndarray:
    """Phase-locked entropic repulsion: x gated by a pair of coupled
    logistic maps iterated 10 steps against a fixed reference oscillator.

    Small |x| gives attractive coupling (gate settles near a stable value);
    large |x| flips the coupling sign and collapses the gate toward zero.
    Pointwise: every element iterates its own map.
    """
    r = 2.5 + 1.5 * np.tanh(x**2 / 4.0)
    alpha = 0.1 * np.tanh(x**2 / 16.0)
    r_ref = 3.9
    alpha_ref = 0.05
    beta = 0.1 * (1.0 - 2.0 * np.tanh(x**2 / 8.0))
    omega_ref = np.cos(x * 2.5)
    resonance_gate = np.exp(-25.0 * omega_ref**2)

    y = 0.5 + 0.49 * np.tanh(x / 4.0)
    z = 0.5 - 0.49 * np.tanh(x / 4.0)
    y_ref = np.full_like(x, 0.2)
    z_ref = np.full_like(x, 0.8)
    c = np.zeros_like(x)

    for _ in range(10):
        instability_feedback = np.tanh(c * 4.0)
        beta_eff = beta - 0.2 * instability_feedback
        is_ood = 1.0 / (1.0 + np.exp(beta_eff * 50.0))

        coupling_internal = alpha * (z - y)
        y_dyn = r * y * (1.0 - y) + coupling_internal
        z_dyn = r * z * (1.0 - z) - coupling_internal

        # additive collapse toward zero, then multiplicative dissipation
        y_dyn = y_dyn - is_ood * 0.5 * y
        z_dyn = z_dyn - is_ood * 0.5 * z
        gamma = is_ood * np.tanh(c * 4.0)
        y_next = y_dyn * (1.0 - gamma)
        z_next = z_dyn * (1.0 - gamma)

        # resonance tunneling pulls states toward the neutral midpoint
        y_next = y_next + resonance_gate * 0.6 * (0.5 - y_next)
        z_next = z_next + resonance_gate * 0.6 * (0.5 - z_next)

        coupling_ref_internal = alpha_ref * (z_ref - y_ref)
        y_ref_next = r_ref * y_ref * (1.0 - y_ref) + coupling_ref_internal
        z_ref_next = r_ref * z_ref * (1.0 - z_ref) - coupling_ref_internal

        instability = np.abs(y_next - z_next)
        c_next = 0.8 * c + 0.2 * instability

        ood_modulation = 1.0 + np.tanh(np.abs(beta_eff) * 5.0) * z**2
        ood_amplification = 1.0 + np.tanh(c_next * 2.0)
        coupling_sync = beta_eff * (y_ref - y) * ood_modulation * ood_amplification
        y_next = y_next + coupling_sync
        y_ref_next = y_ref_next - (1.0 - is_ood) * coupling_sync

        y = np.clip(y_next, 0.0, 1.0)
        z = np.clip(z_next, 0.0, 1.0)
        y_ref = np.clip(y_ref_next, 0.0, 1.0)
        z_ref = np.clip(z_ref_next, 0.0, 1.0)
        c = c_next

    gate = (y + z) / 2.0
    return x * gate


# ---------------------------------------------------------------------------
# Native tensor functions

_FISG_SENSITIVITY = 2.0
_FISG_SPLIT_FRACTION = 0.25
_FISG_EPS = 1e-7


def _real_dft(x: np.ndarray) -> np.ndarray:
    """Naive O(n^2) real-input DFT along the feature axis (bins 0..n//2)."""
    n = x.shape[-1]
    k = np.arange(n // 2 + 1)[:, None]
    t = np.arange(n)[None, :]
    w = np.exp(-2j * np.pi * k * t / n)  # (n//2+1, n)
    return x @ w.T


def _inverse_real_dft(spec: np.ndarray, n: int) -> np.ndarray:
    """Inverse of :func:`_real_dft`: Hermitian-extend, invert, take real."""
    nf = spec.shape[-1]
    full = np.zeros((spec.shape[0], n), dtype=complex)
    full[:, :nf] = spec
    if n % 2 == 0:
        full[:, nf:] = np.conj(spec[:, nf - 2:0:-1])
    else:
        full[:, nf:] = np.conj(spec[:, nf - 1:0:-1])
    k = np.arange(n)[:, None]
    t = np.arange(n)[None, :]
    w = np.exp(2j * np.pi * k * t / n) / n
    return (full @ w).real


def _fisg(x: np.ndarray) -> np.ndarray:
    """Spectral gating over the feature axis.

    Per row: the fraction of DFT magnitude above the low-frequency band
    (first 25% of bins) drives a gate exp(-2 * imbalance); the output
    blends x with a copy whose high-frequency phases are conjugated.
    Rows with no high-band structure pass through unchanged.
    """
    n = x.shape[-1]
    if n < 4:
        raise ShapeTooSmall(f"fisg needs at least 4 feature columns, got {n}")
    spec = _real_dft(x)
    magnitudes = np.abs(spec)
    num_freqs = spec.shape[-1]
    split_idx = int(num_freqs * _FISG_SPLIT_FRACTION)

    high = magnitudes[:, split_idx:].sum(axis=-1, keepdims=True)
    total = magnitudes.sum(axis=-1, keepdims=True)
    spectral_imbalance = high / (total + _FISG_EPS)
    gate = np.exp(-_FISG_SENSITIVITY * spectral_imbalance)

    scrambled = spec.copy()
    scrambled[:, split_idx:] = np.conj(scrambled[:, split_idx:])
    modified = _inverse_real_dft(scrambled, n)
    return gate * x + (1.0 - gate) * modified


def _spf(x: np.ndarray) -> np.ndarray:
    """Symmetric phase-flipped switching between two saturating states.

    A chirped, neighbor-coupled oscillation (cyclic shifts along the
    feature axis) is added to or subtracted from an attenuated copy of x
    inside tanh saturation; a high-frequency switching phase picks the
    branch per element.  Far from the origin both branches collapse to 0.
    """
    m_sat = 10.0
    c_scale = 10.0

    u = (x / c_scale) ** 2
    meta_modulator = 1.0 + 2.0 * u * np.exp(-u / 1.5)
    amplitude = 2.0 * u * np.exp(-u / 2.0)
    phase_base = 1.0 * x + 0.5 * x**2 * np.sign(x) / c_scale

    x_prev = np.roll(x, 1, axis=-1)
    x_next = np.roll(x, -1, axis=-1)
    local_energy_sq = x**2 + 0.25 * (x_prev**2 + x_next**2)
    local_laplacian = x - 0.5 * (x_prev + x_next)
    ood_metric = (
        2.0 * (local_energy_sq - c_scale**2) / c_scale**2
        + 5.0 * (local_laplacian / c_scale) ** 2
    )
    alpha = expit(ood_metric)

    phase_disruption_calm = 0.2 * np.sin(15.0 * x)
    phase_disruption_agitated = 0.8 * np.sin(40.0 * x + 5.0 * local_laplacian)
    phase_disruption = (
        (1.0 - alpha) * phase_disruption_calm + alpha * phase_disruption_agitated
    )
    phase_coupling = 2.0 * (0.5 * x_prev - 1.0 * x_next) / c_scale

    phase = phase_base + phase_disruption + phase_coupling
    y_detail = amplitude * np.sin(phase)

    g_x = np.exp(-((np.abs(x) / (2.0 * c_scale)) ** 4))
    y_state_plus = m_sat * np.tanh((g_x * x + meta_modulator * y_detail) / m_sat)
    y_state_minus = m_sat * np.tanh((g_x * x - meta_modulator * y_detail) / m_sat)

    xs = x / c_scale
    switch_phase = 50.0 * (xs * xs * xs) + 0.5 * np.sin(25.0 * xs)
    should_be_plus = np.cos(switch_phase) > 0.0
    return np.where(should_be_plus, y_state_plus, y_state_minus)


# ---------------------------------------------------------------------------
# Registry


def _dsl_entry(name: str, display: str, text: str, source: str, note: str) -> ZooEntry:
    return ZooEntry(
        name=name,
        display_name=display,
        kind="dsl-expressible",
        trainability="exact-ad",
        expr=exprlang.parse(text),
        fn=None,
        source_dataset=source,
        note=note,
    )


_REGISTRY: dict[str, ZooEntry] = {
    "relu": _dsl_entry(
        "relu", "ReLU", _RELU_TEXT, "baseline",
        "max(0, x); the search seed and classic baseline",
    ),
    "gelu": _dsl_entry(
        "gelu", "GELU", _GELU_TEXT, "baseline",
        "Gaussian error linear unit (tanh form); frequently rediscovered",
    ),
    "gelusine": _dsl_entry(
        "gelusine", "GELUSine", _GELUSINE_TEXT, "sin product",
        "GELU(x) + 0.1 sin(x): periodic wiggle on a smooth base",
    ),
    "gelusinc": _dsl_entry(
        "gelusinc", "GELU-Sinc-Perturbation", _GELUSINC_TEXT, "polynomials",
        "GELU(x) (1 + 0.5 sinc(x)): bounded oscillation near the origin",
    ),
    "gmtu": _dsl_entry(
        "gmtu", "Gaussian-Modulated Tangent Unit", _GMTU_TEXT, "sin product",
        "tanh(1.5x) exp(-0.2 x^2) + 0.1 x: resonant bump with linear leak",
    ),
    "turbulent": _dsl_entry(
        "turbulent", "Turbulent", _TURBULENT_TEXT, "feynman equations",
        "sign(x) log1p(0.5|x|) + batch-standardized Gaussian-windowed ripples",
    ),
    "quaternion": ZooEntry(
        name="quaternion",
        display_name="Quaternion-Inspired",
        kind="native-pointwise",
        trainability="finite-difference",
        expr=None,
        fn=_quaternion,
        source_dataset="feynman equations",
        note="x times a four-component hypercomplex oscillatory gate",
    ),
    "pler": ZooEntry(
        name="pler",
        display_name="Phase-Locked Entropic Repulsion",
        kind="native-pointwise",
        trainability="finite-difference",
        expr=None,
        fn=_pler,
        source_dataset="spherical harmonics",
        note="x gated by 10 iterations of coupled logistic maps",
    ),
    "fisg": ZooEntry(
        name="fisg",
        display_name="Fourier-Informed Spectral Gating",
        kind="native-tensor",
        trainability="forward-only",
        expr=None,
        fn=_fisg,
        source_dataset="feynman equations",
        note="feature-axis DFT gate blending x with a phase-scrambled copy",
    ),
    "spf": ZooEntry(
        name="spf",
        display_name="Symmetric Phase-Flipped",
        kind="native-tensor",
        trainability="forward-only",
        expr=None,
        fn=_spf,
        source_dataset="polynomials",
        note="chaotic switching between two phase-flipped saturating states",
    ),
}


def names() -> tuple[str, ...]:
    return tuple(_REGISTRY)


def builtin(name: str) -> ZooEntry:
    try:
        return _REGISTRY[name]
    except KeyError:
        raise UnknownActivation(
            f"unknown activation {name!r}; known: {', '.join(_REGISTRY)}"
        ) from None


def eval_entry(entry: ZooEntry, x) -> np.ndarray:
    """Evaluate an entry on a (batch x features) tensor, shape-preserving."""
    x = tensor2(x)
    if entry.expr is not None:
        return exprlang.forward(entry.expr, x)
    out = entry.fn(x)
    if not np.isfinite(out).all():
        raise NonFiniteOutput(0, entry.name)
    return out


def fd_gradient(entry: ZooEntry, x, h: float = 1e-5) -> np.ndarray:
    """Central-difference elementwise derivative (pointwise entries only)."""
    if entry.kind == "native-tensor":
        raise NotTrainable(f"{entry.name} is not pointwise; no elementwise gradient")
    x = tensor2(x)
    return (eval_entry(entry, x + h) - eval_entry(entry, x - h)) / (2.0 * h)


def trainable_activation(entry: ZooEntry):
    """Adapter usable by the MLP trainer, or :class:`NotTrainable`."""
    if entry.trainability == "exact-ad":
        return ExprActivation(entry.expr)
    if entry.trainability == "finite-difference":
        return FiniteDifferenceActivation(lambda z: eval_entry(entry, z))
    raise NotTrainable(f"{entry.name} is forward-only and cannot be trained")


def metadata_rows() -> list[dict[str, object]]:
    """Machine-readable zoo table: name, kind, trainability, cost, source."""
    rows = []
    for entry in _REGISTRY.values():
        rows.append(
            {
                "name": entry.name,
                "display_name": entry.display_name,
                "kind": entry.kind,
                "trainability": entry.trainability,
                "flop_cost": exprlang.cost(entry.expr) if entry.expr is not None else "",
                "source_dataset": entry.source_dataset,
            }
        )
    return rows
