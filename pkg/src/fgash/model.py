"""Two-level electronic Hamiltonians and their adiabatic data.

Every built-in model is a real symmetric 2x2 matrix

    H(x) = m(x) I + g(x) [[cos 2th(x), sin 2th(x)], [sin 2th(x), -cos 2th(x)]]

so the adiabatic energies are ``E0 = m - g`` and ``E1 = m + g`` and the
eigenvectors are rotations by the mixing angle ``th``::

    psi0 = (-sin th, cos th),    psi1 = (cos th, sin th).

With this real gauge ``d01 = <psi0, psi1'> = th'``, ``d10 = -th'``,
``d00 = d11 = 0``, ``D01 = th''`` and ``D00 = D11 = -th'^2``. For the crossing
models the off-diagonal entry is strictly positive, so ``th`` stays in
(0, pi/2) and the gauge is smooth on the whole line; both eigenvectors then
have a positive second component.

The kernels below work on float scalars (numba) and on numpy arrays alike.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from ._backend import jit
from .errors import DegenerateGap

GAP_TOL = 1e-12
FD_STEP = 1e-5

_TWO_PI = 2.0 * np.pi
_SQRT_10LN2 = np.sqrt(10.0 * np.log(2.0))
_TWO_POW_M40 = 2.0 ** -40


class ModelKind(enum.IntEnum):
    SIMPLE_AVOIDED = 0
    DUAL_AVOIDED = 1
    EXTENDED_COUPLING = 2
    CONICAL = 3
    FIXED_GAP_LINEAR = 4
    # synthetic models used by the test-suite
    HARMONIC_DECOUPLED = 5
    CONSTANT_RATE = 6
    WEAK_AVOIDED = 7


_NAMES = {
    "simple_avoided": ModelKind.SIMPLE_AVOIDED,
    "dual_avoided": ModelKind.DUAL_AVOIDED,
    "extended_coupling": ModelKind.EXTENDED_COUPLING,
    "conical": ModelKind.CONICAL,
    "fixed_gap_linear": ModelKind.FIXED_GAP_LINEAR,
    "harmonic_decoupled": ModelKind.HARMONIC_DECOUPLED,
    "constant_rate": ModelKind.CONSTANT_RATE,
    "weak_avoided": ModelKind.WEAK_AVOIDED,
}


@dataclass(frozen=True)
class ModelPotential:
    """A model Hamiltonian selected by ``kind`` with gap parameter ``delta``.

    ``extra`` holds the constants of the synthetic models:

    * ``harmonic_decoupled``: (gap,) with E0 = x^2/2, E1 = x^2/2 + gap
    * ``constant_rate``: (gap, c) with flat surfaces +-gap/2 and th = c x
    * ``weak_avoided``: (s,) -- the simple avoided crossing with its mixing
      angle squeezed towards pi/4 by the factor s, so d01 is scaled by s
    """

    kind: ModelKind
    delta: float = 1.0
    extra: tuple = ()
    params: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if not self.delta > 0:
            raise ValueError("delta must be positive")
        object.__setattr__(self, "kind", ModelKind(self.kind))
        p = np.zeros(4)
        p[0] = self.delta
        defaults = {
            ModelKind.HARMONIC_DECOUPLED: (1.0,),
            ModelKind.CONSTANT_RATE: (0.5, 1.0),
            ModelKind.WEAK_AVOIDED: (0.1,),
        }
        extra = tuple(self.extra) or defaults.get(self.kind, ())
        object.__setattr__(self, "extra", extra)
        p[1:1 + len(extra)] = extra
        object.__setattr__(self, "params", p)

    @classmethod
    def from_name(cls, name: str, delta: float = 1.0, extra=()):
        key = name.strip().lower().replace("-", "_")
        if key not in _NAMES:
            raise ValueError(f"unknown model {name!r}; choose from {sorted(_NAMES)}")
        return cls(_NAMES[key], delta, tuple(extra))

    @property
    def name(self) -> str:
        return self.kind.name.lower()


# ---------------------------------------------------------------------------
# kernels


@jit(inline="always")
def _crossing_diabatic(kind, params, x):
    """Entries (w, b, m) of H = m I + [[w, b], [b, -w]] and two derivatives."""
    delta = params[0]
    zero = 0.0 * x
    if kind == 0:
        e = np.exp(-10.0 * x * x)
        F = 1.0 + (delta - 1.0) * e
        F1 = (delta - 1.0) * e * (-20.0 * x)
        F2 = (delta - 1.0) * e * (400.0 * x * x - 20.0)
        t = np.tanh(x)
        a = t / _TWO_PI
        a1 = (1.0 - t * t) / _TWO_PI
        a2 = -2.0 * t * (1.0 - t * t) / _TWO_PI
        w = F * a
        w1 = F1 * a + F * a1
        w2 = F2 * a + 2.0 * F1 * a1 + F * a2
        b = 0.1 * F
        b1 = 0.1 * F1
        b2 = 0.1 * F2
        return w, w1, w2, b, b1, b2, zero, zero, zero
    elif kind == 1:
        ep = np.exp(-(x - _SQRT_10LN2) ** 2)
        em = np.exp(-(x + _SQRT_10LN2) ** 2)
        F = 1.0 + _TWO_POW_M40 + (delta - 1.0) * (em + ep)
        F1 = (delta - 1.0) * (-2.0 * (x + _SQRT_10LN2) * em - 2.0 * (x - _SQRT_10LN2) * ep)
        F2 = (delta - 1.0) * ((4.0 * (x + _SQRT_10LN2) ** 2 - 2.0) * em
                              + (4.0 * (x - _SQRT_10LN2) ** 2 - 2.0) * ep)
        g = np.exp(-x * x / 10.0)
        c = 0.5 - g
        c1 = 0.2 * x * g
        c2 = g * (0.2 - 0.04 * x * x)
        # h11 = 0, h22 = F c, h12 = F / 20
        fc = F * c
        fc1 = F1 * c + F * c1
        fc2 = F2 * c + 2.0 * F1 * c1 + F * c2
        return (-0.5 * fc, -0.5 * fc1, -0.5 * fc2,
                F / 20.0, F1 / 20.0, F2 / 20.0,
                0.5 * fc, 0.5 * fc1, 0.5 * fc2)
    elif kind == 2:
        u = 100.0 * x
        F = (np.arctan(u) + 0.5 * np.pi + delta) / np.pi
        F1 = 100.0 / (np.pi * (1.0 + u * u))
        F2 = -2.0e6 * x / (np.pi * (1.0 + u * u) ** 2)
        s = 1.0 + 4.0 * x * x
        beta = (np.arctan(2.0 * x) + 0.5 * np.pi) / 10.0
        beta1 = 0.2 / s
        beta2 = -1.6 * x / (s * s)
        return (F / 20.0, F1 / 20.0, F2 / 20.0,
                F * beta, F1 * beta + F * beta1, F2 * beta + 2.0 * F1 * beta1 + F * beta2,
                zero, zero, zero)
    elif kind == 3:
        return x + zero, 1.0 + zero, zero, delta + zero, zero, zero, zero, zero, zero
    elif kind == 4:
        return x / 5.0, 0.2 + zero, zero, 0.1 + zero, zero, zero, zero, zero, zero
    elif kind == 5:
        gap = params[1]
        return (0.5 * gap + zero, zero, zero, zero, zero, zero,
                0.5 * x * x + 0.5 * gap, x, 1.0 + zero)
    raise ValueError("model kind has no diabatic closed form")


@jit(inline="always")
def _polar(w, w1, w2, b, b1, b2):
    """Half-gap g and mixing-angle derivatives from the traceless part."""
    g2 = w * w + b * b
    g = np.sqrt(g2)
    g1 = (w * w1 + b * b1) / g
    gg2 = (w1 * w1 + w * w2 + b1 * b1 + b * b2) / g - g1 * g1 / g
    num = w * b1 - b * w1
    th1 = 0.5 * num / g2
    th2 = 0.5 * (w * b2 - b * w2) / g2 - num * g1 / (g2 * g)
    return g, g1, gg2, th1, th2


@jit
def surface_data(kind, params, x):
    """(m, m', m'', g, g', g'', th') at x; enough for dynamics and hopping."""
    zero = 0.0 * x
    if kind == 6:
        return zero, zero, zero, 0.5 * params[1] + zero, zero, zero, params[2] + zero
    kk = 0 if kind == 7 else kind
    w, w1, w2, b, b1, b2, m, m1, m2 = _crossing_diabatic(kk, params, x)
    g, g1, g2, th1, th2 = _polar(w, w1, w2, b, b1, b2)
    if kind == 7:
        th1 = params[1] * th1
    return m, m1, m2, g, g1, g2, th1


@jit
def adiabatic_core(kind, params, x):
    """(m, m', m'', g, g', g'', th, th', th'') at x."""
    zero = 0.0 * x
    if kind == 6:
        c = params[2]
        return zero, zero, zero, 0.5 * params[1] + zero, zero, zero, c * x, c + zero, zero
    kk = 0 if kind == 7 else kind
    w, w1, w2, b, b1, b2, m, m1, m2 = _crossing_diabatic(kk, params, x)
    g, g1, g2, th1, th2 = _polar(w, w1, w2, b, b1, b2)
    th = 0.5 * np.arctan2(b, w)
    if kind == 7:
        s = params[1]
        th = 0.25 * np.pi + s * (th - 0.25 * np.pi)
        th1 = s * th1
        th2 = s * th2
    return m, m1, m2, g, g1, g2, th, th1, th2


@jit
def diabatic_core(kind, params, x):
    """(h11, h12, h22) and their first and second x-derivatives."""
    if kind == 6 or kind == 7:
        m, m1, m2, g, g1, g2, th, th1, th2 = adiabatic_core(kind, params, x)
        c = np.cos(2.0 * th)
        s = np.sin(2.0 * th)
        w = g * c
        w1 = g1 * c - 2.0 * g * th1 * s
        w2 = g2 * c - 4.0 * g1 * th1 * s - 2.0 * g * th2 * s - 4.0 * g * th1 * th1 * c
        b = g * s
        b1 = g1 * s + 2.0 * g * th1 * c
        b2 = g2 * s + 4.0 * g1 * th1 * c + 2.0 * g * th2 * c - 4.0 * g * th1 * th1 * s
    else:
        w, w1, w2, b, b1, b2, m, m1, m2 = _crossing_diabatic(kind, params, x)
    return (m + w, b, m - w,
            m1 + w1, b1, m1 - w1,
            m2 + w2, b2, m2 - w2)


# ---------------------------------------------------------------------------
# public operations


@dataclass
class AdiabaticData:
    x: float
    E0: float
    E1: float
    gradE0: float
    gradE1: float
    hessE0: float
    hessE1: float
    d01: float
    d10: float
    d00: float
    d11: float
    D01: float
    D10: float
    D00: float
    D11: float
    psi0: np.ndarray
    psi1: np.ndarray

    @property
    def gap(self) -> float:
        return self.E1 - self.E0


def electronic_hamiltonian(model: ModelPotential, x: float) -> np.ndarray:
    h11, h12, h22 = diabatic_core(int(model.kind), model.params, float(x))[:3]
    return np.array([[h11, h12], [h12, h22]])


def hamiltonian_derivatives(model: ModelPotential, x: float):
    """(H, H', H'') as 2x2 arrays."""
    v = diabatic_core(int(model.kind), model.params, float(x))
    return tuple(np.array([[v[3 * i], v[3 * i + 1]], [v[3 * i + 1], v[3 * i + 2]]])
                 for i in range(3))


def on_grid(kernel, model: ModelPotential, x):
    """Evaluate a model kernel on a scalar or array of positions."""
    x = np.asarray(x, dtype=float)
    flat = np.ascontiguousarray(x.reshape(-1))
    out = kernel(int(model.kind), model.params, flat)
    return tuple(np.asarray(v).reshape(x.shape) for v in out)


def gauge_vectors(model: ModelPotential, x):
    """Reference-gauge eigenvectors psi0, psi1 at x (scalar or array)."""
    th = on_grid(adiabatic_core, model, x)[6]
    c, s = np.cos(th), np.sin(th)
    return np.stack([-s, c]), np.stack([c, s])


def _eigh_aligned(model, x, anchor=None):
    E, V = np.linalg.eigh(electronic_hamiltonian(model, x))
    if E[1] - E[0] < GAP_TOL:
        raise DegenerateGap(f"adiabatic gap {E[1] - E[0]:.3e} at x={x}")
    if anchor is None:
        anchor = gauge_vectors(model, x)
    for k in range(2):
        if V[:, k] @ anchor[k] < 0:
            V[:, k] = -V[:, k]
    return E, V


def adiabatic_decompose(model: ModelPotential, x: float, gauge_anchor=None) -> AdiabaticData:
    """Eigen-decomposition of H(x) with couplings from perturbation theory.

    Eigenvector signs maximise the overlap with ``gauge_anchor`` (a pair of
    2-vectors, typically the previous evaluation along a sweep). Without an
    anchor the model's smooth reference gauge is used.
    """
    x = float(x)
    E, V = _eigh_aligned(model, x, gauge_anchor)
    psi0, psi1 = V[:, 0].copy(), V[:, 1].copy()
    _, dH, d2H = hamiltonian_derivatives(model, x)
    gap = E[1] - E[0]
    d01 = psi0 @ dH @ psi1 / gap
    dE0 = psi0 @ dH @ psi0
    dE1 = psi1 @ dH @ psi1
    # <psi0, psi1''> from differentiating H psi1 = E1 psi1 twice
    D01 = (psi0 @ d2H @ psi1 - 2.0 * (dE1 - dE0) * d01) / gap
    m, m1, m2, g, g1, g2, *_ = adiabatic_core(int(model.kind), model.params, x)
    return AdiabaticData(
        x=x, E0=E[0], E1=E[1],
        gradE0=dE0, gradE1=dE1,
        hessE0=m2 - g2, hessE1=m2 + g2,
        d01=d01, d10=-d01, d00=0.0, d11=0.0,
        D01=D01, D10=-D01, D00=-d01 * d01, D11=-d01 * d01,
        psi0=psi0, psi1=psi1,
    )


def fd_coupling_oracle(model: ModelPotential, x: float, h: float = FD_STEP) -> float:
    """Centered finite difference of psi1, projected on psi0."""
    if not h > 0:
        raise ValueError("h must be positive")
    _, V = _eigh_aligned(model, x)
    anchor = (V[:, 0], V[:, 1])
    _, Vp = _eigh_aligned(model, x + h, anchor)
    _, Vm = _eigh_aligned(model, x - h, anchor)
    return float(V[:, 0] @ (Vp[:, 1] - Vm[:, 1]) / (2.0 * h))


def sweep(model: ModelPotential, xs) -> list[AdiabaticData]:
    """Adiabatic data along an increasing grid, anchoring each point on the last."""
    out = []
    anchor = None
    for x in xs:
        data = adiabatic_decompose(model, x, anchor)
        anchor = (data.psi0, data.psi1)
        out.append(data)
    return out


def coupling_bound(model: ModelPotential, q_range, p_range, n: int = 2001) -> float:
    """max |p| * max |d01| over a box; bounds every hop rate inside it."""
    xs = np.linspace(q_range[0], q_range[1], n)
    th1 = on_grid(surface_data, model, xs)[6]
    return float(max(abs(p_range[0]), abs(p_range[1])) * np.max(np.abs(th1)))
