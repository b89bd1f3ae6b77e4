"""Linear operators and the covariance kernels they induce on a squared-exponential prior.

For a GP prior ``u ~ GP(0, g)`` and a linear operator ``L``, the forcing
``f = L u`` has covariance ``L_x L_x' g`` and cross-covariance ``L_x' g``
with ``u``. For the constant-coefficient operators in the catalog these are
finite sums of products, over input dimensions, of one-dimensional Gaussian
derivatives ``d^m/dr^m exp(-w r^2 / 2)``. Integral operators add the first
and second antiderivatives (``m = -1, -2``), expressed through ``erf``.
The operator algebra is done once symbolically per operator and cached.

Hyperparameter gradients use the heat-equation identity

    d h_m / d log w = -h_{m+2} / (2 w) - h_m / 2,

which holds for every order in the family (including the antiderivatives
with the constants chosen below), so every gradient is again a closed form.

The fractional operator ``D^alpha - I`` (Riemann-Liouville from -inf) is
handled in the frequency domain with Gauss-Jacobi quadrature.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from functools import lru_cache
from itertools import product

import numpy as np
from numpy.polynomial.hermite_e import hermeval
from scipy.special import erf, roots_jacobi

from .kernels import KernelParams

VARIANTS = (
    "identity",
    "first_derivative",
    "integro_differential",
    "laplacian",
    "advection_diffusion_reaction",
    "fractional",
)

# which pair of processes a covariance block relates:
#   uu: g(x, x')        uf: L_x' g(x, x')
#   fu: L_x g(x, x')    ff: L_x L_x' g(x, x')
KINDS = ("uu", "uf", "fu", "ff")


class QuadratureWarning(RuntimeWarning):
    """Spectral quadrature did not reach the self-refinement tolerance."""


@dataclass(frozen=True)
class QuadratureSpec:
    """Gauss-Jacobi rule for the fractional spectral integral.

    ``frequency_cutoff`` truncates the integral at ``|omega| = cutoff * sqrt(w)``,
    i.e. it is measured in units of the kernel's inverse length scale.
    """

    node_count: int = 200
    frequency_cutoff: float = 10.0

    def __post_init__(self):
        if int(self.node_count) != self.node_count or self.node_count < 16:
            raise ValueError(f"node_count must be an integer >= 16, got {self.node_count}")
        if not self.frequency_cutoff > 0 or not math.isfinite(self.frequency_cutoff):
            raise ValueError(f"frequency_cutoff must be positive, got {self.frequency_cutoff}")

    def refined(self) -> "QuadratureSpec":
        return QuadratureSpec(2 * self.node_count, 2 * self.frequency_cutoff)


@dataclass(frozen=True)
class LinearOperatorSpec:
    """Tagged description of a linear operator from the catalog.

    Use the factory functions (:func:`identity`, :func:`laplacian`, ...)
    rather than building this directly.
    """

    variant: str
    dim: int = 1
    lower_bound: float = 0.0
    alpha: float | None = None
    quadrature: QuadratureSpec = field(default_factory=QuadratureSpec)

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown operator variant {self.variant!r}; expected one of {VARIANTS}")
        if int(self.dim) != self.dim or self.dim < 1:
            raise ValueError(f"operator dimension must be a positive integer, got {self.dim}")
        if not math.isfinite(self.lower_bound):
            raise ValueError("lower_bound must be finite")
        fixed = {"first_derivative": 1, "integro_differential": 1,
                 "advection_diffusion_reaction": 2, "fractional": 1}
        if self.variant in fixed and self.dim != fixed[self.variant]:
            raise ValueError(f"{self.variant} requires dim={fixed[self.variant]}, got {self.dim}")
        if self.variant == "fractional":
            if self.alpha is None or not math.isfinite(self.alpha) or not 0 < self.alpha < 2:
                raise ValueError(f"fractional order alpha must lie in the open interval (0, 2), got {self.alpha}")

    def to_dict(self) -> dict:
        d = {"variant": self.variant, "dim": self.dim}
        if self.variant == "integro_differential":
            d["lower_bound"] = self.lower_bound
        if self.variant == "fractional":
            d["alpha"] = self.alpha
            d["quadrature"] = {"node_count": self.quadrature.node_count,
                               "frequency_cutoff": self.quadrature.frequency_cutoff}
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "LinearOperatorSpec":
        d = dict(d)
        quad = d.pop("quadrature", None)
        if quad is not None:
            d["quadrature"] = QuadratureSpec(**quad)
        return cls(**d)


def identity(dim: int = 1) -> LinearOperatorSpec:
    return LinearOperatorSpec("identity", dim)


def first_derivative() -> LinearOperatorSpec:
    return LinearOperatorSpec("first_derivative", 1)


def integro_differential(lower_bound: float = 0.0) -> LinearOperatorSpec:
    """``u'(x) + int_{lower_bound}^x u``."""
    return LinearOperatorSpec("integro_differential", 1, lower_bound=lower_bound)


def laplacian(dim: int) -> LinearOperatorSpec:
    return LinearOperatorSpec("laplacian", dim)


def advection_diffusion_reaction() -> LinearOperatorSpec:
    """``u_t + u_x - u_xx - u`` on inputs ordered ``(t, x)``."""
    return LinearOperatorSpec("advection_diffusion_reaction", 2)


def fractional(alpha: float, quadrature: QuadratureSpec | None = None) -> LinearOperatorSpec:
    """``D^alpha u - u`` with the Riemann-Liouville derivative from -inf."""
    return LinearOperatorSpec("fractional", 1, alpha=alpha, quadrature=quadrature or QuadratureSpec())


# ---------------------------------------------------------------------------
# symbolic algebra for the closed-form variants
# ---------------------------------------------------------------------------

_INT = "int"  # per-dimension action: integrate from the operator's lower bound


def _monomials(op: LinearOperatorSpec):
    """Operator as ``[(coef, per-dimension action)]``; an action is a derivative order or ``_INT``."""
    D = op.dim

    def unit(d, action):
        a = [0] * D
        a[d] = action
        return tuple(a)

    if op.variant == "identity":
        return [(1.0, (0,) * D)]
    if op.variant == "first_derivative":
        return [(1.0, (1,))]
    if op.variant == "integro_differential":
        return [(1.0, (1,)), (1.0, (_INT,))]
    if op.variant == "laplacian":
        return [(1.0, unit(d, 2)) for d in range(D)]
    if op.variant == "advection_diffusion_reaction":
        return [(1.0, unit(0, 1)), (1.0, unit(1, 1)), (-1.0, unit(1, 2)), (-1.0, (0, 0))]
    raise ValueError(f"operator {op.variant!r} has no closed-form kernel")


# A term is (coef, dims) with dims[d] = (order, p, q): the d-th factor is
# h_order(p - q), where p is x_d (None) or a fixed bound and q is x'_d (None)
# or a fixed bound.


def _act(entry, action, side, bound):
    m, p, q = entry
    if side == "right":
        if action == _INT:
            if q is not None:
                raise NotImplementedError("repeated integration on one argument")
            # int_a^{x'} phi(p - eta) d eta = Phi(p - a) - Phi(p - x')
            return [(1.0, (m - 1, p, bound)), (-1.0, (m - 1, p, None))]
        if action == 0:
            return [(1.0, entry)]
        if q is not None:
            return []
        return [((-1.0) ** action, (m + action, p, q))]
    if action == _INT:
        if p is not None:
            raise NotImplementedError("repeated integration on one argument")
        # int_a^x phi(xi - q) d xi = Phi(x - q) - Phi(a - q)
        return [(1.0, (m - 1, None, q)), (-1.0, (m - 1, bound, q))]
    if action == 0:
        return [(1.0, entry)]
    if p is not None:
        return []
    return [(1.0, (m + action, p, q))]


def _apply(terms, op, side):
    out: dict = {}
    for coef, dims in terms:
        for mono_coef, actions in _monomials(op):
            choices = [_act(e, a, side, op.lower_bound) for e, a in zip(dims, actions)]
            for combo in product(*choices):
                c = coef * mono_coef * math.prod(cc for cc, _ in combo)
                key = tuple(e for _, e in combo)
                out[key] = out.get(key, 0.0) + c
    return [(c, k) for k, c in out.items() if c != 0.0]


@lru_cache(maxsize=None)
def _terms(op: LinearOperatorSpec, kind: str):
    terms = [(1.0, ((0, None, None),) * op.dim)]
    if kind in ("uf", "ff"):
        terms = _apply(terms, op, "right")
    if kind in ("fu", "ff"):
        terms = _apply(terms, op, "left")
    return tuple(terms)


@lru_cache(maxsize=None)
def _shifted_terms(op: LinearOperatorSpec, kind: str, d: int):
    out = []
    for c, dims in _terms(op, kind):
        m, p, q = dims[d]
        out.append((c, dims[:d] + ((m + 2, p, q),) + dims[d + 1:]))
    return tuple(out)


def gaussian_derivative(m: int, r, w: float):
    """``d^m/dr^m exp(-w r^2/2)``; ``m = -1, -2`` are the antiderivatives vanishing suitably at 0.

    ``m = -1`` is ``int_0^r``; ``m = -2`` is ``int_0^r`` of it plus ``1/w``,
    the constant that keeps the log-weight heat identity exact.
    """
    r = np.asarray(r, dtype=float)
    if m >= 0:
        sw = math.sqrt(w)
        coeffs = np.zeros(m + 1)
        coeffs[m] = 1.0
        return (-sw) ** m * hermeval(sw * r, coeffs) * np.exp(-0.5 * w * r * r)
    c = math.sqrt(0.5 * w)
    scale = math.sqrt(math.pi / (2.0 * w))
    if m == -1:
        return scale * erf(c * r)
    if m == -2:
        return r * scale * erf(c * r) + np.exp(-0.5 * w * r * r) / w
    raise ValueError(f"unsupported Gaussian derivative order {m}")


class _PairEvaluator:
    """Evaluates term lists on all pairs of two point sets, sharing per-dimension work."""

    def __init__(self, X, Xp, weights, paired=False):
        self.w = weights
        if paired:
            # row i of X against row i of Xp only, laid out as an (n, 1) block
            self.left, self.right = X[:, None, :], Xp[:, None, :]
        else:
            self.left, self.right = X[:, None, :], Xp[None, :, :]
        diff = self.left - self.right
        self.diff = diff
        self.quad = 0.5 * diff * diff * weights
        self.total = self.quad.sum(axis=-1)
        self._factors: dict = {}
        self._trivial: dict = {}

    def _factor(self, d, entry):
        """``h_m`` for this dimension; for a plain lag the Gaussian is divided out."""
        if entry not in self._factors.setdefault(d, {}):
            m, p, q = entry
            if p is None and q is None and m >= 0:
                sw = math.sqrt(self.w[d])
                coeffs = np.zeros(m + 1)
                coeffs[m] = 1.0
                f = (-sw) ** m * hermeval(sw * self.diff[:, :, d], coeffs)
            else:
                left = self.left[:, :, d] if p is None else p
                right = self.right[:, :, d] if q is None else q
                r = np.broadcast_to(np.asarray(left - right, dtype=float), self.total.shape)
                f = gaussian_derivative(m, r, self.w[d])
            self._factors[d][entry] = f
        return self._factors[d][entry]

    def _gaussian_part(self, anchored):
        """Product of the plain-lag Gaussians over all dimensions not in ``anchored``."""
        if anchored not in self._trivial:
            if anchored:
                self._trivial[anchored] = np.exp(-(self.total - self.quad[:, :, list(anchored)].sum(axis=-1)))
            else:
                self._trivial[anchored] = np.exp(-self.total)
        return self._trivial[anchored]

    def evaluate(self, terms):
        out = np.zeros_like(self.total)
        groups: dict = {}
        for coef, dims in terms:
            anchored = tuple(d for d, (m, p, q) in enumerate(dims) if p is not None or q is not None or m < 0)
            val = None
            for d, e in enumerate(dims):
                if e != (0, None, None):
                    f = self._factor(d, e)
                    val = f if val is None else val * f
            part = groups.get(anchored)
            if val is None:
                groups[anchored] = coef if part is None else part + coef
            else:
                val = coef * val
                groups[anchored] = val if part is None else part + val
        for anchored, part in groups.items():
            out += part * self._gaussian_part(anchored)
        return out


def _as_points(X, dim):
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X.reshape(-1, dim) if dim > 1 else X.reshape(-1, 1)
    if X.ndim != 2 or X.shape[1] != dim:
        raise ValueError(f"expected points with {dim} columns, got shape {X.shape}")
    return X


def kernel_matrix(op: LinearOperatorSpec, params: KernelParams, X, Xp, kind: str = "ff") -> np.ndarray:
    """Covariance block of the given ``kind`` between row-stacked point sets."""
    return kernel_matrix_and_grads(op, params, X, Xp, kind, grads=False)[0]


def kernel_matrix_and_grads(op: LinearOperatorSpec, params: KernelParams, X, Xp,
                            kind: str = "ff", grads: bool = True):
    """Block value and, optionally, its derivatives w.r.t. ``params.to_log()``.

    Returns ``(value, grads)`` where ``grads`` has shape ``(D + 1, n, m)``
    (or is ``None``).
    """
    if kind not in KINDS:
        raise ValueError(f"unknown covariance kind {kind!r}")
    if params.dim != op.dim:
        raise ValueError(f"kernel dimension {params.dim} does not match operator dimension {op.dim}")
    X = _as_points(X, op.dim)
    Xp = _as_points(Xp, op.dim)
    if op.variant == "fractional":
        return _fractional_block(op.alpha, params, X, Xp, kind, op.quadrature, grads)
    if op.variant == "laplacian" and op.dim > 1:
        return _laplacian_block(params, X, Xp, kind, grads)
    return _generic_block(op, params, X, Xp, kind, grads)


def _generic_block(op, params, X, Xp, kind, grads):
    w = params.weights
    ev = _PairEvaluator(X, Xp, w)
    value = params.variance * ev.evaluate(_terms(op, kind))
    if not grads:
        return value, None
    g = np.empty((op.dim + 1,) + value.shape)
    g[0] = value
    for d in range(op.dim):
        shifted = params.variance * ev.evaluate(_shifted_terms(op, kind, d))
        g[d + 1] = -shifted / (2.0 * w[d]) - 0.5 * value
    return value, g


def _laplacian_block(params, X, Xp, kind, grads):
    """Separable form of the Laplacian kernels.

    With ``a_d, b_d, c_d`` the 2nd, 4th and 6th lag derivatives of the
    per-dimension Gaussian (divided by it) and ``S = sum a_d``:
    ``ff = G (S^2 - sum a_d^2 + sum b_d)``, ``uf = fu = G S``, ``uu = G``.
    The log-weight gradients use the same heat identity as the term algebra.
    """
    w = params.weights
    diff = np.moveaxis(X[:, None, :] - Xp[None, :, :], -1, 0)  # (D, n, m)
    wb = w[:, None, None]
    z2 = wb * diff * diff
    G = params.variance * np.exp(-0.5 * z2.sum(axis=0))
    a = wb * (z2 - 1.0)
    if kind == "uu":
        value = G
        shifted = a * G if grads else None
    elif kind in ("uf", "fu"):
        S = a.sum(axis=0)
        value = G * S
        if grads:
            b = wb * wb * (z2 * z2 - 6.0 * z2 + 3.0)
            shifted = G * (a * (S - a) + b)
    else:
        S = a.sum(axis=0)
        b = wb * wb * (z2 * z2 - 6.0 * z2 + 3.0)
        Q = (a * a).sum(axis=0)
        B = b.sum(axis=0)
        value = G * (S * S - Q + B)
        if grads:
            c = wb ** 3 * (z2 ** 3 - 15.0 * z2 * z2 + 45.0 * z2 - 15.0)
            S_e = S - a
            shifted = G * (a * (S_e * S_e - (Q - a * a) + B - b) + 2.0 * b * S_e + c)
    if not grads:
        return value, None
    g = np.empty((len(w) + 1,) + value.shape)
    g[0] = value
    g[1:] = -shifted / (2.0 * wb) - 0.5 * value
    return value, g


def kernel_diag(op: LinearOperatorSpec, params: KernelParams, X, kind: str = "ff") -> np.ndarray:
    """``k(X[i], X[i])`` for each row, without forming the full matrix."""
    if kind not in KINDS:
        raise ValueError(f"unknown covariance kind {kind!r}")
    X = _as_points(X, op.dim)
    if op.variant == "fractional":
        # stationary: every diagonal entry equals the value at zero lag
        if len(X) == 0:
            return np.empty(0)
        v = _fractional_complex(op.alpha, params, X[:1], X[:1], kind, op.quadrature, False)[0].real
        return np.full(len(X), v[0, 0])
    ev = _PairEvaluator(X, X, params.weights, paired=True)
    return params.variance * ev.evaluate(_terms(op, kind))[:, 0]


def _point(x, dim):
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if x.shape != (dim,):
        raise ValueError(f"expected a {dim}-vector, got shape {x.shape}")
    return x.reshape(1, dim)


def op_kernel_ff(op: LinearOperatorSpec, params: KernelParams, x, x_prime) -> float:
    """Forcing-forcing covariance ``L_x L_x' g(x, x')``."""
    return float(kernel_matrix(op, params, _point(x, op.dim), _point(x_prime, op.dim), "ff")[0, 0])


def op_kernel_uf(op: LinearOperatorSpec, params: KernelParams, x_u, x_f) -> float:
    """Solution-forcing covariance ``L_x' g(x_u, x_f)``; the operator acts on ``x_f``."""
    return float(kernel_matrix(op, params, _point(x_u, op.dim), _point(x_f, op.dim), "uf")[0, 0])


# ---------------------------------------------------------------------------
# fractional operator, frequency domain
# ---------------------------------------------------------------------------


@lru_cache(maxsize=64)
def _jacobi_rule(power: float, n: int, cutoff: float):
    """Nodes/weights for ``int_0^cutoff s^power F(s) ds``."""
    t, lam = roots_jacobi(n, 0.0, power)
    s = 0.5 * cutoff * (1.0 + t)
    lam = lam * (0.5 * cutoff) ** (power + 1.0)
    s.setflags(write=False)
    lam.setflags(write=False)
    return s, lam


def _spectral_multipliers(alpha: float, kind: str):
    """``{power: (coef for s > 0, coef for s < 0)}`` of the symbol in ``|omega|^power``.

    With ``g(r) = int S(omega) exp(i omega r)``, ``L_x`` multiplies by
    ``(i omega)^alpha - 1`` and ``L_x'`` by ``(-i omega)^alpha - 1``, principal branch.
    """
    half = 0.5 * alpha * math.pi
    plus, minus = complex(math.cos(half), math.sin(half)), complex(math.cos(half), -math.sin(half))
    if kind == "uu":
        table = [(0.0, 1.0, 1.0)]
    elif kind == "ff":
        c = -2.0 * math.cos(half)
        table = [(2 * alpha, 1.0, 1.0), (alpha, c, c), (0.0, 1.0, 1.0)]
    elif kind == "uf":
        table = [(alpha, minus, plus), (0.0, -1.0, -1.0)]
    else:
        table = [(alpha, plus, minus), (0.0, -1.0, -1.0)]
    out: dict = {}
    for p, cp, cn in table:
        a, b = out.get(p, (0.0, 0.0))
        out[p] = (a + cp, b + cn)
    return out


def _fractional_complex(alpha, params: KernelParams, X, Xp, kind, quad: QuadratureSpec, grads):
    w = params.weights[0]
    sw = math.sqrt(w)
    r = X[:, 0][:, None] - Xp[:, 0][None, :]
    value = np.zeros(r.shape, dtype=complex)
    dlogw = np.zeros(r.shape, dtype=complex) if grads else None
    for power, (cp, cn) in _spectral_multipliers(alpha, kind).items():
        if cp == 0 and cn == 0:
            continue
        s, lam = _jacobi_rule(power, quad.node_count, float(quad.frequency_cutoff))
        base = lam * np.exp(-0.5 * s * s) * w ** (0.5 * power)
        arg = sw * r[:, :, None] * s
        phase = np.exp(1j * arg)
        pos = phase @ (base * cp)
        neg = np.conj(phase) @ (base * cn)
        value += pos + neg
        if grads:
            half_arg = 0.5j * arg
            dlogw += 0.5 * power * (pos + neg)
            dlogw += (phase * half_arg) @ (base * cp) + (np.conj(phase) * -half_arg) @ (base * cn)
    scale = params.variance / math.sqrt(2.0 * math.pi)
    value *= scale
    if grads:
        dlogw *= scale
    return value, dlogw


def _fractional_block(alpha, params, X, Xp, kind, quad, grads):
    if params.dim != 1:
        raise ValueError("the fractional operator is one-dimensional")
    value, dlogw = _fractional_complex(alpha, params, X, Xp, kind, quad, grads)
    if not grads:
        return value.real, None
    return value.real, np.stack([value.real, dlogw.real])


def _check_alpha(alpha):
    # alpha = 0 is admitted here (the kernel vanishes) so the degenerate case stays testable
    if not math.isfinite(alpha) or not 0 <= alpha < 2:
        raise ValueError(f"fractional order alpha must lie in (0, 2), got {alpha}")


def fractional_kernel_complex(alpha, params, x, x_prime, quad=QuadratureSpec(), kind="ff") -> complex:
    """Raw complex quadrature sum behind the fractional kernels (imaginary part is round-off)."""
    _check_alpha(alpha)
    value, _ = _fractional_complex(alpha, params, _point(x, 1), _point(x_prime, 1), kind, quad, False)
    return complex(value[0, 0])


def fractional_kernel_ff(alpha: float, params: KernelParams, x, x_prime,
                         quad: QuadratureSpec = QuadratureSpec()) -> float:
    """Forcing-forcing kernel for ``D^alpha - I``."""
    return fractional_kernel_complex(alpha, params, x, x_prime, quad, "ff").real


def fractional_kernel_uf(alpha: float, params: KernelParams, x_u, x_f,
                         quad: QuadratureSpec = QuadratureSpec()) -> float:
    """Solution-forcing kernel for ``D^alpha - I`` acting on ``x_f``."""
    return fractional_kernel_complex(alpha, params, x_u, x_f, quad, "uf").real


def fractional_refinement_change(alpha, params, X, Xp=None, quad=QuadratureSpec(), kinds=("ff", "uf")) -> float:
    """Largest relative change when both node count and cutoff are doubled."""
    X = _as_points(X, 1)
    Xp = X if Xp is None else _as_points(Xp, 1)
    worst = 0.0
    for kind in kinds:
        a = _fractional_complex(alpha, params, X, Xp, kind, quad, False)[0].real
        b = _fractional_complex(alpha, params, X, Xp, kind, quad.refined(), False)[0].real
        scale = max(np.max(np.abs(b)), 1e-300)
        worst = max(worst, float(np.max(np.abs(a - b)) / scale))
    return worst


def check_quadrature(op: LinearOperatorSpec, params: KernelParams, X, tol: float = 1e-6) -> str | None:
    """Warn and return a message if the fractional quadrature is not converged on ``X``."""
    if op.variant != "fractional":
        return None
    change = fractional_refinement_change(op.alpha, params, X, quad=op.quadrature)
    if change > tol:
        msg = (f"fractional quadrature not converged: relative change {change:.3e} "
               f"> {tol:g} on refinement (node_count={op.quadrature.node_count}, "
               f"cutoff={op.quadrature.frequency_cutoff})")
        warnings.warn(msg, QuadratureWarning, stacklevel=2)
        return msg
    return None


def fractional_apply_fourier(alpha: float, modes, x):
    """Apply ``D^alpha - I`` to ``sum_k c_k exp(i omega_k x)`` given as ``[(omega_k, c_k)]``."""
    x = np.asarray(x, dtype=float)
    out = np.zeros(x.shape, dtype=complex)
    for omega, c in modes:
        out += c * ((1j * omega) ** alpha - 1.0) * np.exp(1j * omega * x)
    return out


# ---------------------------------------------------------------------------
# numeric oracle: finite differences and Gauss-Legendre applied to se_eval
# ---------------------------------------------------------------------------

ORACLE_STEP = 1e-4  # in units of the per-dimension length scale 1/sqrt(w_d)
ORACLE_NODES = 64
ORACLE_DIGITS = 30  # working precision; keeps nested stencils free of round-off


def _oracle_ops(op: LinearOperatorSpec, params: KernelParams):
    import mpmath as mp

    steps = [mp.mpf(ORACLE_STEP) / mp.sqrt(mp.mpf(w)) for w in params.ard_weights]
    t, wts = np.polynomial.legendre.leggauss(ORACLE_NODES)
    a = mp.mpf(op.lower_bound)

    def shifted(z, d, delta):
        z = list(z)
        z[d] = z[d] + delta
        return z

    def d1(h, z, d):
        s = steps[d]
        return (-h(shifted(z, d, 2 * s)) + 8 * h(shifted(z, d, s))
                - 8 * h(shifted(z, d, -s)) + h(shifted(z, d, -2 * s))) / (12 * s)

    def d2(h, z, d):
        s = steps[d]
        return (-h(shifted(z, d, 2 * s)) + 16 * h(shifted(z, d, s)) - 30 * h(z)
                + 16 * h(shifted(z, d, -s)) - h(shifted(z, d, -2 * s))) / (12 * s * s)

    def integral(h, z, d):
        lo, hi = a, z[d]
        half = (hi - lo) / 2
        mid = (hi + lo) / 2
        return half * mp.fsum(mp.mpf(wi) * h(shifted(z, d, mid + half * mp.mpf(ti) - z[d]))
                              for ti, wi in zip(t, wts))

    v = op.variant
    if v == "identity":
        return lambda h, z: h(z)
    if v == "first_derivative":
        return lambda h, z: d1(h, z, 0)
    if v == "integro_differential":
        return lambda h, z: d1(h, z, 0) + integral(h, z, 0)
    if v == "laplacian":
        return lambda h, z: mp.fsum(d2(h, z, d) for d in range(op.dim))
    if v == "advection_diffusion_reaction":
        return lambda h, z: d1(h, z, 0) + d1(h, z, 1) - d2(h, z, 1) - h(z)
    raise ValueError(f"no numeric oracle for operator {v!r}")


def op_kernel_numeric_oracle(op: LinearOperatorSpec, params: KernelParams, x, x_prime,
                             side: str = "both") -> float:
    """Apply the operator numerically to :func:`se_eval` on the ``left``, ``right`` or ``both`` arguments.

    Derivatives use 4th-order central stencils with step ``ORACLE_STEP / sqrt(w_d)``,
    integrals use ``ORACLE_NODES``-point Gauss-Legendre; arithmetic is carried
    out at ``ORACLE_DIGITS`` significant digits.
    """
    import mpmath as mp

    if side not in ("left", "right", "both"):
        raise ValueError(f"side must be left, right or both, got {side!r}")
    if op.variant == "fractional":
        raise ValueError("the numeric oracle does not cover the fractional operator")
    x = _point(x, op.dim)[0]
    x_prime = _point(x_prime, op.dim)[0]
    if params.dim != op.dim:
        raise ValueError("kernel and operator dimensions differ")
    with mp.workdps(ORACLE_DIGITS):
        apply = _oracle_ops(op, params)
        var = mp.mpf(params.variance)
        w = [mp.mpf(v) for v in params.ard_weights]

        def g(z, zp):
            return var * mp.exp(-mp.fsum(wd * (a - b) ** 2 for wd, a, b in zip(w, z, zp)) / 2)

        xm = [mp.mpf(float(v)) for v in x]
        xpm = [mp.mpf(float(v)) for v in x_prime]
        if side == "right":
            val = apply(lambda zp: g(xm, zp), xpm)
        elif side == "left":
            val = apply(lambda z: g(z, xpm), xm)
        else:
            val = apply(lambda z: apply(lambda zp: g(z, zp), xpm), xm)
        return float(val)

