"""Covariance kernels: Matern / exponential / Gaussian families plus an
h-adaptive cubic Hermite spline accelerator for bulk evaluation.

All families are unit variance, phi(0) = 1.  The Matern family is

    phi(r) = 2^(1-nu)/Gamma(nu) * (sqrt(2 nu) r / rho)^nu * K_nu(sqrt(2 nu) r / rho)

which reduces to exp(-r/rho) at nu = 1/2.  The 'white' family (identity
covariance) is a test hook used by the sampling harness.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from ._jit import njit
from .bessel import kv

_FAMILIES = ("matern", "exponential", "gaussian", "white")
_CODE = {"matern": 0, "exponential": 1, "gaussian": 2, "white": 3}


@njit(cache=True)
def _phi_scalar(code, nu, rho, r):
    if r < 0.0:
        return math.nan
    if code == 3:  # white
        return 1.0 if r == 0.0 else 0.0
    if r == 0.0:
        return 1.0
    if code == 1:  # exponential
        return math.exp(-r / rho)
    if code == 2:  # gaussian
        u = r / rho
        return math.exp(-u * u)
    # matern
    u = math.sqrt(2.0 * nu) * r / rho
    if nu == 0.5:
        return math.exp(-u)
    if nu == 1.5:
        return (1.0 + u) * math.exp(-u)
    if nu == 2.5:
        return (1.0 + u + u * u / 3.0) * math.exp(-u)
    if u > 700.0:
        return 0.0
    return math.pow(2.0, 1.0 - nu) / math.gamma(nu) * math.pow(u, nu) * kv(nu, u)


@njit(cache=True)
def _phi_arr(code, nu, rho, r, out):
    for i in range(r.size):
        out[i] = _phi_scalar(code, nu, rho, r[i])
    return out


@njit(cache=True)
def _dphi_scalar(code, nu, rho, r):
    # d phi / d r, for r > 0
    if code == 1:
        return -math.exp(-r / rho) / rho
    if code == 2:
        u = r / rho
        return -2.0 * u / rho * math.exp(-u * u)
    if code == 3:
        return 0.0
    c = math.sqrt(2.0 * nu) / rho
    u = c * r
    if u > 700.0:
        return 0.0
    # d/du [u^nu K_nu(u)] = -u^nu K_{nu-1}(u)
    return -math.pow(2.0, 1.0 - nu) / math.gamma(nu) * math.pow(u, nu) * kv(abs(nu - 1.0), u) * c


@njit(cache=True)
def _dphi_arr(code, nu, rho, r, out):
    for i in range(r.size):
        out[i] = _dphi_scalar(code, nu, rho, r[i])
    return out


class KernelModel:
    """Immutable covariance model (family, theta); thread-safe to evaluate."""

    def __init__(self, family, nu=None, rho=None):
        if family not in _FAMILIES:
            raise ValueError(f"unknown kernel family {family!r}; choose from {_FAMILIES}")
        if family == "matern":
            if nu is None or rho is None:
                raise ValueError("matern kernel needs nu and rho")
            if not (np.isfinite(nu) and nu > 0.0):
                raise ValueError(f"matern smoothness nu must be positive, got {nu}")
        elif family in ("exponential", "gaussian"):
            if rho is None:
                raise ValueError(f"{family} kernel needs rho")
        if family != "white" and not (np.isfinite(rho) and rho > 0.0):
            raise ValueError(f"range rho must be positive, got {rho}")
        self.family = family
        self.nu = float(nu) if nu is not None else None
        self.rho = float(rho) if rho is not None else 1.0
        self._code = _CODE[family]
        self._spline = None

    @property
    def theta(self):
        if self.family == "matern":
            return (self.nu, self.rho)
        return (self.rho,)

    @property
    def variance_at_zero(self):
        return 1.0

    def with_theta(self, theta):
        """New model of the same family with replaced parameters."""
        if self.family == "matern":
            return KernelModel("matern", nu=theta[0], rho=theta[1])
        return KernelModel(self.family, rho=theta[0])

    def __repr__(self):
        if self.family == "matern":
            return f"KernelModel(matern, nu={self.nu}, rho={self.rho})"
        return f"KernelModel({self.family}, rho={self.rho})"

    # -- evaluation ----------------------------------------------------

    def phi(self, r):
        """Exact kernel value at scalar distance r >= 0."""
        if not np.isfinite(r) or r < 0.0:
            raise ValueError(f"distance must be finite and nonnegative, got {r}")
        return _phi_scalar(self._code, self.nu or 0.0, self.rho, float(r))

    def phi_vec(self, r):
        """Exact kernel values over an array of distances."""
        r = np.ascontiguousarray(r, dtype=np.float64)
        out = np.empty_like(r)
        _phi_arr(self._code, self.nu or 0.0, self.rho, r.ravel(), out.ravel())
        return out

    def dphi_vec(self, r):
        """d phi / d r over an array of positive distances."""
        r = np.ascontiguousarray(r, dtype=np.float64)
        out = np.empty_like(r)
        _dphi_arr(self._code, self.nu or 0.0, self.rho, r.ravel(), out.ravel())
        return out

    def enable_spline(self, tol=5e-9, r_max=2.5):
        """Attach a spline accelerator used by eval_table / cov_matrix."""
        self._spline = build_spline(self, tol=tol, r_max=r_max)
        return self._spline

    @property
    def spline(self):
        return self._spline

    def eval_table(self, r):
        """Bulk kernel values; spline-accelerated when enabled."""
        if self._spline is not None:
            return self._spline(r)
        return self.phi_vec(r)

    def cov_matrix(self, x, y=None, exact=False):
        """Dense kernel matrix phi(||x_i - y_j||) (y defaults to x)."""
        x = np.asarray(x, dtype=np.float64)
        y = x if y is None else np.asarray(y, dtype=np.float64)
        d2 = np.maximum(
            (x * x).sum(1)[:, None] + (y * y).sum(1)[None, :] - 2.0 * (x @ y.T), 0.0
        )
        r = np.sqrt(d2, out=d2)
        if exact or self._spline is None:
            return self.phi_vec(r)
        return self._spline(r)


def cross_covariance(model, locations, s0):
    """Vector c with c[i] = phi(||s_i - s0||)."""
    s0 = np.asarray(s0, dtype=np.float64)
    if not np.all(np.isfinite(s0)):
        raise ValueError("target point must be finite")
    r = np.sqrt(((np.asarray(locations) - s0[None, :]) ** 2).sum(axis=1))
    return model.phi_vec(r)


def parse_kernel(text):
    """Parse CLI kernel specs like 'matern:0.75,0.1667' or 'exponential:1.0'."""
    name, _, rest = text.partition(":")
    name = name.strip().lower()
    vals = [float(v) for v in rest.split(",") if v.strip()] if rest else []
    if name == "matern":
        if len(vals) != 2:
            raise ValueError("matern spec is matern:<nu>,<rho>")
        return KernelModel("matern", nu=vals[0], rho=vals[1])
    if name in ("exponential", "gaussian"):
        if len(vals) != 1:
            raise ValueError(f"{name} spec is {name}:<rho>")
        return KernelModel(name, rho=vals[0])
    if name == "white":
        return KernelModel("white")
    raise ValueError(f"cannot parse kernel spec {text!r}")


def kernel_from_config(cfg):
    """Kernel from a config mapping {family, nu?, rho?}."""
    return KernelModel(cfg["family"], nu=cfg.get("nu"), rho=cfg.get("rho"))


# ---------------------------------------------------------------------------
# h-adaptive cubic Hermite spline
# ---------------------------------------------------------------------------


class SplineBuildError(RuntimeError):
    pass


@dataclass(frozen=True)
class SplineInterpolant:
    """Cubic Hermite interpolant of a kernel on [r_min, r_max].

    Outside the mesh (r = 0, r < r_min, r > r_max) evaluation falls back
    to the exact kernel, so the interpolant never extrapolates.
    """

    x: np.ndarray
    y: np.ndarray
    d: np.ndarray
    tol: float
    r_max: float
    r_min: float
    exact: object = field(repr=False, default=None)

    @property
    def n_nodes(self):
        return self.x.size

    def __call__(self, r):
        r = np.asarray(r, dtype=np.float64)
        scalar = r.ndim == 0
        r = np.atleast_1d(r)
        out = np.empty_like(r)
        inside = (r >= self.r_min) & (r <= self.r_max)
        if not np.all(inside):
            out[~inside] = self.exact(r[~inside])
        ri = r[inside]
        k = np.searchsorted(self.x, ri, side="right") - 1
        np.clip(k, 0, self.x.size - 2, out=k)
        x0 = self.x[k]
        h = self.x[k + 1] - x0
        t = (ri - x0) / h
        t2 = t * t
        t3 = t2 * t
        out[inside] = (
            (2.0 * t3 - 3.0 * t2 + 1.0) * self.y[k]
            + (t3 - 2.0 * t2 + t) * h * self.d[k]
            + (-2.0 * t3 + 3.0 * t2) * self.y[k + 1]
            + (t3 - t2) * h * self.d[k + 1]
        )
        return out[0] if scalar else out

    def max_error(self, n_samples=1_000_000, rng=None):
        """Max |spline - exact| over a dense scan of (0, r_max]."""
        r = np.linspace(0.0, self.r_max, n_samples + 1)[1:]
        return float(np.max(np.abs(self(r) - self.exact(r))))


def _phi4_sup(fun, a, b, n_samples=9):
    """Sampled sup of |f''''| on [a, b] by 5-point central differences.

    Samples whose stencil would cross r = 0 are shifted right; kernels
    singular at the origin blow up fast enough that the shifted samples
    still trip the bound and force refinement.
    """
    h = (b - a) / 16.0
    lo = max(a, 2.05 * h)
    xs = np.linspace(lo, b, n_samples)
    stencil = fun(xs - 2 * h) - 4 * fun(xs - h) + 6 * fun(xs) - 4 * fun(xs + h) + fun(xs + 2 * h)
    return float(np.max(np.abs(stencil))) / h**4


def build_hermite_spline(fun, dfun, tol, r_max, r_min=None, node_cap=2000):
    """h-adaptive mesh such that h^4/384 * sup|f''''| < tol per element."""
    if tol <= 0.0:
        raise ValueError("tol must be positive")
    if r_min is None:
        r_min = r_max * 1e-6
    # Seed the mesh from the node density the bound implies,
    # rho(r) = (|f''''(r)| / (384 tol))^(1/4), via its inverse CDF.
    rs = np.geomspace(r_min, r_max, 4000)
    h4 = np.minimum(rs / 8.0, (r_max - r_min) / 1000.0)
    est4 = np.abs(
        fun(rs - 2 * h4) - 4 * fun(rs - h4) + 6 * fun(rs) - 4 * fun(rs + h4) + fun(rs + 2 * h4)
    ) / h4**4
    dens = (est4 / (384.0 * tol)) ** 0.25
    cdf = np.concatenate([[0.0], np.cumsum(0.5 * (dens[1:] + dens[:-1]) * np.diff(rs))])
    n_pred = int(np.ceil(cdf[-1] * 1.1))
    if n_pred >= 1:
        knots = np.interp(np.linspace(0.0, cdf[-1], n_pred + 1), cdf, rs)
        knots[0], knots[-1] = r_min, r_max
        seeds = [(knots[j], knots[j + 1]) for j in range(n_pred) if knots[j] < knots[j + 1]]
    else:
        seeds = [(r_min, r_max)]

    accepted = []
    stack = seeds[::-1]
    while stack:
        if len(accepted) + len(stack) > node_cap:
            a, b = stack[-1]
            raise SplineBuildError(
                f"adaptive mesh exceeded {node_cap} nodes; element "
                f"[{a:.6e}, {b:.6e}] still fails the h^4/384 bound"
            )
        a, b = stack.pop()
        sup4 = _phi4_sup(fun, a, b)
        if (b - a) ** 4 / 384.0 * sup4 < tol:
            accepted.append((a, b))
        else:
            m = 0.5 * (a + b)
            if m <= a or m >= b:
                raise SplineBuildError(
                    f"element [{a:.6e}, {b:.6e}] cannot be bisected further"
                )
            stack.append((m, b))
            stack.append((a, m))
    accepted.sort()
    x = np.array([a for a, _ in accepted] + [accepted[-1][1]])
    return SplineInterpolant(
        x=x, y=fun(x), d=dfun(x), tol=tol, r_max=r_max, r_min=r_min, exact=fun
    )


def build_spline(model, tol=5e-9, r_max=2.5, r_min=None, node_cap=2000):
    """Spline accelerator for a KernelModel (exact fallback off-mesh)."""
    if model.family == "white":
        raise ValueError("white kernel is discontinuous; no spline")
    return build_hermite_spline(model.phi_vec, model.dphi_vec, tol, r_max, r_min, node_cap)
