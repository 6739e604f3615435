"""Radial trapping potentials V = V1 + V2 and their dilation derivatives.

V1 is an analytic confining part (harmonic a|x|^2, an even radial
polynomial, or zero); V2 is a bounded radial perturbation given as a
sample table with linear interpolation.  Besides V itself the solvers
need two derivative combinations along dilations:

    x . grad V      and      V* = 3 x . grad V + sum_ij x_i x_j d_i d_j V.

For the analytic kinds these are exact symbolic evaluations, never finite
differences.  Condition checks are grid-sampled sufficient tests and the
report labels them as sampled evidence, not proof.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .grid import SpectralGrid


class PotentialError(ValueError):
    """Invalid potential specification for the requested grid."""


@dataclass(frozen=True)
class PotentialSpec:
    """Declarative description of V = V1 + V2 with its declared bounds.

    v1_kind: "zero" | "harmonic" | "radial_polynomial"
    v1_params: () | (a,) | coefficients c_j of |x|^(2j), j = 1, 2, ...
    v2_kind: "zero" | "radial_table"
    v2_params: () | (radii tuple, values tuple)
    growth_m / bound_M: declared constants of the growth bound
        V1 <= M (1 + |x|^m)
    deriv_bound: declared constant of |x^a d^a V1| <= M_a (1 + V1)
    integrability_q: declared exponent for V2 (must exceed 3/2)
    """

    v1_kind: str = "zero"
    v1_params: tuple = ()
    v2_kind: str = "zero"
    v2_params: tuple = ()
    growth_m: float = 2.0
    bound_M: float = 1.0
    deriv_bound: float = 4.0
    integrability_q: float = 2.0

    def __post_init__(self):
        if self.v1_kind not in ("zero", "harmonic", "radial_polynomial"):
            raise PotentialError(f"unknown V1 kind {self.v1_kind!r}")
        if self.v2_kind not in ("zero", "radial_table"):
            raise PotentialError(f"unknown V2 kind {self.v2_kind!r}")
        if self.v1_kind == "harmonic" and len(self.v1_params) != 1:
            raise PotentialError("harmonic V1 takes a single coefficient")
        if self.v2_kind == "radial_table":
            if len(self.v2_params) != 2:
                raise PotentialError("radial table needs (radii, values)")
            radii, values = self.v2_params
            if len(radii) != len(values) or len(radii) < 2:
                raise PotentialError("radial table needs >= 2 matching samples")
            if any(b <= a for a, b in zip(radii, radii[1:])):
                raise PotentialError("table radii must be strictly increasing")
            if not self.integrability_q > 1.5:
                raise PotentialError(
                    "nonzero V2 requires integrability q > 3/2"
                )

    # -- factories ---------------------------------------------------------

    @classmethod
    def zero(cls) -> "PotentialSpec":
        return cls()

    @classmethod
    def harmonic(cls, a: float = 1.0, **kw) -> "PotentialSpec":
        kw.setdefault("growth_m", 2.0)
        kw.setdefault("bound_M", max(1.0, a))
        kw.setdefault("deriv_bound", 4.0)
        return cls(v1_kind="harmonic", v1_params=(float(a),), **kw)

    @classmethod
    def radial_polynomial(cls, coeffs, **kw) -> "PotentialSpec":
        coeffs = tuple(float(c) for c in coeffs)
        kw.setdefault("growth_m", 2.0 * len(coeffs))
        kw.setdefault("bound_M", max(1.0, max(abs(c) for c in coeffs)))
        kw.setdefault("deriv_bound", 8.0 * len(coeffs) ** 2)
        return cls(v1_kind="radial_polynomial", v1_params=coeffs, **kw)

    def with_table(self, radii, values, q: float = 2.0) -> "PotentialSpec":
        return replace(
            self,
            v2_kind="radial_table",
            v2_params=(tuple(float(r) for r in radii), tuple(float(v) for v in values)),
            integrability_q=float(q),
        )

    # -- symbolic evaluation ------------------------------------------------

    def _poly_coeffs(self) -> tuple:
        """V1 as coefficients of |x|^(2j), j starting at 1."""
        if self.v1_kind == "zero":
            return ()
        if self.v1_kind == "harmonic":
            return (self.v1_params[0],)
        return self.v1_params

    def v1_of_r2(self, r2: np.ndarray) -> np.ndarray:
        out = np.zeros_like(r2)
        for j, c in enumerate(self._poly_coeffs(), start=1):
            out += c * r2**j
        return out

    def v1_x_grad(self, r2: np.ndarray) -> np.ndarray:
        out = np.zeros_like(r2)
        for j, c in enumerate(self._poly_coeffs(), start=1):
            out += 2.0 * j * c * r2**j
        return out

    def v1_star(self, r2: np.ndarray) -> np.ndarray:
        # V* of c |x|^(2j) is 4 j (j+1) c |x|^(2j)
        out = np.zeros_like(r2)
        for j, c in enumerate(self._poly_coeffs(), start=1):
            out += 4.0 * j * (j + 1) * c * r2**j
        return out

    def is_zero(self) -> bool:
        return self.v1_kind == "zero" and self.v2_kind == "zero"

    def rescaled(self, omega: float) -> "PotentialSpec":
        """The spec of V~(x) = V(x / sqrt(omega)) / omega.

        Monomial coefficients pick up omega^(-1-j); table radii stretch by
        sqrt(omega) and values divide by omega.
        """
        if not omega > 0:
            raise PotentialError("rescaling frequency must be positive")
        coeffs = tuple(
            c * omega ** (-1.0 - j)
            for j, c in enumerate(self._poly_coeffs(), start=1)
        )
        kind = "zero" if not coeffs else (
            "harmonic" if len(coeffs) == 1 else "radial_polynomial"
        )
        v2_kind, v2_params = self.v2_kind, self.v2_params
        if v2_kind == "radial_table":
            radii, values = self.v2_params
            v2_params = (
                tuple(r * omega**0.5 for r in radii),
                tuple(v / omega for v in values),
            )
        return replace(
            self,
            v1_kind=kind,
            v1_params=coeffs,
            v2_kind=v2_kind,
            v2_params=v2_params,
        )


@dataclass(frozen=True)
class PotentialFields:
    """Sampled V, x.grad V and V* on a grid, with V1 kept separate.

    The X-norm weight uses v1 only; v = v1 + v2 enters the equation.
    """

    spec: PotentialSpec
    grid: SpectralGrid
    v: np.ndarray
    v1: np.ndarray
    x_grad_v: np.ndarray
    v_star: np.ndarray

    def is_zero(self) -> bool:
        return self.spec.is_zero()


def _table_fields(spec: PotentialSpec, r: np.ndarray):
    radii, values = spec.v2_params
    radii = np.asarray(radii)
    values = np.asarray(values)
    rmax = float(r.max())
    if radii[-1] < rmax:
        raise PotentialError(
            f"V2 table covers r <= {radii[-1]:g} but the grid needs {rmax:g}"
        )
    v2 = np.interp(r, radii, values)
    slopes = np.diff(values) / np.diff(radii)
    seg = np.clip(np.searchsorted(radii, r, side="right") - 1, 0, len(slopes) - 1)
    dv2 = slopes[seg]
    # piecewise-linear radial interpolant: second radial derivative vanishes
    x_grad = r * dv2
    v_star = 3.0 * x_grad
    return v2, x_grad, v_star


def build_potential(spec: PotentialSpec, grid: SpectralGrid) -> PotentialFields:
    """Sample V, x.grad V and V* on the grid (exact for analytic kinds)."""
    r2 = grid.r2()
    v1 = spec.v1_of_r2(r2)
    xg = spec.v1_x_grad(r2)
    vs = spec.v1_star(r2)
    if spec.v2_kind == "radial_table":
        r = np.sqrt(r2)
        v2, xg2, vs2 = _table_fields(spec, r)
        v = v1 + v2
        xg = xg + xg2
        vs = vs + vs2
    else:
        v = v1
    return PotentialFields(spec=spec, grid=grid, v=v, v1=v1, x_grad_v=xg, v_star=vs)


# ---------------------------------------------------------------------------
# Standing-assumption checks (grid-sampled sufficient tests)
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ConditionCheck:
    name: str
    passed: bool
    detail: str
    witness: tuple | None = None


def validate_conditions(spec: PotentialSpec, grid: SpectralGrid) -> list[ConditionCheck]:
    """Check the standing assumptions on V at grid scale.

    Every entry is sampled evidence on the grid, not a proof; failures
    carry the witnessing grid point.
    """
    fields = build_potential(spec, grid)
    r2 = grid.r2()
    r = np.sqrt(r2)
    checks: list[ConditionCheck] = []

    def witness(mask):
        idx = np.unravel_index(np.argmax(mask), mask.shape)
        return (float(grid.x[idx[0]]), float(grid.x[idx[1]]), float(grid.x[idx[2]]))

    # nonnegativity of V1
    bad = fields.v1 < -1e-14
    checks.append(
        ConditionCheck(
            "v1_nonnegative",
            not bool(bad.any()),
            "sampled evidence: V1 >= 0 at every grid point",
            witness(bad) if bad.any() else None,
        )
    )

    # radial symmetry of V1 on grid orbits
    from .grid import symmetrize_radial

    sym = symmetrize_radial(grid, fields.v1)
    dev = np.abs(fields.v1 - sym)
    scale = max(1.0, float(np.abs(fields.v1).max()))
    bad = dev > 1e-12 * scale
    checks.append(
        ConditionCheck(
            "v1_radial",
            not bool(bad.any()),
            "sampled evidence: V1 constant on grid symmetry orbits (1e-12 rel)",
            witness(bad) if bad.any() else None,
        )
    )

    # growth bound V1 <= M (1 + |x|^m)
    bound = spec.bound_M * (1.0 + r**spec.growth_m)
    bad = fields.v1 > bound * (1.0 + 1e-12)
    checks.append(
        ConditionCheck(
            "v1_growth",
            not bool(bad.any()),
            f"sampled evidence: V1 <= M(1+|x|^m) with M={spec.bound_M:g}, "
            f"m={spec.growth_m:g}",
            witness(bad) if bad.any() else None,
        )
    )

    # derivative bound |x^a d^a V1| <= M_a (1 + V1), aggregated over |a| <= 2
    xg1 = spec.v1_x_grad(r2)
    second = spec.v1_star(r2) - 3.0 * xg1  # sum_ij x_i x_j d_i d_j V1
    env = spec.deriv_bound * (1.0 + fields.v1)
    bad = (np.abs(xg1) > env * (1 + 1e-12)) | (np.abs(second) > env * (1 + 1e-12))
    checks.append(
        ConditionCheck(
            "v1_derivative_bound",
            not bool(bad.any()),
            f"sampled evidence: |x.grad V1| and |x x : D2 V1| <= "
            f"M_a(1+V1) with M_a={spec.deriv_bound:g}",
            witness(bad) if bad.any() else None,
        )
    )

    # smoothness-with-bounded-second-derivatives proxy: the second dilation
    # derivative, normalized by |x|^2, should not grow outward
    if spec.v1_kind == "zero":
        checks.append(
            ConditionCheck("v1_smooth_bounded_d2", True, "V1 = 0, vacuous")
        )
    else:
        with np.errstate(invalid="ignore", divide="ignore"):
            d2 = np.where(r2 > 0, np.abs(second) / r2, 0.0)
        inner = d2[r <= 0.5 * grid.half_width]
        outer = d2[r > 0.5 * grid.half_width]
        growing = float(outer.max()) > 4.0 * max(float(inner.max()), 1e-300)
        checks.append(
            ConditionCheck(
                "v1_smooth_bounded_d2",
                not growing,
                "sampled evidence: second derivatives bounded "
                "(outer/inner growth ratio <= 4)",
            )
        )

    # V2 integrability declaration
    if spec.v2_kind == "zero":
        checks.append(ConditionCheck("v2_integrable", True, "V2 = 0, vacuous"))
    else:
        ok = spec.integrability_q > 1.5
        v2 = fields.v - fields.v1
        lq = float(
            (grid.spacing**3 * np.sum(np.abs(v2) ** spec.integrability_q))
            ** (1.0 / spec.integrability_q)
        )
        checks.append(
            ConditionCheck(
                "v2_integrable",
                ok,
                f"declared q={spec.integrability_q:g} (> 3/2 required); "
                f"sampled Lq norm {lq:.6g}",
            )
        )
    return checks
