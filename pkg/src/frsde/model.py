"""Reaction, perturbation, and noise coefficient families, plus a numerical
checker for the structural conditions the simulator relies on.

The checks are sampling based.  A passing report means "no violation found on
the supplied grid within tolerance", never a proof; a failing report always
carries a concrete witness point.  Types here are deliberately permissive so
that broken variants can be constructed and shown to fail; strict validation
belongs to the config layer.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .fracop import FracOperator

Q_RANGE_MESSAGE = "q must satisfy 2 <= q < p"

#: default margin tolerance for all condition checks
CHECK_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class DriftF:
    """Dissipative reaction term f(t, x, u) with polynomial growth data.

    family "PowerDecay" is f = -delta1 * u * |u|**(p - 2).  "UserTabulated"
    interpolates supplied samples linearly and clamps outside the table.
    The scalar profile values phi1, phi2, phi4 stand for constant-in-(t, x)
    envelope functions.
    """

    family: str
    p: float
    delta1: float
    delta2: float
    phi1: float = 0.0
    phi2: float = 0.0
    delta3: float | None = None
    phi4: float = 0.0
    u_table: tuple[float, ...] | None = None
    f_table: tuple[float, ...] | None = None

    def __post_init__(self):
        if self.family not in ("PowerDecay", "UserTabulated"):
            raise ValueError(f"unknown drift family {self.family!r}")
        if self.p <= 2.0:
            raise ValueError(f"growth exponent p must exceed 2, got {self.p}")
        if self.family == "UserTabulated":
            if self.u_table is None or self.f_table is None:
                raise ValueError("UserTabulated needs u_table and f_table")
            if len(self.u_table) != len(self.f_table) or len(self.u_table) < 2:
                raise ValueError("tables must have equal length >= 2")
            if abs(float(np.interp(0.0, self.u_table, self.f_table))) > 1e-14:
                raise ValueError("tabulated drift must vanish at u = 0")

    def evaluate(self, t, x, u):
        """Pointwise drift values; broadcasts over array-valued u."""
        u = np.asarray(u, dtype=float)
        if self.family == "PowerDecay":
            return -self.delta1 * u * np.abs(u) ** (self.p - 2.0)
        return np.interp(u, self.u_table, self.f_table)


@dataclass(frozen=True, eq=False)
class DriftH:
    """Lipschitz perturbation h(t, x, u) with declared slope envelope phi3."""

    family: str
    kappa: float = 0.0
    phi3: float = 0.0

    def __post_init__(self):
        if self.family not in ("Linear", "BoundedSine"):
            raise ValueError(f"unknown perturbation family {self.family!r}")
        if self.phi3 < 0.0:
            raise ValueError("phi3 must be nonnegative")

    def evaluate(self, t, x, u):
        u = np.asarray(u, dtype=float)
        if self.family == "Linear":
            return self.kappa * u
        return self.kappa * np.sin(u)


@dataclass(frozen=True, eq=False)
class NoiseModel:
    """Truncated diffusion coefficient: mode i carries sigma1_i(t, x) +
    sigma2_i(u).

    sigma1_i is a deterministic space profile scaled by sigma1_coeffs[i]
    (shape "sine": a_i * sin(i pi (x - a) / (b - a)); shape "flat": a_i).
    sigma2_i for the PowerHalfQ family is sqrt(gamma_i) * sign(u) *
    |u|**(q/2).  beta_tail and gamma_tail are caller-supplied upper bounds
    on the discarded remainder of the beta and gamma sequences, reported so
    truncation error stays visible.
    """

    m: int
    q: float
    sigma1_coeffs: tuple[float, ...]
    beta: tuple[float, ...]
    gamma: tuple[float, ...]
    alpha: tuple[float, ...] | None = None
    sigma2_family: str = "PowerHalfQ"
    sigma1_profile: str = "sine"
    beta_tail: float = 0.0
    gamma_tail: float = 0.0
    u_table: tuple[float, ...] | None = None
    sigma2_table: tuple[float, ...] | None = None

    def __post_init__(self):
        if self.m < 1:
            raise ValueError("need at least one noise mode")
        if self.q < 2.0:
            raise ValueError(Q_RANGE_MESSAGE)
        for name in ("sigma1_coeffs", "beta", "gamma"):
            seq = getattr(self, name)
            if len(seq) != self.m:
                raise ValueError(f"{name} must have length m = {self.m}")
        if any(b < 0 for b in self.beta) or any(g < 0 for g in self.gamma):
            raise ValueError("beta and gamma entries must be nonnegative")
        if self.sigma2_family not in ("PowerHalfQ", "UserTabulated"):
            raise ValueError(f"unknown noise family {self.sigma2_family!r}")
        if self.sigma1_profile not in ("sine", "flat"):
            raise ValueError(f"unknown sigma1 profile {self.sigma1_profile!r}")
        if self.alpha is None:
            object.__setattr__(
                self,
                "alpha",
                tuple(0.25 * self.q * self.q * g for g in self.gamma),
            )
        elif len(self.alpha) != self.m:
            raise ValueError(f"alpha must have length m = {self.m}")
        if self.sigma2_family == "UserTabulated":
            if self.u_table is None or self.sigma2_table is None:
                raise ValueError("UserTabulated needs u_table and sigma2_table")
            if abs(float(np.interp(0.0, self.u_table, self.sigma2_table))) > 1e-14:
                raise ValueError("tabulated sigma2 must vanish at u = 0")

    def sigma1_at(self, op: FracOperator, t: float) -> np.ndarray:
        """Deterministic part at the operator's quadrature points, one
        column per mode."""
        x = op.quad_x
        cfg = op.space
        cols = np.empty((x.size, self.m))
        for i in range(self.m):
            a_i = self.sigma1_coeffs[i]
            if self.sigma1_profile == "sine":
                cols[:, i] = a_i * np.sin((i + 1) * math.pi * (x - cfg.a) / cfg.length)
            else:
                cols[:, i] = a_i
        return cols

    def sigma2_base(self, u):
        """Shared state-dependent shape before the per-mode sqrt(gamma_i)
        scaling."""
        u = np.asarray(u, dtype=float)
        if self.sigma2_family == "PowerHalfQ":
            return np.sign(u) * np.abs(u) ** (0.5 * self.q)
        return np.interp(u, self.u_table, self.sigma2_table)

    def sigma2_at(self, u) -> np.ndarray:
        """State-dependent part evaluated at u, one column per mode."""
        base = self.sigma2_base(u)
        scales = np.sqrt(np.asarray(self.gamma))
        return base[..., None] * scales


@dataclass(frozen=True)
class HypothesisProfile:
    """Constants of the abstract energy framework, derived for one concrete
    model.  g is constant in time here because every shipped profile is."""

    alpha2: float
    alpha3: float
    alpha4: float
    beta_exp: float
    q_list: tuple[float, float, float]
    qhat_list: tuple[float, float, float]
    g_constant: float
    growth_offset: float = 0.0

    def __post_init__(self):
        if self.alpha2 <= 0.0:
            raise ValueError("alpha2 must be positive")
        for qhat, qj in zip(self.qhat_list, self.q_list):
            if qhat >= qj:
                raise ValueError("each qhat_j must be strictly below q_j")

    def g(self, t: float) -> float:
        return self.g_constant

    @property
    def q_tilde(self) -> float:
        return max(self.q_list)

    @property
    def q_under(self) -> float:
        return min(self.q_list)


@dataclass(frozen=True)
class CheckReport:
    condition: str
    passed: bool
    margin: float
    witness: dict | None
    samples: int
    extras: dict = field(default_factory=dict)

    def to_json_dict(self) -> dict:
        out = {
            "condition": self.condition,
            "pass": self.passed,
            "margin": self.margin,
            "witness": self.witness,
            "samples": self.samples,
        }
        if self.extras:
            out["extras"] = dict(self.extras)
        return out


@dataclass(frozen=True)
class SampleGrid:
    """Sampling lattice shared by the condition checks.

    u values cover [u_lo, u_hi]; pair conditions run over all unordered
    grid pairs including coincident ones, so bounds that are tight on the
    diagonal report margin 0.  States for the energy checks are random
    eigen-coefficient vectors with power-law decay.
    """

    u_lo: float = -3.0
    u_hi: float = 3.0
    n_u: int = 181
    t_values: tuple[float, ...] = (0.0, 0.5, 1.0)
    n_states: int = 200
    state_decay: float = 1.0
    state_scale: float = 1.0
    seed: int = 2026
    tol: float = CHECK_TOL

    def __post_init__(self):
        if self.n_u < 2:
            raise ValueError("need at least two u samples")
        if not self.t_values:
            raise ValueError("need at least one time sample")
        if self.u_lo >= self.u_hi:
            raise ValueError("u range is empty")

    def u_values(self) -> np.ndarray:
        return np.linspace(self.u_lo, self.u_hi, self.n_u)

    def u_pairs(self) -> tuple[np.ndarray, np.ndarray]:
        u = self.u_values()
        i, j = np.triu_indices(u.size)
        return u[i], u[j]


def _nonfinite_report(condition: str, t: float, u, samples: int) -> CheckReport:
    bad = np.asarray(u)[~np.isfinite(np.asarray(u))]
    witness = {"t": t, "u": float(bad.flat[0]) if bad.size else None,
               "reason": "non-finite evaluation"}
    return CheckReport(condition, False, float("-inf"), witness, samples)


def _pair_report(condition: str, slack: np.ndarray, u1: np.ndarray,
                 u2: np.ndarray, t: float, tol: float) -> CheckReport:
    k = int(np.argmin(slack))
    margin = float(slack[k])
    passed = margin >= -tol
    witness = None
    if not passed:
        witness = {"t": t, "u1": float(u1[k]), "u2": float(u2[k])}
    return CheckReport(condition, passed, margin, witness, slack.size)


def _point_report(condition: str, slack: np.ndarray, u: np.ndarray,
                  t: float, tol: float, extras: dict | None = None) -> CheckReport:
    k = int(np.argmin(slack))
    margin = float(slack[k])
    passed = margin >= -tol
    witness = None if passed else {"t": t, "u": float(u[k])}
    return CheckReport(condition, passed, margin, witness, slack.size,
                       extras or {})


def _worst(reports: list[CheckReport]) -> CheckReport:
    return min(reports, key=lambda r: r.margin)


def certify_delta3(f: DriftF, grid: SampleGrid | None = None) -> float:
    """Largest weight for which the one-sided monotonicity condition holds
    on the grid, located by bisection.  Returns 0 when even a vanishing
    weight fails (i.e. the drift is not monotone decreasing)."""
    grid = grid or SampleGrid()
    u1, u2 = grid.u_pairs()
    du = u2 - u1
    keep = du > 0
    u1, u2, du = u1[keep], u2[keep], du[keep]
    weight = (np.abs(u1) ** (f.p - 2.0) + np.abs(u2) ** (f.p - 2.0)) * du * du

    def passes(delta3: float) -> bool:
        for t in grid.t_values:
            x = np.zeros_like(u1)
            incr = (f.evaluate(t, x, u1) - f.evaluate(t, x, u2)) * (u1 - u2)
            if np.min(-delta3 * weight - incr) < -grid.tol:
                return False
        return True

    if not passes(0.0):
        return 0.0
    lo, hi = 0.0, 1.0
    while passes(hi):
        lo, hi = hi, 2.0 * hi
        if hi > 1e12:
            return lo
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if passes(mid):
            lo = mid
        else:
            hi = mid
    return lo


def check_f(f: DriftF, grid: SampleGrid | None = None) -> list[CheckReport]:
    """Reports for monotonicity, dissipativity, growth, and the weighted
    one-sided condition, in that order."""
    grid = grid or SampleGrid()
    u = grid.u_values()
    u1, u2 = grid.u_pairs()
    delta3 = f.delta3 if f.delta3 is not None else certify_delta3(f, grid)

    mono, diss, grow, onesided = [], [], [], []
    for t in grid.t_values:
        x = np.zeros_like(u)
        fu = f.evaluate(t, x, u)
        if not np.all(np.isfinite(fu)):
            bad = _nonfinite_report("f-monotone", t, u, u.size)
            return [bad, bad, bad, bad]
        f1 = f.evaluate(t, np.zeros_like(u1), u1)
        f2 = f.evaluate(t, np.zeros_like(u2), u2)
        # u1 <= u2, so a decreasing drift keeps f1 - f2 nonnegative
        mono.append(_pair_report("f-monotone", f1 - f2, u1, u2, t, grid.tol))
        diss.append(_point_report(
            "f-dissipative",
            -f.delta1 * np.abs(u) ** f.p + f.phi1 - fu * u,
            u, t, grid.tol))
        grow.append(_point_report(
            "f-growth",
            f.delta2 * np.abs(u) ** (f.p - 1.0) + f.phi2 - np.abs(fu),
            u, t, grid.tol))
        weight = (np.abs(u1) ** (f.p - 2.0) + np.abs(u2) ** (f.p - 2.0)) * (u2 - u1) ** 2
        onesided.append(_pair_report(
            "f-onesided-weighted",
            -delta3 * weight - (f1 - f2) * (u1 - u2),
            u1, u2, t, grid.tol))

    out = [_worst(mono), _worst(diss), _worst(grow), _worst(onesided)]
    out[-1] = CheckReport(out[-1].condition, out[-1].passed, out[-1].margin,
                          out[-1].witness, out[-1].samples,
                          {"delta3": delta3})
    return out


def check_h(h: DriftH, grid: SampleGrid | None = None) -> CheckReport:
    """Difference quotients of h against the declared slope envelope."""
    grid = grid or SampleGrid()
    u1, u2 = grid.u_pairs()
    keep = u2 > u1
    u1, u2 = u1[keep], u2[keep]
    reports = []
    for t in grid.t_values:
        h1 = h.evaluate(t, np.zeros_like(u1), u1)
        h2 = h.evaluate(t, np.zeros_like(u2), u2)
        if not (np.all(np.isfinite(h1)) and np.all(np.isfinite(h2))):
            return _nonfinite_report("h-lipschitz", t, np.concatenate([h1, h2]),
                                     u1.size)
        quot = np.abs(h1 - h2) / (u2 - u1)
        reports.append(_pair_report("h-lipschitz", h.phi3 - quot, u1, u2, t,
                                    grid.tol))
    return _worst(reports)


def check_sigma(nm: NoiseModel, f: DriftF,
                grid: SampleGrid | None = None) -> list[CheckReport]:
    """Per-mode growth and increment conditions for the state-dependent
    noise, plus bookkeeping partial sums for the deterministic part.

    Raises ValueError when q falls outside [2, p): that is a standing
    structural assumption, not a samplable condition.
    """
    grid = grid or SampleGrid()
    if not (2.0 <= nm.q < f.p):
        raise ValueError(Q_RANGE_MESSAGE)
    u = grid.u_values()
    u1, u2 = grid.u_pairs()

    growth, increment = [], []
    for t in grid.t_values:
        s2 = nm.sigma2_at(u)
        if not np.all(np.isfinite(s2)):
            bad = _nonfinite_report("sigma-growth", t, s2, s2.size)
            return [bad, bad, bad]
        bound = (np.asarray(nm.beta)[None, :]
                 + np.asarray(nm.gamma)[None, :] * np.abs(u)[:, None] ** nm.q)
        slack = bound - s2 * s2
        worst_mode = int(np.argmin(np.min(slack, axis=0)))
        growth.append(_point_report(
            "sigma-growth", slack[:, worst_mode], u, t, grid.tol,
            {"mode": worst_mode + 1}))

        d1 = nm.sigma2_at(u1)
        d2 = nm.sigma2_at(u2)
        wt = (1.0 + np.abs(u1) ** (nm.q - 2.0) + np.abs(u2) ** (nm.q - 2.0)) \
            * (u1 - u2) ** 2
        slack2 = np.asarray(nm.alpha)[None, :] * wt[:, None] - (d1 - d2) ** 2
        worst_mode2 = int(np.argmin(np.min(slack2, axis=0)))
        increment.append(_pair_report(
            "sigma-increment-weighted", slack2[:, worst_mode2], u1, u2, t,
            grid.tol))

    sums = CheckReport(
        "sigma-summability", True, 0.0, None, nm.m,
        {
            "beta_gamma_partial_sum": float(np.sum(nm.beta) + np.sum(nm.gamma)),
            "sigma1_sq_partial_sum": float(np.sum(np.square(nm.sigma1_coeffs))),
            "discarded_tail_bound": nm.beta_tail + nm.gamma_tail,
        })
    return [_worst(growth), sums, _worst(increment)]


def hs_norm_B(nm: NoiseModel, op: FracOperator, t: float,
              z: np.ndarray) -> tuple[float, float]:
    """Squared Hilbert-Schmidt size of the diffusion at state z, together
    with its structural upper bound.

    The value sums, over modes, the quadrature H-norm squared of
    sigma1_i(t, .) + sigma2_i(u(.)).  The bound is
    2 sum ||sigma1_i||^2 + 2 vol sum beta_i
    + 2 vol^((p-q)/p) sum gamma_i * ||u||_Lp^q,
    with vol the domain measure.  Both sides use the same quadrature, so
    value <= bound holds up to roundoff by construction.
    """
    z = np.asarray(z, dtype=float)
    if z.shape != (op.dim,):
        raise ValueError(f"expected state of length {op.dim}, got {z.shape}")
    p = op.space.p
    u = op.basis_at_quad @ z
    cols = nm.sigma1_at(op, t) + nm.sigma2_at(u)
    value = float(np.sum(op.quad_w[:, None] * cols * cols))

    s1 = nm.sigma1_at(op, t)
    s1_sq = float(np.sum(op.quad_w[:, None] * s1 * s1))
    vol = op.space.length
    lp_q = float(np.sum(op.quad_w * np.abs(u) ** p)) ** (nm.q / p)
    bound = (2.0 * s1_sq
             + 2.0 * vol * float(np.sum(nm.beta))
             + 2.0 * vol ** ((p - nm.q) / p) * float(np.sum(nm.gamma)) * lp_q)
    return value, bound


def derive_profile(f: DriftF, h: DriftH, nm: NoiseModel,
                   op: FracOperator) -> HypothesisProfile:
    """Energy-framework constants for the concrete model, assembled the
    same way the coercivity estimate is proved.

    alpha2 = min(2, delta1) when the drift is genuinely dissipative; a
    broken drift (delta1 <= 0) admits no valid constant, so the derivation
    falls back to 1.0 and lets the coercivity check fail on samples.
    """
    p = f.p
    q = nm.q
    vol = op.space.length
    alpha2 = min(2.0, f.delta1) if f.delta1 > 0.0 else 1.0

    s1 = nm.sigma1_at(op, 0.0)
    s1_sq = float(np.sum(op.quad_w[:, None] * s1 * s1))
    gamma_sum = float(np.sum(nm.gamma))
    beta_sum = float(np.sum(nm.beta))

    # split the superlinear noise term A ||u||^q <= d1 ||u||^p + young_const
    young_coef = 2.0 * vol ** ((p - q) / p) * gamma_sum
    d1 = f.delta1 if f.delta1 > 0.0 else 1.0
    if young_coef > 0.0:
        young_const = (young_coef ** (p / (p - q))
                       * (q / (p * d1)) ** (q / (p - q))
                       * (1.0 - q / p))
    else:
        young_const = 0.0
    c1 = 2.0 * vol * beta_sum + young_const

    g_constant = (2.0 * h.phi3 + alpha2 + 2.0 * f.phi1 * vol
                  + 2.0 * s1_sq + c1)

    p_dual = p / (p - 1.0)
    grow_coef = f.delta2 ** p_dual * (2.0 ** (p_dual - 1.0) if f.phi2 > 0 else 1.0)
    alpha3 = max(1.0, grow_coef, h.phi3 * h.phi3)
    growth_offset = (2.0 ** (p_dual - 1.0) * f.phi2 ** p_dual * vol
                     if f.phi2 > 0 else 0.0)
    alpha4 = young_coef

    return HypothesisProfile(
        alpha2=alpha2,
        alpha3=alpha3,
        alpha4=alpha4,
        beta_exp=0.0,
        q_list=(2.0, p, 2.0),
        qhat_list=(1.0, q, 1.0),
        g_constant=g_constant,
        growth_offset=growth_offset,
    )


def check_abstract(profile: HypothesisProfile, f: DriftF, h: DriftH,
                   nm: NoiseModel, op: FracOperator,
                   grid: SampleGrid | None = None) -> list[CheckReport]:
    """Coercivity, drift growth, and diffusion growth verified on random
    states with decaying eigen-coefficients."""
    grid = grid or SampleGrid()
    rng = np.random.default_rng(grid.seed)
    k = np.arange(1, op.dim + 1, dtype=float)
    decay = grid.state_scale * k ** (-grid.state_decay)

    p = op.space.p
    p_dual = p / (p - 1.0)
    w = op.quad_w
    xq = op.quad_x

    worst = {"coercivity": (math.inf, None), "drift-growth": (math.inf, None),
             "diffusion-growth": (math.inf, None)}
    n_samples = 0
    for idx in range(grid.n_states):
        c = decay * rng.standard_normal(op.dim)
        z = op.eigen_to_nodal(c)
        u = op.basis_at_quad @ z
        h_sq = float(z @ op.mass @ z)
        v1_sq = float(z @ op.stiffness @ z)
        v2_p = float(np.sum(w * np.abs(u) ** p))
        norm_sum = v1_sq + v2_p + h_sq

        for t in grid.t_values:
            n_samples += 1
            fu = f.evaluate(t, xq, u)
            hu = h.evaluate(t, xq, u)
            if not (np.all(np.isfinite(fu)) and np.all(np.isfinite(hu))):
                bad = _nonfinite_report("coercivity", t, fu, n_samples)
                return [bad, bad, bad]
            hs, _ = hs_norm_B(nm, op, t, z)
            g_t = profile.g(t)

            pairing = -v1_sq + float(np.sum(w * fu * u)) + float(np.sum(w * hu * u))
            lhs = 2.0 * pairing + hs
            rhs = -profile.alpha2 * norm_sum + g_t * (1.0 + h_sq)
            _update(worst, "coercivity", rhs - lhs, t, idx, h_sq)

            c_state = op.nodal_to_eigen(z)
            dual1 = float(np.sum(
                op.eigenvalues ** 2 * c_state ** 2 / (1.0 + op.eigenvalues)))
            dual2 = float(np.sum(w * np.abs(fu) ** p_dual))
            dual3 = float(np.sum(w * hu * hu))
            lhs = dual1 + dual2 + dual3
            rhs = ((g_t + profile.growth_offset + profile.alpha3 * norm_sum)
                   * (1.0 + h_sq ** (0.5 * profile.beta_exp)))
            _update(worst, "drift-growth", rhs - lhs, t, idx, h_sq)

            qhat = profile.qhat_list
            rhs = (g_t * (1.0 + h_sq) + profile.alpha4 * (
                v1_sq ** (0.5 * qhat[0])
                + v2_p ** (qhat[1] / p)
                + h_sq ** (0.5 * qhat[2])))
            _update(worst, "diffusion-growth", rhs - hs, t, idx, h_sq)

    out = []
    for cond in ("coercivity", "drift-growth", "diffusion-growth"):
        margin, wit = worst[cond]
        passed = margin >= -grid.tol
        out.append(CheckReport(cond, passed, margin,
                               None if passed else wit, n_samples))
    return out


def _update(worst: dict, cond: str, slack: float, t: float, idx: int,
            h_sq: float) -> None:
    if slack < worst[cond][0]:
        worst[cond] = (slack, {"t": t, "state_index": idx,
                               "H_norm": math.sqrt(max(h_sq, 0.0))})


def default_model(m: int = 6, q: float = 3.0) -> tuple[DriftF, DriftH, NoiseModel]:
    """Reference configuration: cubic decay drift, bounded sine
    perturbation, superlinear noise with summable mode constants."""
    f = DriftF(family="PowerDecay", p=4.0, delta1=1.0, delta2=1.0, delta3=0.5)
    h = DriftH(family="BoundedSine", kappa=0.5, phi3=0.5)
    i = np.arange(1, m + 1, dtype=float)
    nm = NoiseModel(
        m=m,
        q=q,
        sigma1_coeffs=tuple(0.25 / i**2),
        beta=tuple(0.1 / i**2),
        gamma=tuple(0.1 / i**2),
        beta_tail=0.1 / m,
        gamma_tail=0.1 / m,
    )
    return f, h, nm
