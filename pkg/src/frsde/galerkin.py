"""Mode-truncated stochastic dynamics and tamed explicit time steppers.

States live in eigen-coordinates of the operator's M-orthonormal basis, so
the H-norm of a state is the Euclidean norm of its coefficient vector.  The
drift combines the diagonal linear part with quadrature projections of the
reaction and perturbation terms; the diffusion matrix carries one column per
noise mode.  Both shipped schemes tame the superlinear pieces so that a
single large drift or diffusion evaluation cannot blow up a step.

Paths are reproducible: the Brownian increments for path j are drawn up
front from a generator seeded with (master_seed, j), independent of how
paths are grouped into batches or threads.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .fracop import FracOperator
from .model import DriftF, DriftH, NoiseModel

SCHEMES = ("TamedEuler", "ExponentialTamed")


@dataclass(frozen=True, eq=False)
class GalerkinSystem:
    """Immutable bundle of operator, coefficients, and precomputed
    quadrature data for one truncation level."""

    op: FracOperator
    f: DriftF
    h: DriftH
    nm: NoiseModel
    n_modes: int
    basis_quad: np.ndarray      # (n_quad, n_modes) eigenfunctions at nodes
    lam: np.ndarray             # (n_modes,)
    quad_w: np.ndarray
    quad_x: np.ndarray
    sigma1_proj: np.ndarray     # (n_modes, m), time-independent profiles

    @property
    def m(self) -> int:
        return self.nm.m


def make_system(op: FracOperator, f: DriftF, h: DriftH, nm: NoiseModel,
                n_modes: int) -> GalerkinSystem:
    if not 1 <= n_modes <= op.dim:
        raise ValueError(
            f"n_modes must be in [1, {op.dim}] for this operator, got {n_modes}")
    basis_quad = op.eigen_at_quad[:, :n_modes]
    s1 = nm.sigma1_at(op, 0.0)
    sigma1_proj = basis_quad.T @ (op.quad_w[:, None] * s1)
    return GalerkinSystem(
        op=op, f=f, h=h, nm=nm, n_modes=n_modes,
        basis_quad=basis_quad,
        lam=np.asarray(op.eigenvalues[:n_modes], dtype=float),
        quad_w=op.quad_w, quad_x=op.quad_x,
        sigma1_proj=sigma1_proj,
    )


@dataclass(frozen=True)
class SchemeConfig:
    scheme: str
    dt: float
    T: float
    tame_diffusion: bool = True
    master_seed: int = 0
    stability_guard: float = 2.0

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ValueError(f"scheme must be one of {SCHEMES}, got {self.scheme!r}")
        if not 0.0 < self.dt <= self.T:
            raise ValueError(f"need 0 < dt <= T, got dt={self.dt}, T={self.T}")
        if self.master_seed < 0:
            raise ValueError("master_seed must be nonnegative")

    @property
    def n_steps(self) -> int:
        k = int(round(self.T / self.dt))
        if abs(k * self.dt - self.T) > 1e-9 * max(1.0, self.T):
            raise ValueError(f"dt={self.dt} does not divide the horizon T={self.T}")
        return k


@dataclass(frozen=True)
class Trajectory:
    """One simulated path with the energy functionals accumulated along it.

    Time integrals use the left-endpoint rectangle rule; the running sup is
    taken over the stored grid points.
    """

    times: np.ndarray
    coeffs: np.ndarray          # (n_steps + 1, n_modes)
    h_norms: np.ndarray
    v1_seminorms: np.ndarray
    v2_norms: np.ndarray
    sup_h: float
    int_v1_sq: float
    int_v2_p: float
    int_v3_sq: float
    int_dual: tuple[float, float, float]
    int_hs: float


@dataclass(frozen=True)
class BatchResult:
    """Per-path functionals for a batch of simulated paths."""

    path_indices: np.ndarray
    sup_h: np.ndarray
    int_v1_sq: np.ndarray
    int_v2_p: np.ndarray
    int_v3_sq: np.ndarray
    int_dual: np.ndarray        # (n_paths, 3)
    int_hs: np.ndarray
    int_weighted: np.ndarray
    final: np.ndarray           # (n_paths, n_modes)
    snapshots: np.ndarray | None = None   # (n_paths, n_times, n_modes)


def project_initial(sys: GalerkinSystem, x: np.ndarray,
                    representation: str = "nodal") -> np.ndarray:
    """Coefficients of the initial state in the retained eigenbasis.

    "nodal" projects a mesh-sampled function orthogonally; "eigen" accepts
    coefficients directly and truncates or zero-pads to the retained size.
    """
    x = np.asarray(x, dtype=float)
    if representation == "nodal":
        if x.shape != (sys.op.dim,):
            raise ValueError(
                f"nodal input must have length {sys.op.dim}, got {x.shape}")
        return sys.op.nodal_to_eigen(x)[: sys.n_modes]
    if representation == "eigen":
        if x.ndim != 1 or x.size > sys.op.dim:
            raise ValueError(
                f"eigen input must be a vector of at most {sys.op.dim} entries")
        out = np.zeros(sys.n_modes)
        k = min(sys.n_modes, x.size)
        out[:k] = x[:k]
        return out
    raise ValueError(f"unknown representation {representation!r}")


def _nonlinear_at(sys: GalerkinSystem, t: float, U: np.ndarray):
    """Reaction and perturbation values on the quadrature grid for a batch
    of reconstructed states U of shape (n_paths, n_quad)."""
    with np.errstate(invalid="ignore", over="ignore"):
        fu = sys.f.evaluate(t, sys.quad_x, U)
        hu = sys.h.evaluate(t, sys.quad_x, U)
    if not (np.all(np.isfinite(fu)) and np.all(np.isfinite(hu))):
        bad = np.argwhere(~np.isfinite(fu) | ~np.isfinite(hu))
        node = sys.quad_x[bad[0][-1]]
        raise FloatingPointError(
            f"non-finite coefficient evaluation at t={t}, x={node}")
    return fu, hu


def _drift_batch(sys: GalerkinSystem, t: float, C: np.ndarray) -> np.ndarray:
    U = C @ sys.basis_quad.T
    fu, hu = _nonlinear_at(sys, t, U)
    proj = ((fu + hu) * sys.quad_w) @ sys.basis_quad
    return -C * sys.lam + proj


def _diffusion_batch(sys: GalerkinSystem, t: float, C: np.ndarray) -> np.ndarray:
    U = C @ sys.basis_quad.T
    with np.errstate(invalid="ignore", over="ignore"):
        s2 = sys.nm.sigma2_base(U)
    scales = np.sqrt(np.asarray(sys.nm.gamma))
    # project the state-dependent part, then add the precomputed columns
    proj = np.einsum("bq,qn->bn", s2 * sys.quad_w, sys.basis_quad)
    return proj[:, :, None] * scales[None, None, :] + sys.sigma1_proj[None, :, :]


def drift_eval(sys: GalerkinSystem, t: float, z: np.ndarray) -> np.ndarray:
    """Full drift (linear, reaction, perturbation) in eigen-coordinates."""
    z = np.asarray(z, dtype=float)
    if z.shape != (sys.n_modes,):
        raise ValueError(f"state must have length {sys.n_modes}, got {z.shape}")
    return _drift_batch(sys, t, z[None, :])[0]


def diffusion_eval(sys: GalerkinSystem, t: float, z: np.ndarray) -> np.ndarray:
    """Diffusion matrix with one column of eigen-coefficients per noise
    mode."""
    z = np.asarray(z, dtype=float)
    if z.shape != (sys.n_modes,):
        raise ValueError(f"state must have length {sys.n_modes}, got {z.shape}")
    return _diffusion_batch(sys, t, z[None, :])[0]


def _step_batch(sys: GalerkinSystem, cfg: SchemeConfig, t: float,
                C: np.ndarray, dW: np.ndarray) -> np.ndarray:
    """Advance a batch of states (n_paths, n_modes) by one step using
    increments dW of shape (n_paths, m)."""
    dt = cfg.dt
    B = _diffusion_batch(sys, t, C)
    if cfg.tame_diffusion:
        frob_sq = np.sum(B * B, axis=(1, 2))
        B = B / (1.0 + dt * frob_sq)[:, None, None]
    noise = np.einsum("bnm,bm->bn", B, dW)

    if cfg.scheme == "TamedEuler":
        a = _drift_batch(sys, t, C)
        tamed = dt * a / (1.0 + dt * np.linalg.norm(a, axis=1))[:, None]
        out = C + tamed + noise
    else:
        a = _drift_batch(sys, t, C)
        g = a + C * sys.lam
        tamed = dt * g / (1.0 + dt * np.linalg.norm(g, axis=1))[:, None]
        out = np.exp(-sys.lam * dt) * C + tamed + noise
    if not np.all(np.isfinite(out)):
        raise FloatingPointError("non-finite state after step; dt is too large")
    return out


def step(sys: GalerkinSystem, cfg: SchemeConfig, t: float, z: np.ndarray,
         dW: np.ndarray) -> np.ndarray:
    """Single-state convenience wrapper around the batched stepper."""
    z = np.asarray(z, dtype=float)
    dW = np.asarray(dW, dtype=float)
    if dW.shape != (sys.m,):
        raise ValueError(f"need {sys.m} increments, got {dW.shape}")
    return _step_batch(sys, cfg, t, z[None, :], dW[None, :])[0]


def _warn_if_stiff(sys: GalerkinSystem, cfg: SchemeConfig) -> None:
    if cfg.scheme == "TamedEuler":
        stiffness = cfg.dt * float(np.max(sys.lam))
        if stiffness > cfg.stability_guard:
            warnings.warn(
                f"dt * lambda_max = {stiffness:.3g} exceeds the stability "
                f"guard {cfg.stability_guard}; expect heavy taming bias",
                UserWarning, stacklevel=3)


def path_increments(sys: GalerkinSystem, cfg: SchemeConfig,
                    path_index: int) -> np.ndarray:
    """All Brownian increments for one path, drawn in a single deterministic
    stream keyed by (master_seed, path_index)."""
    rng = np.random.default_rng([cfg.master_seed, path_index])
    return math.sqrt(cfg.dt) * rng.standard_normal((cfg.n_steps, sys.m))


def run_batch(sys: GalerkinSystem, cfg: SchemeConfig, z0: np.ndarray,
              path_indices, p_exp: float = 1.0,
              snapshot_times=None) -> BatchResult:
    """Simulate a batch of paths from a common initial state and accumulate
    the per-path energy functionals.

    z0 is an eigen-coefficient vector of length n_modes.  snapshot_times,
    when given, must lie on the time grid; the state at those times is
    recorded per path.
    """
    _warn_if_stiff(sys, cfg)
    path_indices = np.asarray(list(path_indices), dtype=np.int64)
    z0 = np.asarray(z0, dtype=float)
    if z0.shape != (sys.n_modes,):
        raise ValueError(f"z0 must have length {sys.n_modes}, got {z0.shape}")
    n_paths = path_indices.size
    K = cfg.n_steps
    dt = cfg.dt
    p = sys.op.space.p
    p_dual = p / (p - 1.0)

    snap_idx = None
    snapshots = None
    if snapshot_times is not None:
        snap_idx = []
        for t in snapshot_times:
            k = int(round(t / dt))
            if not 0 <= k <= K or abs(k * dt - t) > 1e-9 * max(1.0, cfg.T):
                raise ValueError(f"snapshot time {t} is not on the time grid")
            snap_idx.append(k)
        snapshots = np.empty((n_paths, len(snap_idx), sys.n_modes))

    dWs = np.empty((n_paths, K, sys.m))
    for b, j in enumerate(path_indices):
        dWs[b] = path_increments(sys, cfg, int(j))

    C = np.tile(z0, (n_paths, 1))
    sup_h = np.linalg.norm(C, axis=1)
    int_v1 = np.zeros(n_paths)
    int_v2 = np.zeros(n_paths)
    int_v3 = np.zeros(n_paths)
    int_dual = np.zeros((n_paths, 3))
    int_hs = np.zeros(n_paths)
    int_weighted = np.zeros(n_paths)

    for k in range(K + 1):
        t = k * dt
        if snap_idx is not None:
            for s, idx in enumerate(snap_idx):
                if idx == k:
                    snapshots[:, s, :] = C
        h_sq = np.sum(C * C, axis=1)
        sup_h = np.maximum(sup_h, np.sqrt(h_sq))
        if k == K:
            break

        U = C @ sys.basis_quad.T
        fu, hu = _nonlinear_at(sys, t, U)
        v1_sq = np.sum(sys.lam * C * C, axis=1)
        v2_p = (np.abs(U) ** p) @ sys.quad_w
        dual1 = np.sum(sys.lam**2 * C * C / (1.0 + sys.lam), axis=1)
        dual2 = (np.abs(fu) ** p_dual) @ sys.quad_w
        dual3 = (hu * hu) @ sys.quad_w
        Bmat = _diffusion_batch(sys, t, C)
        hs = np.sum(Bmat * Bmat, axis=(1, 2))

        int_v1 += dt * v1_sq
        int_v2 += dt * v2_p
        int_v3 += dt * h_sq
        int_dual[:, 0] += dt * dual1
        int_dual[:, 1] += dt * dual2
        int_dual[:, 2] += dt * dual3
        int_hs += dt * hs
        int_weighted += dt * h_sq ** (p_exp - 1.0) * (v1_sq + v2_p + h_sq)

        try:
            C = _step_batch(sys, cfg, t, C, dWs[:, k, :])
        except FloatingPointError as exc:
            raise FloatingPointError(f"{exc} (step {k + 1} of {K})") from None

    return BatchResult(
        path_indices=path_indices, sup_h=sup_h,
        int_v1_sq=int_v1, int_v2_p=int_v2, int_v3_sq=int_v3,
        int_dual=int_dual, int_hs=int_hs, int_weighted=int_weighted,
        final=C, snapshots=snapshots,
    )


def simulate_path(sys: GalerkinSystem, cfg: SchemeConfig, x: np.ndarray,
                  path_index: int,
                  representation: str = "eigen") -> Trajectory:
    """Full trajectory of a single path, with norm series and accumulated
    functionals.  Runs through the same batched kernel as the Monte Carlo
    drivers, so single-path and batched results agree bit for bit."""
    z0 = project_initial(sys, x, representation)
    K = cfg.n_steps
    times = cfg.dt * np.arange(K + 1)
    res = run_batch(sys, cfg, z0, [path_index], snapshot_times=times)
    coeffs = res.snapshots[0]

    h_norms = np.linalg.norm(coeffs, axis=1)
    v1 = np.sqrt(np.maximum(np.sum(sys.lam * coeffs * coeffs, axis=1), 0.0))
    U = coeffs @ sys.basis_quad.T
    p = sys.op.space.p
    v2 = ((np.abs(U) ** p) @ sys.quad_w) ** (1.0 / p)
    return Trajectory(
        times=times, coeffs=coeffs,
        h_norms=h_norms, v1_seminorms=v1, v2_norms=v2,
        sup_h=float(res.sup_h[0]),
        int_v1_sq=float(res.int_v1_sq[0]),
        int_v2_p=float(res.int_v2_p[0]),
        int_v3_sq=float(res.int_v3_sq[0]),
        int_dual=tuple(float(v) for v in res.int_dual[0]),
        int_hs=float(res.int_hs[0]),
    )
