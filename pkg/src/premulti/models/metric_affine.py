"""Metric-affine gravity in the covariant Hamiltonian picture.

Chart layout (78 dims): x^mu (0..3); g_{ab}, a <= b, 10 slots (4..13);
Gamma^n_{lg} at 14 + 16 n + 4 l + g (64 slots).

Symmetric storage: one slot stands for both g_{ab} and g_{ba}.  A
derivative with respect to an off-diagonal slot is therefore the sum of the
two entry derivatives (the off-diagonal doubling).
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from ..exterior import FiberedChart, FormField, FormValue, VectorField, interior, pullback_linear
from ..kernels import kernel_distribution_point, matrix_rank, nullspace, projection_residual
from ..reduction import (
    adapted_system,
    build_quotient,
    check_reduced_multisymplectic,
    project_section,
    recover_section,
)
from ..sections import Section, section_is_solution
from ..solutions import Distribution, PremultisymplecticSystem, is_expanded_solution_point, kernel_related
from .base import Fact, ModelSpec

N = 78
SLOTS: List[Tuple[int, int]] = [(a, b) for a in range(4) for b in range(a, 4)]
SLOT_OF = {}
for _k, (_a, _b) in enumerate(SLOTS):
    SLOT_OF[(_a, _b)] = SLOT_OF[(_b, _a)] = _k
ETA = np.diag([-1.0, 1.0, 1.0, 1.0])
DELTA = np.eye(4)


def g_idx(a: int, b: int) -> int:
    return 4 + SLOT_OF[(a, b)]


def G_idx(n: int, l: int, g: int) -> int:
    return 14 + 16 * n + 4 * l + g


def ma_chart() -> FiberedChart:
    names = [f"x{m}" for m in range(4)]
    names += [f"g{a}{b}" for a, b in SLOTS]
    names += [f"G{n}_{l}{g}" for n in range(4) for l in range(4) for g in range(4)]
    return FiberedChart(4, 74, tuple(names))


def unpack(p) -> Tuple[np.ndarray, np.ndarray]:
    """(g as a symmetric 4x4 matrix, Gamma[n, l, g])."""
    p = np.asarray(p, dtype=float)
    g = np.zeros((4, 4))
    for k, (a, b) in enumerate(SLOTS):
        g[a, b] = g[b, a] = p[4 + k]
    return g, p[14:78].reshape(4, 4, 4)


def pack(x, g, Gam) -> np.ndarray:
    p = np.zeros(N)
    p[:4] = x
    for k, (a, b) in enumerate(SLOTS):
        p[4 + k] = g[a, b]
    p[14:] = np.asarray(Gam, dtype=float).ravel()
    return p


def torsion(Gam) -> np.ndarray:
    """T^a_{bc} = Gamma^a_{bc} - Gamma^a_{cb}."""
    return Gam - Gam.transpose(0, 2, 1)


def trace_torsion(Gam) -> np.ndarray:
    """T^m_{m c}."""
    return np.einsum("mmc->c", torsion(Gam))


def constraint_t(Gam) -> np.ndarray:
    """t^a_{bc} = T^a_{bc} - 1/3 delta^a_b T^m_{mc} + 1/3 delta^a_c T^m_{mb}."""
    T = torsion(Gam)
    tr = trace_torsion(Gam)
    return T - np.einsum("ab,c->abc", DELTA, tr) / 3.0 + np.einsum("ac,b->abc", DELTA, tr) / 3.0


def _t_matrix() -> np.ndarray:
    cols = []
    for i in range(64):
        e = np.zeros(64)
        e[i] = 1.0
        cols.append(constraint_t(e.reshape(4, 4, 4)).ravel())
    return np.array(cols).T


_T_MAT = _t_matrix()
_T_NULL = nullspace(_T_MAT)  # rows span {Gamma : t = 0}


def project_to_locus(Gam) -> np.ndarray:
    """Orthogonal projection of Gamma onto t = 0."""
    v = np.asarray(Gam, dtype=float).ravel()
    return (_T_NULL.T @ (_T_NULL @ v)).reshape(4, 4, 4)


# ---------------------------------------------------------------------------
# scalar pieces and their analytic derivatives


def metric_weight(g) -> Tuple[float, np.ndarray]:
    det = np.linalg.det(g)
    if abs(det) < 1e-12:
        raise ValueError("degenerate metric at sample point")
    return float(np.sqrt(abs(det))), np.linalg.inv(g)


def P_tensor(g) -> np.ndarray:
    """sqrt|det g| g^{ab}."""
    s, gi = metric_weight(g)
    return s * gi


def dP_entry(g) -> np.ndarray:
    """d(sqrt|g| g^{ab}) / d g_{rs}, g_{rs} treated as an independent entry.

    d sqrt|g| / d g_{rs} = 1/2 sqrt|g| g^{sr};  d g^{ab} / d g_{rs} = -g^{ar} g^{sb}.
    """
    s, gi = metric_weight(g)
    return s * (0.5 * np.einsum("ab,sr->abrs", gi, gi) - np.einsum("ar,sb->abrs", gi, gi))


def dP_slot(g) -> np.ndarray:
    """Derivative with respect to the 10 storage slots, shape (4, 4, 10)."""
    D = dP_entry(g)
    out = np.zeros((4, 4, 10))
    for k, (r, s) in enumerate(SLOTS):
        out[:, :, k] = D[:, :, r, s] + (D[:, :, s, r] if r != s else 0.0)
    return out


def Q_tensor(Gam) -> np.ndarray:
    """Q_{ba} = Gamma^c_{bs} Gamma^s_{ca} - Gamma^c_{ba} Gamma^s_{sc}."""
    return np.einsum("cbs,sca->ba", Gam, Gam) - np.einsum("cba,ssc->ba", Gam, Gam)


def hamiltonian(p) -> float:
    """H = sqrt|g| g^{ab} Q_{ba}."""
    g, Gam = unpack(p)
    return float(np.einsum("ab,ba->", P_tensor(g), Q_tensor(Gam)))


def dH_dGamma(P, Gam) -> np.ndarray:
    """dH / dGamma^x_{yz}, shape (4, 4, 4)."""
    t1 = np.einsum("ay,zxa->xyz", P, Gam) + np.einsum("zb,ybx->xyz", P, Gam)
    t2 = np.einsum("zy,ssx->xyz", P, Gam) + np.einsum("xy,ab,zba->xyz", DELTA, P, Gam)
    return t1 - t2


def momenta_f(g) -> np.ndarray:
    """f^{m b c}_a = sqrt|g| (delta^m_a g^{bc} - delta^b_a g^{mc}), indexed [m, b, c, a]."""
    P = P_tensor(g)
    return np.einsum("ma,bc->mbca", DELTA, P) - np.einsum("ba,mc->mbca", DELTA, P)


def dmomenta_slot(g) -> np.ndarray:
    """d f^{mbc}_a / d slot, shape (4, 4, 4, 4, 10)."""
    dP = dP_slot(g)
    return np.einsum("ma,bck->mbcak", DELTA, dP) - np.einsum("ba,mck->mbcak", DELTA, dP)


def omega_H() -> FormField:
    """dH ^ d^4x - d f^{mbc}_a ^ dGamma^a_{bc} ^ d^3x_m."""
    chart = ma_chart()
    vol = (0, 1, 2, 3)

    def ev(p):
        g, Gam = unpack(p)
        P = P_tensor(g)
        coeffs = {}
        dHg = np.einsum("abk,ba->k", dP_slot(g), Q_tensor(Gam))
        for k in range(10):
            if dHg[k] != 0.0:
                coeffs[vol + (4 + k,)] = dHg[k]
        dHG = dH_dGamma(P, Gam)
        for x, y, z in itertools.product(range(4), repeat=3):
            c = dHG[x, y, z]
            if c != 0.0:
                coeffs[vol + (G_idx(x, y, z),)] = c
        # d(slot) ^ dGamma ^ d^3x_m sorts to (base minus m, slot, Gamma) with sign (-1)^m
        df = dmomenta_slot(g)
        for m_ in range(4):
            rest = tuple(i for i in vol if i != m_)
            sign = -1.0 if m_ % 2 else 1.0
            for b, c, a in itertools.product(range(4), repeat=3):
                row = df[m_, b, c, a]
                gi = G_idx(a, b, c)
                for k in np.flatnonzero(row):
                    key = rest + (4 + int(k), gi)
                    coeffs[key] = coeffs.get(key, 0.0) - sign * row[k]
        return FormValue._raw(5, N, coeffs)

    return FormField(chart, 5, ev)


def kernel_vectors() -> List[np.ndarray]:
    """delta^a_c d/dGamma^a_{bc}, b = 0..3."""
    out = []
    for b in range(4):
        v = np.zeros(N)
        for a in range(4):
            v[G_idx(a, b, a)] = 1.0
        out.append(v)
    return out


# ---------------------------------------------------------------------------
# sampling on the constraint locus


def sample_locus(count: int, seed: int = 0, metric_scale: float = 0.1, gamma_scale: float = 0.3) -> List[np.ndarray]:
    """Lorentzian g near diag(-1,1,1,1) and Gamma projected onto t = 0."""
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(count):
        x = rng.uniform(-1, 1, 4)
        dg = rng.normal(size=(4, 4)) * metric_scale
        g = ETA + 0.5 * (dg + dg.T)
        Gam = project_to_locus(rng.normal(size=(4, 4, 4)) * gamma_scale)
        out.append(pack(x, g, Gam))
    return out


# ---------------------------------------------------------------------------
# solution family


def _K_constraint_rows():
    """Rows of the linear conditions on K[a, b, c, m] (256 unknowns).

    (1) K^n_{n c, m} = 0
    (2) K^n_{b c, n} + K^n_{c b, n} = 0
    (3) K^a_{bc,m} - K^a_{cb,m} + 1/3 (d^a_b K^n_{cn,m} - d^a_c K^n_{bn,m}) = rhs
    Rows of (3) are returned separately since their right-hand side depends
    on Gamma.
    """
    idx = lambda a, b, c, m: ((a * 4 + b) * 4 + c) * 4 + m
    homo = []
    for c, m in itertools.product(range(4), repeat=2):
        r = np.zeros(256)
        for n in range(4):
            r[idx(n, n, c, m)] += 1.0
        homo.append(r)
    for b, c in itertools.combinations_with_replacement(range(4), 2):
        r = np.zeros(256)
        for n in range(4):
            r[idx(n, b, c, n)] += 1.0
            r[idx(n, c, b, n)] += 1.0
        homo.append(r)
    anti = []
    keys = []
    for a, m in itertools.product(range(4), repeat=2):
        for b, c in itertools.combinations(range(4), 2):
            r = np.zeros(256)
            r[idx(a, b, c, m)] += 1.0
            r[idx(a, c, b, m)] -= 1.0
            for n in range(4):
                r[idx(n, c, n, m)] += DELTA[a, b] / 3.0
                r[idx(n, b, n, m)] -= DELTA[a, c] / 3.0
            anti.append(r)
            keys.append((a, b, c, m))
    return np.array(homo), np.array(anti), keys


_K_HOMO, _K_ANTI, _K_ANTI_KEYS = _K_constraint_rows()
_K_ROWS = np.vstack([_K_HOMO, _K_ANTI])
_K_PINV = np.linalg.pinv(_K_ROWS, rcond=1e-10)
_K_NULLPROJ = np.eye(256) - _K_PINV @ _K_ROWS


def K_rhs(Gam) -> np.ndarray:
    """Right-hand side of the antisymmetric-part condition, per (a, b<c, m)."""
    Z = np.einsum("lmc,abl->abcm", Gam, Gam)  # Gamma^l_{m c} Gamma^a_{b l}
    tr1 = np.einsum("lmc,nnl->cm", Gam, Gam)  # Gamma^l_{m c} Gamma^n_{n l}
    tr2 = np.einsum("lmn,ncl->cm", Gam, Gam)  # Gamma^l_{m n} Gamma^n_{c l}
    out = []
    for a, b, c, m in _K_ANTI_KEYS:
        val = -(Z[a, b, c, m] - Z[a, c, b, m])
        val += (DELTA[a, b] * tr1[c, m] - DELTA[a, c] * tr1[b, m]) / 3.0
        val -= (DELTA[a, b] * tr2[c, m] - DELTA[a, c] * tr2[b, m]) / 3.0
        out.append(val)
    return np.array(out)


def K_condition_residual(K, Gam) -> float:
    k = np.asarray(K, dtype=float).ravel()
    rhs = np.concatenate([np.zeros(len(_K_HOMO)), K_rhs(Gam)])
    return float(np.max(np.abs(_K_ROWS @ k - rhs)))


@dataclass(frozen=True)
class CKParams:
    """Constant C[b, n] and the free part of K (projected onto the homogeneous
    solution space); the particular part of K follows Gamma pointwise."""

    C: np.ndarray
    K_free: np.ndarray

    def K_at(self, Gam) -> np.ndarray:
        rhs = np.concatenate([np.zeros(len(_K_HOMO)), K_rhs(Gam)])
        k = _K_PINV @ rhs + self.K_free
        return k.reshape(4, 4, 4, 4)


def random_ck(rng: np.random.Generator, scale: float = 0.5) -> CKParams:
    C = rng.normal(size=(4, 4)) * scale
    K_free = _K_NULLPROJ @ (rng.normal(size=256) * scale)
    return CKParams(C, K_free)


def family_components(p, C, K) -> np.ndarray:
    """Vertical parts of X_0..X_3, shape (4, 78)."""
    g, Gam = unpack(p)
    tr = trace_torsion(Gam)  # T^l_{l n}
    out = np.zeros((4, N))
    ggam = np.einsum("sl,lnr->nsr", g, Gam)  # g_{s l} Gamma^l_{n r}
    GG = np.einsum("lng,abl->nabg", Gam, Gam)  # Gamma^l_{n g} Gamma^a_{b l}
    for n in range(4):
        out[n, n] = 1.0
        for k, (s, r) in enumerate(SLOTS):
            out[n, 4 + k] = ggam[n, s, r] + ggam[n, r, s] + 2.0 / 3.0 * g[s, r] * tr[n]
        comp = GG[n] + np.einsum("b,ag->abg", C[:, n], DELTA) + K[:, :, :, n]
        out[n, 14:] = comp.ravel()
    return out


def family_generator(params: CKParams, n: int) -> Callable[[np.ndarray], np.ndarray]:
    def X(p):
        _, Gam = unpack(p)
        return family_components(p, params.C, params.K_at(Gam))[n]

    return X


def family_distribution(params: CKParams, label: str = "") -> Distribution:
    chart = ma_chart()
    return Distribution(
        chart, tuple(VectorField(chart, family_generator(params, n), f"X{n}") for n in range(4)), label, 4
    )


def torsion_trace_rates(p, params: CKParams) -> np.ndarray:
    """X_n(T^l_{m l}) for all (m, n), shape (4, 4)."""
    _, Gam = unpack(p)
    comps = family_components(p, params.C, params.K_at(Gam))
    out = np.zeros((4, 4))
    for n in range(4):
        dG = comps[n, 14:].reshape(4, 4, 4)
        dT = dG - dG.transpose(0, 2, 1)
        out[:, n] = np.einsum("lml->m", dT)
    return out


def fix_torsion_trace(p, params: CKParams) -> Tuple[np.ndarray, int]:
    """The C making X_n(T^l_{m l}) = 0 for the class of params.K_free.

    The rates are affine in C; returns (C, rank of the linear part).
    """
    base = CKParams(np.zeros((4, 4)), params.K_free)
    r0 = torsion_trace_rates(p, base).ravel()
    cols = []
    for i in range(16):
        e = np.zeros(16)
        e[i] = 1.0
        cols.append(torsion_trace_rates(p, CKParams(e.reshape(4, 4), params.K_free)).ravel() - r0)
    A = np.array(cols).T
    rank = matrix_rank(A)
    C = np.linalg.lstsq(A, -r0, rcond=None)[0]
    return C.reshape(4, 4), rank


# ---------------------------------------------------------------------------
# the constraint locus E_f as a chart of its own


def ef_embedding() -> np.ndarray:
    """Jacobian (78, 58) of the linear embedding (x, g, s) -> (x, g, Gamma = N^T s)."""
    J = np.zeros((N, 58))
    J[:14, :14] = np.eye(14)
    J[14:, 14:] = _T_NULL.T
    return J


EF_EMBED = ef_embedding()


def ef_chart() -> FiberedChart:
    names = ma_chart().names[:14] + tuple(f"s{k}" for k in range(44))
    return FiberedChart(4, 54, names)


def to_ef(p) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    return np.concatenate([p[:14], _T_NULL @ p[14:]])


def from_ef(q) -> np.ndarray:
    return EF_EMBED @ np.asarray(q, dtype=float)


def ef_system() -> PremultisymplecticSystem:
    """Omega_H pulled back to t = 0."""
    chart = ef_chart()
    omega = omega_H()

    def ev(q):
        return pullback_linear(EF_EMBED, omega(from_ef(q)))

    return PremultisymplecticSystem(chart, FormField(chart, 5, ev), "metric_affine|E_f")


def ef_kernel_vectors() -> List[np.ndarray]:
    return [to_ef(v) for v in kernel_vectors()]


def _pivot_rows(V: np.ndarray, candidates: Sequence[int]) -> List[int]:
    """Greedy pivoting: one candidate row per column of V with a nonsingular minor."""
    V = np.array(V, dtype=float)
    chosen: List[int] = []
    for j in range(V.shape[1]):
        i = max((c for c in candidates if c not in chosen), key=lambda c: abs(V[c, j]))
        chosen.append(i)
        col = V[:, j] / V[i, j]
        for k in range(j + 1, V.shape[1]):
            V[:, k] -= V[i, k] * col
    return chosen


def ma_adapted():
    """E_f coordinates in which the four kernel fields replace four s coordinates.

    Returns (adapted system, AdaptedCoordinates).
    """
    system = ef_system()
    kv = ef_kernel_vectors()
    replaced = _pivot_rows(np.array(kv).T, range(14, 58))
    return adapted_system(system, kv, replaced, [f"k{b}" for b in range(4)])


def minkowski_section(shift=None) -> Section:
    """Flat metric with Gamma^a_{bc} = delta^a_c shift_b, on the E_f chart.

    shift = 0 is the vacuum; nonzero shifts move along the kernel.
    """
    s = np.zeros(4) if shift is None else np.asarray(shift, dtype=float)
    Gam = np.einsum("ac,b->abc", DELTA, s)
    fiber = to_ef(pack(np.zeros(4), ETA, Gam))[4:]
    return Section.constant(ef_chart(), fiber, "minkowski")


def model_metric_affine(points: int = 5, seed: int = 0) -> ModelSpec:
    chart = ma_chart()
    system = PremultisymplecticSystem(chart, omega_H(), "metric_affine")
    fsys = ef_system()
    kvecs = kernel_vectors()
    spec = ModelSpec(
        "metric_affine",
        system,
        [VectorField.constant(chart, v) for v in kvecs],
        sampler=lambda count, s: sample_locus(count, s),
    )
    pts = spec.sample_points(points, seed)
    rng = np.random.default_rng(seed)
    member = random_ck(rng)
    other_C = CKParams(member.C + rng.normal(size=(4, 4)), member.K_free)
    other_K = CKParams(member.C, member.K_free + _K_NULLPROJ @ rng.normal(size=256))
    spec.distributions = {
        "member": family_distribution(member, "member"),
        "same_K": family_distribution(other_C, "same_K"),
        "other_K": family_distribution(other_K, "other_K"),
    }
    spec.sections = {"vacuum": minkowski_section()}
    spec.extras.update(member=member, other_C=other_C, other_K=other_K, ef_system=fsys)

    def kernel():
        worst = 0.0
        for p in pts:
            omega = system.at(p)
            worst = max(worst, max(interior(v, omega).norm() for v in kvecs))
        return worst <= 1e-7, {"residual": worst}

    def kernel_span():
        dims, dist = set(), 0.0
        for p in pts[:2]:
            rep = kernel_distribution_point(fsys.at(to_ef(p)), fsys.chart)
            dims.add((rep.ker1_dim, rep.K_dim))
            dist = max(dist, projection_residual(ef_kernel_vectors(), rep.K_basis))
        ambient = kernel_distribution_point(system.at(pts[0]), chart)
        (k1, kd), = dims if len(dims) == 1 else [(-1, -1)]
        return (k1, kd, dist <= 1e-7), {"residual": dist, "ambient_ker1_dim": ambient.ker1_dim}

    def solution():
        reps = [is_expanded_solution_point(spec.distributions["member"], system, p, 1e-6) for p in pts]
        return all(r.passed for r in reps), {"residual": max(r.residual for r in reps)}

    def tangent():
        worst = 0.0
        for p in pts:
            V = spec.distributions["member"].at(p)
            for row in V:
                worst = max(worst, float(np.abs(constraint_t(row[14:].reshape(4, 4, 4))).max()))
        return worst <= 1e-10, {"residual": worst}

    def related_C():
        return kernel_related(spec.distributions["member"], spec.distributions["same_K"], system, pts, 1e-6)[0], {}

    def related_K():
        return kernel_related(spec.distributions["member"], spec.distributions["other_K"], system, pts, 1e-6)[0], {}

    def torsion_fix():
        results = []
        for p in pts:
            C, rank = fix_torsion_trace(p, member)
            C2, _ = fix_torsion_trace(p, other_C)
            fixed = CKParams(C, member.K_free)
            resid = float(np.abs(torsion_trace_rates(p, fixed)).max())
            results.append((rank, resid, float(np.abs(C - C2).max())))
        ok = all(r == 16 and res <= 1e-9 and d <= 1e-9 for r, res, d in results)
        return ok, {"rank_residual_classdiff": results}

    def reduced():
        new_sys, coords = ma_adapted()
        apts = [coords.to_adapted(to_ef(p)) for p in pts]
        red = build_quotient(new_sys, list(coords.replaced), apts)
        chk = check_reduced_multisymplectic(red, [red.quotient.xi(q) for q in apts[:2]])
        ok = red.certificate["pullback_residual"] <= 1e-9
        return (ok, chk.closed, chk.nondegenerate), {"certificate": red.certificate, "check": chk}

    def section_transport():
        new_sys, coords = ma_adapted()
        apts = [coords.to_adapted(to_ef(p)) for p in pts]
        red = build_quotient(new_sys, list(coords.replaced), apts)
        base_pts = [p[:4] for p in pts]
        vac = coords.section(minkowski_section())
        ok1 = section_is_solution(vac, new_sys, base_pts)[0]
        proj = project_section(vac, red.quotient)
        ok2 = section_is_solution(proj, red.system, base_pts)[0]
        ok3 = all(
            section_is_solution(recover_section(proj, red.quotient.with_beta({i: b for i in coords.replaced})), new_sys, base_pts)[0]
            for b in (0.4, -1.3)
        )
        return (ok1, ok2, ok3), {}

    spec.facts = [
        Fact("ma.kernel.fields", "interior", kernel, True),
        Fact("ma.kernel.span", "kernel_distribution_point", kernel_span, (4, 4, True)),
        Fact("ma.solution.family", "is_expanded_solution_point", solution, True),
        Fact("ma.solution.tangent", "constraint_t", tangent, True),
        Fact("ma.related.same_K", "kernel_related", related_C, True),
        Fact("ma.related.other_K", "kernel_related", related_K, False),
        Fact("ma.torsion_fix", "fix_torsion_trace", torsion_fix, True),
        Fact("ma.quotient", "build_quotient", reduced, (True, True, True)),
        Fact("ma.section.transport", "section_is_solution", section_transport, (True, True, True)),
    ]
    return spec
