"""Euclidean projection onto polyhedra {x : R x <= l}.

The hot path certifies exactness through the KKT system of the projection
problem: a candidate built from a working set of rows is accepted only when
its multipliers are nonnegative and the full constraint system is satisfied.
Points that resist certification fall back to Dykstra's alternating
projections over the halfspaces (iteration cap 10_000, exit tolerance 1e-10).
"""

import numpy as np

from .errors import ProjectionError

# slack for "already satisfies the constraint"
FEAS_TOL = 1e-12
# membership tolerance every returned point must meet
MEMBER_TOL = 1e-9

DYKSTRA_CAP = 10_000
DYKSTRA_TOL = 1e-10


def row_norms_sq(R):
    return np.einsum("...pm,...pm->...p", R, R)


def _face_solve(y, Ra, la):
    """Project y onto the affine face {x : Ra x = la}; returns (x, mu)."""
    G = Ra @ Ra.T
    rhs = Ra @ y - la
    try:
        mu = np.linalg.solve(G, rhs)
    except np.linalg.LinAlgError:
        mu = np.linalg.lstsq(G, rhs, rcond=1e-10)[0]
    return y - Ra.T @ mu, mu


def _active_set(y, R, l, max_rounds=8):
    """Certified projection via working-set rounds; None when not certified.

    Starts from the violated rows, drops rows with negative multipliers and
    adds rows the candidate violates.  On success the result is exact up to
    the linear-solve roundoff.
    """
    s = R @ y - l
    act = set(np.nonzero(s > FEAS_TOL)[0].tolist())
    if not act:
        return y
    p = R.shape[0]
    for _ in range(max_rounds):
        rows = sorted(act)
        x, mu = _face_solve(y, R[rows], l[rows])
        neg = mu < -1e-12
        if neg.any():
            for k in np.nonzero(neg)[0]:
                act.discard(rows[k])
            if not act:
                return y if (s <= FEAS_TOL).all() else None
            continue
        newly = np.nonzero(R @ x - l > 1e-11)[0]
        if newly.size == 0:
            return x
        act |= set(newly.tolist())
        if len(act) > p:
            return None
    return None


def dykstra(y, R, l, rn2=None, tol=DYKSTRA_TOL, cap=DYKSTRA_CAP):
    """Dykstra's corrected alternating projections over the halfspaces.

    Exits when the largest coordinate change over a full sweep drops below
    `tol`.  Raises ProjectionError when the sweep cap is reached while the
    iterate still violates membership by more than MEMBER_TOL.
    """
    if rn2 is None:
        rn2 = row_norms_sq(R)
    p, m = R.shape
    x = y.astype(float).copy()
    corr = np.zeros((p, m))
    delta = np.inf
    for _ in range(cap):
        delta = 0.0
        for j in range(p):
            w = x + corr[j]
            viol = (R[j] @ w - l[j]) / rn2[j]
            xn = w - viol * R[j] if viol > 0.0 else w
            corr[j] = w - xn
            dd = np.abs(xn - x).max()
            if dd > delta:
                delta = dd
            x = xn
        if delta < tol:
            return x
    worst = float((R @ x - l).max())
    if worst > MEMBER_TOL:
        raise ProjectionError(
            f"Dykstra hit the {cap}-sweep cap with membership violation "
            f"{worst:.3e} and last sweep change {delta:.3e}",
            membership_violation=worst,
            sweep_change=delta,
        )
    return x


def project_polyhedron(y, R, l, rn2=None):
    """Exact-where-certified projection of a single point."""
    if rn2 is None:
        rn2 = row_norms_sq(R)
    s = R @ y - l
    if (s <= FEAS_TOL).all():
        return np.array(y, dtype=float)
    x = _active_set(y, R, l)
    if x is None:
        x = dykstra(y, R, l, rn2)
    return x


def project_polyhedron_batch(Y, R, l, rn2):
    """Project the rows of Y onto per-row polyhedra.

    Y is (n, m); R is (n, p, m); l and rn2 are (n, p).  Feasible rows are
    returned untouched; single-violation rows use the closed-form halfspace
    projection; rows with up to m violated constraints try one stacked face
    solve; everything else goes through the per-row certified path.
    """
    S = np.einsum("npm,nm->np", R, Y) - l
    badm = S > FEAS_TOL
    if not badm.any():
        return Y
    X = Y.copy()
    idx = np.nonzero(badm.any(axis=1))[0]
    nv = badm[idx].sum(axis=1)
    m = Y.shape[1]
    stubborn = []

    one = idx[nv == 1]
    if one.size:
        j = np.argmax(badm[one], axis=1)
        Rj = R[one, j]
        cand = Y[one] - (S[one, j] / rn2[one, j])[:, None] * Rj
        ok = (np.einsum("npm,nm->np", R[one], cand) <= l[one] + FEAS_TOL).all(axis=1)
        X[one[ok]] = cand[ok]
        stubborn.extend(one[~ok])

    for v in range(2, m + 1):
        sub = idx[nv == v]
        if not sub.size:
            continue
        g = sub.size
        rows = np.nonzero(badm[sub])[1].reshape(g, v)
        Ra = R[sub[:, None], rows]
        G = Ra @ np.swapaxes(Ra, 1, 2)
        rhs = S[sub[:, None], rows]
        try:
            mu = np.linalg.solve(G, rhs[..., None])[..., 0]
            cand = Y[sub] - np.einsum("gvm,gv->gm", Ra, mu)
            ok = (mu >= -1e-12).all(axis=1) & (
                np.einsum("npm,nm->np", R[sub], cand) <= l[sub] + 1e-11
            ).all(axis=1)
            X[sub[ok]] = cand[ok]
            stubborn.extend(sub[~ok])
        except np.linalg.LinAlgError:
            stubborn.extend(sub)

    stubborn.extend(idx[nv > m])
    for i in stubborn:
        X[i] = project_polyhedron(Y[i], R[i], l[i], rn2[i])
    return X


def strict_interior_point(R, l, slack_threshold=1e-6, max_iter=2000):
    """Search for a strictly feasible point of {x : R x <= l}.

    Maximizes the normalized slack min_j (l_j - r_j.x)/||r_j|| by subgradient
    ascent with diminishing steps, starting from a least-squares anchor.
    Returns (point, slack); slack > `slack_threshold` certifies a nonempty
    interior.
    """
    norms = np.sqrt(row_norms_sq(R))
    Rh = R / norms[:, None]
    lh = l / norms

    x = np.linalg.lstsq(Rh, lh - 1.0, rcond=None)[0]
    slack = float((lh - Rh @ x).min())
    best_x, best_slack = x.copy(), slack
    if best_slack > 1e-3:
        return best_x, best_slack

    t0 = 1.0 + float(np.abs(lh).max())
    for k in range(max_iter):
        s = lh - Rh @ x
        j = int(np.argmin(s))
        if s[j] > best_slack:
            best_slack = float(s[j])
            best_x = x.copy()
            if best_slack > 1e-3:
                break
        x = x - (t0 / np.sqrt(k + 1.0)) * Rh[j]
    return best_x, best_slack
