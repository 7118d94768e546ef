"""Per-iteration metric records and their CSV form."""

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

CSV_HEADER = "k,alpha,dist,obj,consensus,balance,state_norm"


@dataclass
class Trace:
    """Metric curves sampled every `cadence` iterations.

    `dist` is absent (None) when no reference solution was supplied; `obj`
    is absent when some agent's objective value is unavailable.  The
    optional `lyapunov` column is populated by the reference flow.
    """

    k: np.ndarray
    alpha: np.ndarray
    consensus: np.ndarray
    balance: np.ndarray
    state_norm: np.ndarray
    dist: Optional[np.ndarray] = None
    obj: Optional[np.ndarray] = None
    lyapunov: Optional[np.ndarray] = field(default=None)

    def __len__(self):
        return self.k.size

    def columns(self):
        cols = {"k": self.k, "alpha": self.alpha, "dist": self.dist, "obj": self.obj,
                "consensus": self.consensus, "balance": self.balance,
                "state_norm": self.state_norm}
        if self.lyapunov is not None:
            cols["lyapunov"] = self.lyapunov
        return cols


def _fmt(v):
    return repr(float(v))


def write_csv(trace: Trace, path):
    cols = trace.columns()
    names = list(cols)
    with open(path, "w") as fh:
        fh.write(",".join(names) + "\n")
        for row in range(len(trace)):
            cells = []
            for name in names:
                col = cols[name]
                if col is None:
                    cells.append("")
                elif name == "k":
                    cells.append(str(int(col[row])))
                else:
                    cells.append(_fmt(col[row]))
            fh.write(",".join(cells) + "\n")


def read_csv(path) -> Trace:
    with open(path) as fh:
        names = fh.readline().strip().split(",")
        rows = [line.strip().split(",") for line in fh if line.strip()]
    data = {name: [] for name in names}
    for cells in rows:
        for name, cell in zip(names, cells):
            data[name].append(cell)
    out = {}
    for name, cells in data.items():
        if all(c == "" for c in cells):
            out[name] = None
        elif name == "k":
            out[name] = np.array([int(c) for c in cells])
        else:
            out[name] = np.array([float(c) for c in cells])
    return Trace(
        k=out["k"], alpha=out["alpha"], consensus=out["consensus"],
        balance=out["balance"], state_norm=out["state_norm"],
        dist=out.get("dist"), obj=out.get("obj"), lyapunov=out.get("lyapunov"),
    )


def mean_trace(traces) -> Trace:
    """Arithmetic mean of metric curves across paths (all on the same grid)."""
    if not traces:
        raise ValueError("no traces to average")
    first = traces[0]
    for t in traces[1:]:
        if not np.array_equal(t.k, first.k):
            raise ValueError("traces are on different iteration grids")

    def avg(name):
        cols = [getattr(t, name) for t in traces]
        if any(c is None for c in cols):
            return None
        return np.mean(np.stack(cols, axis=0), axis=0)

    return Trace(
        k=first.k.copy(),
        alpha=first.alpha.copy(),
        consensus=avg("consensus"),
        balance=avg("balance"),
        state_norm=avg("state_norm"),
        dist=avg("dist"),
        obj=avg("obj"),
        lyapunov=avg("lyapunov"),
    )
