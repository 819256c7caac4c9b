"""Long-format CSV reading and writing for balanced panels."""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from .panel import PanelData, PanelError

__all__ = ["load_csv", "write_csv", "sort_labels"]


def sort_labels(labels) -> list[str]:
    """Sort numerically when every label parses as a number, else lexically."""
    labels = list(labels)
    try:
        return sorted(labels, key=float)
    except ValueError:
        return sorted(labels)


def load_csv(path, id_col: str, time_col: str, y_col: str, x_cols,
             intercept: bool = False) -> PanelData:
    """Read one row per ``(id, t)`` into a balanced :class:`PanelData`.

    Time values are mapped to ``1..T`` in sorted order and kept as labels;
    individuals keep their first-appearance order. With ``intercept`` a
    constant column named ``const`` is prepended.
    """
    x_cols = list(x_cols)
    roles = [id_col, time_col, y_col, *x_cols]
    if len(set(roles)) != len(roles):
        raise PanelError(f"column roles must be distinct, got {roles}")
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise PanelError(f"{path}: empty file")
        missing = [c for c in roles if c not in reader.fieldnames]
        if missing:
            raise PanelError(f"{path}: missing columns {missing}")
        records = {}
        ids: dict[str, None] = {}
        times: set[str] = set()
        # row 1 is the header
        for row_no, row in enumerate(reader, start=2):
            i, t = row[id_col].strip(), row[time_col].strip()
            if (i, t) in records:
                raise PanelError(f"{path}: duplicate observation for id={i!r}, t={t!r} (row {row_no})")
            values = []
            for col in [y_col, *x_cols]:
                cell = row[col]
                try:
                    values.append(float(cell))
                except (TypeError, ValueError):
                    raise PanelError(
                        f"{path}: non-numeric value {cell!r} in column {col!r} (row {row_no})"
                    ) from None
            records[(i, t)] = values
            ids.setdefault(i)
            times.add(t)
    if not records:
        raise PanelError(f"{path}: no data rows")
    id_list = list(ids)
    t_list = sort_labels(times)
    gaps = [(i, t) for i in id_list for t in t_list if (i, t) not in records]
    if gaps:
        shown = ", ".join(f"(id={i}, t={t})" for i, t in gaps[:10])
        more = f" and {len(gaps) - 10} more" if len(gaps) > 10 else ""
        raise PanelError(f"{path}: unbalanced panel, missing {shown}{more}")
    data = np.array([[records[(i, t)] for i in id_list] for t in t_list])  # (T, N, 1+p)
    y, x = data[:, :, 0], data[:, :, 1:]
    names = list(x_cols)
    if intercept:
        x = np.concatenate([np.ones(y.shape + (1,)), x], axis=2)
        names = ["const", *names]
    return PanelData(y=y, x=x, regressor_names=tuple(names), has_intercept=intercept,
                     time_labels=tuple(t_list), ids=tuple(id_list))


def write_csv(panel: PanelData, path, id_col: str = "id", time_col: str = "t",
              y_col: str = "y", skip_intercept: bool = True) -> None:
    """Write a panel in long format with full float precision."""
    cols = list(range(panel.n_regressors))
    if skip_intercept and panel.has_intercept:
        cols = cols[1:]
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow([id_col, time_col, y_col, *(panel.regressor_names[k] for k in cols)])
        for i, ident in enumerate(panel.ids):
            for t, label in enumerate(panel.time_labels):
                w.writerow([ident, label, repr(float(panel.y[t, i])),
                            *(repr(float(panel.x[t, i, k])) for k in cols)])
