"""Atomic file output: CSV tables, JSON reports and gnuplot scripts.

Every writer goes through :func:`atomic_write`, so an interrupted run leaves
either the previous file or the complete new one, never a truncated file.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
import tempfile
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np


def atomic_write(path: str | os.PathLike, data: str | bytes) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    mode = "wb" if isinstance(data, bytes) else "w"
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, mode, **({} if mode == "wb" else {"encoding": "utf-8", "newline": ""})) as fh:
            fh.write(data)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def fmt(x) -> str:
    """Shortest round-tripping text for a number; fixed for reproducible files."""
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return repr(x)


def write_csv(path, header: Sequence[str], rows: Iterable[Sequence]) -> Path:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([v if isinstance(v, str) else fmt(v) for v in row])
    return atomic_write(path, buf.getvalue())


def to_jsonable(obj):
    """Recursively convert numpy scalars/arrays and complex numbers to JSON types.

    Non-finite floats become strings so the output stays strict JSON.
    """
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (complex, np.complexfloating)):
        return {"re": to_jsonable(obj.real), "im": to_jsonable(obj.imag)}
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else fmt(x)
    return obj


def dumps(obj) -> str:
    return json.dumps(to_jsonable(obj), indent=2, sort_keys=True, allow_nan=False) + "\n"


def write_json(path, obj) -> Path:
    return atomic_write(path, dumps(obj))


# -- gnuplot -----------------------------------------------------------------------

def lightcone_gnuplot(data_csv: str, png: str, *, v_lr: float, v_front: float, intercept: float,
                      t_max: float) -> str:
    """Heat map of ``log10 ||K(t,d)||`` over the (d, t) plane with the two cone lines."""
    return f"""# light-cone heat map; run: gnuplot lightcone.gp
set datafile separator ','
set terminal pngcairo size 900,650
set output '{png}'
set xlabel 'block offset d'
set ylabel 't'
set cblabel 'log10 ||K(t,d)||'
set cbrange [-16:0]
set yrange [0:{fmt(t_max)}]
set palette rgbformulae 33,13,10
set key top left
plot '{data_csv}' using 2:1:(log10($3 > 1e-16 ? $3 : 1e-16)) skip 1 with points pointtype 5 pointsize 0.6 palette notitle, \\
     (x - ({fmt(intercept)})) / {fmt(v_front)} with lines lw 2 lc rgb 'white' title 'fitted front', \\
     x / {fmt(v_lr)} with lines lw 2 dt 2 lc rgb 'black' title 'C2/mu cone'
"""


def scaling_gnuplot(data_csv: str, png: str, *, p: int) -> str:
    """Log-log plot of the velocity columns of the sweep table against ``mu``."""
    return f"""# velocity scaling; run: gnuplot scaling.gp
set datafile separator ','
set terminal pngcairo size 800,600
set output '{png}'
set logscale xy
set xlabel 'mu'
set ylabel 'velocity (blocks per unit time)'
set key bottom left
plot '{data_csv}' using 1:4 skip 1 with linespoints title 'v_asy exact (A)', \\
     '' using 1:5 skip 1 with linespoints title 'v_asy exact (B)', \\
     '' using 1:6 skip 1 with linespoints title 'v_asy upper', \\
     '' using 1:7 skip 1 with lines dt 2 title 'C3/mu^{p - 1}', \\
     '' using 1:3 skip 1 with lines dt 3 title 'C2/mu', \\
     '' using 1:2 skip 1 with points pt 7 title 'v_front', \\
     '' using 1:8 skip 1 with points pt 9 title 'v_asy direct'
"""
