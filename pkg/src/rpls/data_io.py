"""Connectivity preprocessing, dataset files, and model/report serialization.

File formats
------------
Matrix / time-series files
    One subject per file; rows separated by newlines, values by commas,
    tabs or spaces.  Blank lines and lines starting with ``#`` are ignored.
Manifest
    Delimited text with header ``subject_id,path``; relative paths are
    resolved against the manifest's directory.
Phenotype table
    Delimited text with a header row; the first column holds subject ids,
    the remaining columns are responses.  Numeric columns are read as is; a
    text column with exactly two levels is coded 0/1 in sorted level order.
    Missing values (empty, ``NA``, ``nan``) are errors.
Network map
    Delimited text with header ``roi,network``, one row per ROI in matrix
    order.
Model file
    JSON object with ``"format": "rpls-model"`` and an integer ``"version"``.
    Floats are written with ``repr``, which round-trips exactly.
Matrix outputs
    Delimited text, one row per line, ``%.17g`` formatting.
"""

import csv
import json
import math
import os
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import spd
from .exceptions import (
    ConstantSignal,
    EmptyInput,
    InvalidInput,
    NotPositiveDefinite,
    OutOfDomain,
    ParseError,
)
from .frechet import FrechetResult
from .manifolds import make_manifold
from .model import RplsModel
from .nipals import BetaPls, PlsFit

MODEL_FORMAT = "rpls-model"
MODEL_VERSION = 1
FLOAT_FMT = "%.17g"


# --- connectivity preprocessing ---------------------------------------------

def correlation_from_timeseries(ts):
    """Pearson correlation matrix between the columns of a ``T x R`` series."""
    ts = np.asarray(ts, dtype=float)
    if ts.ndim != 2 or ts.shape[0] < 3:
        raise InvalidInput(f"time series must be T x R with T >= 3, got shape {ts.shape}")
    if not np.all(np.isfinite(ts)):
        raise InvalidInput("time series contains non-finite values")
    sd = ts.std(axis=0)
    flat = np.flatnonzero(sd <= np.finfo(float).eps * np.maximum(np.abs(ts).max(axis=0), 1.0))
    if flat.size:
        raise ConstantSignal(f"column {flat[0]} of the time series is constant", column=int(flat[0]))
    F = np.clip(spd.symmetrize(np.corrcoef(ts, rowvar=False)), -1.0, 1.0)
    np.fill_diagonal(F, 1.0)
    return F


def regularize(F):
    """Shift the spectrum of a correlation matrix by one: ``F + I``."""
    F = spd.symmetrize(np.asarray(F, dtype=float))
    out = F + np.eye(F.shape[-1])
    try:
        return spd.check_spd(out, "regularized matrix")
    except NotPositiveDefinite as exc:
        raise NotPositiveDefinite(f"F + I is still not positive definite: {exc}") from None


def fisher_transform(F):
    """Elementwise ``atanh`` of the off-diagonal entries; the diagonal is set to 0."""
    F = np.asarray(F, dtype=float)
    R = F.shape[-1]
    off = ~np.eye(R, dtype=bool)
    if np.any(np.abs(F[..., off]) >= 1):
        raise OutOfDomain("off-diagonal correlations must lie strictly inside (-1, 1)")
    Z = np.zeros_like(F)
    Z[..., off] = np.arctanh(F[..., off])
    return Z


def upper_triangle_features(F):
    """Entries above the diagonal in row-major order; broadcasts over stacks."""
    F = np.asarray(F, dtype=float)
    iu, ju = np.triu_indices(F.shape[-1], 1)
    return F[..., iu, ju]


def from_upper_triangle(v, diagonal=0.0):
    v = np.asarray(v, dtype=float)
    R = int(round((1 + math.sqrt(1 + 8 * v.shape[-1])) / 2))
    if R * (R - 1) // 2 != v.shape[-1]:
        raise InvalidInput(f"length {v.shape[-1]} is not R(R-1)/2 for any integer R")
    iu, ju = np.triu_indices(R, 1)
    F = np.full(v.shape[:-1] + (R, R), float(diagonal))
    F[..., iu, ju] = v
    F[..., ju, iu] = v
    return F


METHODS = ("riemannian", "raw", "fisher")


def method_features(matrices, method, regularize_input=False):
    """Predictors for one of the three model arms.

    ``riemannian`` keeps the matrices (optionally regularized with ``F + I``);
    ``raw`` and ``fisher`` use the upper triangle of the correlations or of
    their Fisher transform.
    """
    matrices = np.asarray(matrices, dtype=float)
    if method == "riemannian":
        if regularize_input:
            return np.stack([regularize(F) for F in matrices])
        return matrices
    if method == "raw":
        return upper_triangle_features(matrices)
    if method == "fisher":
        return upper_triangle_features(fisher_transform(matrices))
    raise InvalidInput(f"unknown method {method!r}; choose from {METHODS}")


def coordinate_labels(method, R, roi_labels=None):
    """ROI-pair label for every predictor coordinate of a method."""
    names = roi_labels or [f"roi{i + 1}" for i in range(R)]
    if method == "riemannian":
        pairs = spd.coordinate_pairs(R)
    else:
        iu, ju = np.triu_indices(R, 1)
        pairs = list(zip(iu.tolist(), ju.tolist()))
    return [(names[i], names[j]) for i, j in pairs]


# --- networks ---------------------------------------------------------------

@dataclass
class NetworkMap:
    roi_labels: list
    network_of_roi: list

    def __post_init__(self):
        if len(self.roi_labels) != len(self.network_of_roi):
            raise InvalidInput("every ROI needs exactly one network")
        if any(n is None or n == "" for n in self.network_of_roi):
            raise InvalidInput("unmapped ROI in network map")

    @property
    def networks(self):
        return list(dict.fromkeys(self.network_of_roi))


def coefficient_matrix(coefs, R=None):
    """Symmetric ``R x R`` matrix holding each coordinate's coefficient at its ROI pair.

    Accepts Vec-ordered coefficients (length ``R(R+1)/2``; the diagonal is
    filled from the first ``R`` entries) or upper-triangle coefficients
    (length ``R(R-1)/2``; the diagonal is NaN).  No sqrt(2) rescaling is
    applied: entry ``(i, j)`` is the coefficient of coordinate ``(i, j)``.
    """
    coefs = np.asarray(coefs, dtype=float)
    if coefs.ndim == 2:
        return spd.symmetrize(coefs)
    D = coefs.size
    if R is None:
        r1 = int(round((math.sqrt(8 * D + 1) - 1) / 2))
        R = r1 if r1 * (r1 + 1) // 2 == D else int(round((1 + math.sqrt(1 + 8 * D)) / 2))
    iu, ju = np.triu_indices(R, 1)
    M = np.full((R, R), np.nan)
    if D == R * (R + 1) // 2:
        M[np.arange(R), np.arange(R)] = coefs[:R]
        off = coefs[R:]
    elif D == R * (R - 1) // 2:
        off = coefs
    else:
        raise InvalidInput(f"{D} coefficients do not fit a {R}x{R} matrix")
    M[iu, ju] = off
    M[ju, iu] = off
    return M


def network_average(coefs, netmap):
    """Mean coefficient over ROI pairs within and between networks.

    Self-connections ``(i, i)`` are excluded.  A block with no ROI pairs
    (a one-ROI network's diagonal block) is NaN.
    """
    M = coefficient_matrix(coefs, len(netmap.roi_labels))
    if M.shape[0] != len(netmap.roi_labels):
        raise InvalidInput(
            f"coefficients cover {M.shape[0]} ROIs, network map has {len(netmap.roi_labels)}"
        )
    nets = netmap.networks
    member = np.array([nets.index(n) for n in netmap.network_of_roi])
    off = ~np.eye(M.shape[0], dtype=bool)
    A = np.full((len(nets), len(nets)), np.nan)
    for a in range(len(nets)):
        for b in range(len(nets)):
            block = off & (member[:, None] == a) & (member[None, :] == b)
            if block.any():
                A[a, b] = M[block].mean()
    return A


def top_quartile_mask(A):
    """Entries whose absolute value is in the top 25% of the matrix's upper triangle."""
    A = np.asarray(A, dtype=float)
    iu = np.triu_indices(A.shape[0])
    vals = np.abs(A[iu])
    vals = vals[np.isfinite(vals)]
    mask = np.zeros(A.shape, dtype=bool)
    if vals.size == 0:
        return mask
    cut = np.quantile(vals, 0.75)
    with np.errstate(invalid="ignore"):
        mask = np.abs(A) >= cut
    return mask & np.isfinite(A)


# --- text parsing -------------------------------------------------------------

_SPLIT = re.compile(r"[,\t ]+")


def read_matrix(path, return_lines=False):
    """Parse a delimited numeric text file, reporting the offending line on error."""
    rows, linenos = [], []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            s = line.strip()
            if not s or s.startswith("#"):
                continue
            try:
                row = [float(x) for x in _SPLIT.split(s)]
            except ValueError:
                raise ParseError(f"{path}:{lineno}: non-numeric value in {s[:60]!r}") from None
            if rows and len(row) != len(rows[0]):
                raise ParseError(
                    f"{path}:{lineno}: expected {len(rows[0])} values, found {len(row)}"
                )
            if not all(math.isfinite(x) for x in row):
                raise ParseError(f"{path}:{lineno}: non-finite value")
            rows.append(row)
            linenos.append(lineno)
    if not rows:
        raise EmptyInput(f"{path}: no data")
    return (np.array(rows), linenos) if return_lines else np.array(rows)


def read_square_matrix(path, dim=None):
    M, linenos = read_matrix(path, return_lines=True)
    R = M.shape[0]
    if M.shape[1] != R:
        raise ParseError(f"{path}: matrix is {M.shape[0]}x{M.shape[1]}, expected square")
    if dim is not None and R != dim:
        raise ParseError(f"{path}: matrix is {R}x{R}, expected {dim}x{dim}")
    scale = max(np.abs(M).max(), np.finfo(float).tiny)
    bad = np.argwhere(np.abs(M - M.T) > spd.SYM_RTOL * scale)
    if bad.size:
        i, j = bad[0]
        raise ParseError(
            f"{path}:{linenos[i]}: matrix not symmetric at column {j + 1} "
            f"({float(M[i, j])!r} vs {float(M[j, i])!r})"
        )
    return M


def _sniff(first_line):
    return "\t" if "\t" in first_line and "," not in first_line else ","


def _read_table(path):
    with open(path, newline="") as fh:
        lines = [(i, ln) for i, ln in enumerate(fh.read().splitlines(), 1)
                 if ln.strip() and not ln.lstrip().startswith("#")]
    if not lines:
        raise EmptyInput(f"{path}: empty table")
    delim = _sniff(lines[0][1])
    parsed = list(csv.reader([ln for _, ln in lines], delimiter=delim))
    header = [h.strip() for h in parsed[0]]
    body = [(lines[k][0], [c.strip() for c in row]) for k, row in enumerate(parsed[1:], 1)]
    for lineno, row in body:
        if len(row) != len(header):
            raise ParseError(f"{path}:{lineno}: expected {len(header)} fields, found {len(row)}")
    return header, body


def _encode_column(path, header, body, j):
    """Numeric column values, or a two-level text column coded 0/1 in sorted level order."""
    cells = [(lineno, row[j]) for lineno, row in body]
    for lineno, cell in cells:
        if cell == "" or cell.lower() in ("na", "nan"):
            raise ParseError(f"{path}:{lineno}: column {header[j]!r}: missing value")
    try:
        values = [float(c) for _, c in cells]
    except ValueError:
        levels = sorted({c for _, c in cells})
        if len(levels) != 2:
            lineno, cell = next((ln, c) for ln, c in cells if not _is_float(c))
            raise ParseError(f"{path}:{lineno}: column {header[j]!r}: bad value {cell!r} "
                             f"(text columns must have exactly two levels)") from None
        code = {lev: float(i) for i, lev in enumerate(levels)}
        return [code[c] for _, c in cells], dict(code)
    for (lineno, _), v in zip(cells, values):
        if not math.isfinite(v):
            raise ParseError(f"{path}:{lineno}: column {header[j]!r}: non-finite value")
    return values, None


def _is_float(s):
    try:
        float(s)
    except ValueError:
        return False
    return True


def read_phenotypes(path, columns=None, return_encodings=False):
    """Read a phenotype table; returns ``(ids, names, values)``.

    Numeric columns are read as is.  A text column with exactly two levels
    (e.g. ``M``/``F``) is coded 0/1 in sorted level order; the codes are
    returned as a fourth item, ``{name: {level: code}}``, when
    ``return_encodings`` is set.
    """
    header, body = _read_table(path)
    if not body:
        raise EmptyInput(f"{path}: phenotype table has no rows")
    names = header[1:]
    if columns:
        missing = [c for c in columns if c not in names]
        if missing:
            raise ParseError(f"{path}: unknown response columns {missing}; available {names}")
        names = list(columns)
    cols, encodings = [], {}
    for name in names:
        values, code = _encode_column(path, header, body, header.index(name))
        cols.append(values)
        if code is not None:
            encodings[name] = code
    ids = [row[0] for _, row in body]
    if len(set(ids)) != len(ids):
        raise ParseError(f"{path}: duplicate subject ids")
    values = np.array(cols, dtype=float).T.reshape(len(ids), len(names))
    if return_encodings:
        return ids, names, values, encodings
    return ids, names, values


def read_manifest(path):
    header, body = _read_table(path)
    if header[:2] != ["subject_id", "path"]:
        raise ParseError(f"{path}:1: manifest header must be 'subject_id,path'")
    base = Path(path).parent
    out = {}
    for lineno, row in body:
        if row[0] in out:
            raise ParseError(f"{path}:{lineno}: duplicate subject id {row[0]!r}")
        p = Path(row[1])
        out[row[0]] = p if p.is_absolute() else base / p
    if not out:
        raise EmptyInput(f"{path}: manifest lists no subjects")
    return out


def read_network_map(path):
    header, body = _read_table(path)
    if header[:2] != ["roi", "network"]:
        raise ParseError(f"{path}:1: network map header must be 'roi,network'")
    return NetworkMap([r[0] for _, r in body], [r[1] for _, r in body])


# --- datasets -----------------------------------------------------------------

@dataclass
class SubjectRecord:
    subject_id: str
    predictor: np.ndarray
    responses: dict


@dataclass
class StudyDataset:
    subject_ids: list
    matrices: np.ndarray
    responses: np.ndarray
    response_names: list
    roi_labels: list = None
    encodings: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.subject_ids)

    @property
    def dim(self):
        return self.matrices.shape[-1]

    def records(self):
        return [
            SubjectRecord(s, self.matrices[i], dict(zip(self.response_names, self.responses[i])))
            for i, s in enumerate(self.subject_ids)
        ]


def load_dataset(manifest, phenotypes, columns=None, timeseries=False, roi_labels=None):
    """Load per-subject matrices (or time series) and their responses.

    Subjects are ordered as in the phenotype table.  Time series are turned
    into Pearson correlation matrices.
    """
    ids, names, values, encodings = read_phenotypes(phenotypes, columns, return_encodings=True)
    paths = read_manifest(manifest)
    if set(ids) != set(paths):
        diff = sorted(set(ids) ^ set(paths))
        raise InvalidInput(f"subject ids differ between manifest and phenotypes: {diff}")
    mats = []
    dim = None
    for sid in ids:
        if timeseries:
            M = correlation_from_timeseries(read_matrix(paths[sid]))
            if dim is not None and M.shape[0] != dim:
                raise ParseError(f"{paths[sid]}: {M.shape[0]} ROIs, expected {dim}")
        else:
            M = read_square_matrix(paths[sid], dim)
        dim = M.shape[0]
        mats.append(M)
    if roi_labels is not None and len(roi_labels) != dim:
        raise InvalidInput(f"{len(roi_labels)} ROI labels for {dim}x{dim} matrices")
    return StudyDataset(list(ids), np.stack(mats), values, names, roi_labels, encodings)


def write_matrix(path, M):
    M = np.atleast_2d(np.asarray(M, dtype=float))
    with open(path, "w") as fh:
        for row in M:
            fh.write(",".join(FLOAT_FMT % x for x in row) + "\n")


def save_dataset(directory, dataset):
    """Write a dataset as one matrix file per subject plus manifest and phenotypes."""
    d = Path(directory)
    (d / "matrices").mkdir(parents=True, exist_ok=True)
    with open(d / "manifest.csv", "w") as fh:
        fh.write("subject_id,path\n")
        for sid, M in zip(dataset.subject_ids, dataset.matrices):
            rel = f"matrices/{sid}.csv"
            write_matrix(d / rel, M)
            fh.write(f"{sid},{rel}\n")
    with open(d / "phenotypes.csv", "w") as fh:
        fh.write(",".join(["subject_id"] + list(dataset.response_names)) + "\n")
        for sid, row in zip(dataset.subject_ids, dataset.responses):
            fh.write(",".join([sid] + [FLOAT_FMT % v for v in row]) + "\n")


# --- model serialization ------------------------------------------------------

def _arr(a):
    return None if a is None else np.asarray(a, dtype=float).tolist()


def _frechet_dict(res):
    if res is None:
        return None
    return {"converged": bool(res.converged), "iterations": int(res.iterations),
            "final_gradient_norm": float(res.final_gradient_norm)}


def model_to_dict(model, meta=None):
    pls = model.pls
    return {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "x_manifold": {"kind": model.x_manifold.kind, "dim": model.x_manifold.dim},
        "y_manifold": {"kind": model.y_manifold.kind, "dim": model.y_manifold.dim},
        "mu_x": _arr(model.mu_x),
        "mu_y": _arr(model.mu_y),
        "pls": {k: _arr(getattr(pls, k)) for k in
                ("W", "C", "T", "U", "P", "Q", "B", "x_means", "y_means", "E", "F")},
        "init_columns": list(pls.init_columns),
        "n_iter": list(pls.n_iter),
        "beta": {k: _arr(getattr(model.beta, k)) for k in ("coef", "x_means", "y_means", "y_scales")},
        "frechet_x": _frechet_dict(model.frechet_x),
        "frechet_y": _frechet_dict(model.frechet_y),
        "meta": meta or {},
    }


def model_from_dict(d):
    if d.get("format") != MODEL_FORMAT:
        raise ParseError(f"not an rpls model file (format={d.get('format')!r})")
    if d.get("version") != MODEL_VERSION:
        raise ParseError(f"unsupported model file version {d.get('version')!r}; "
                         f"this build reads version {MODEL_VERSION}")
    xm = make_manifold(d["x_manifold"]["kind"], d["x_manifold"]["dim"])
    ym = make_manifold(d["y_manifold"]["kind"], d["y_manifold"]["dim"])
    p = {k: np.array(v, dtype=float) for k, v in d["pls"].items()}
    pls = PlsFit(**p, init_columns=d["init_columns"], n_iter=d["n_iter"])
    beta = BetaPls(**{k: np.array(v, dtype=float) for k, v in d["beta"].items()})
    mu_x, mu_y = np.array(d["mu_x"]), np.array(d["mu_y"])
    fr = [None if f is None else FrechetResult(None, f["final_gradient_norm"], f["iterations"],
                                                 f["converged"])
          for f in (d["frechet_x"], d["frechet_y"])]
    model = RplsModel(
        x_manifold=xm, y_manifold=ym, mu_x=mu_x, mu_y=mu_y, pls=pls, beta=beta,
        x_loadings=xm.tangent(mu_x, pls.P), x_weights=xm.tangent(mu_x, pls.W),
        y_weights=ym.tangent(mu_y, pls.C * beta.y_scales[:, None]),
        frechet_x=fr[0], frechet_y=fr[1],
    )
    return model, d.get("meta", {})


def save_model(model, path, meta=None):
    with open(path, "w") as fh:
        json.dump(model_to_dict(model, meta), fh, indent=1)
        fh.write("\n")


def load_model(path):
    """Read a model file; returns ``(model, meta)``."""
    try:
        with open(path) as fh:
            d = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}:{exc.lineno}: invalid JSON ({exc.msg})") from None
    return model_from_dict(d)


# --- reports ------------------------------------------------------------------

def _fmt(x):
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return FLOAT_FMT % x


def save_vip_report(report, path, labels=None):
    """Tab-separated table of VIP, p and q values per coordinate, most important first."""
    labels = labels or report.labels or [(str(j),) for j in range(report.vip.size)]
    order = sorted(range(report.vip.size), key=lambda j: (-report.vip[j], j))
    with open(path, "w") as fh:
        fh.write(f"# permutations\t{report.n_permutations}\n")
        fh.write(f"# alpha\t{_fmt(report.alpha)}\n")
        fh.write(f"# significant\t{report.n_significant}\n")
        fh.write("coordinate\troi_i\troi_j\tvip\tp_value\tq_value\tsignificant\tdiagonal\tn_valid\n")
        for j in order:
            lab = tuple(labels[j]) + ("",) * (2 - len(labels[j]))
            fh.write("\t".join([str(j), str(lab[0]), str(lab[1]), _fmt(report.vip[j]),
                                _fmt(report.p_values[j]), _fmt(report.q_values[j]),
                                _fmt(bool(report.significant[j])),
                                _fmt(bool(report.diagonal_mask[j])),
                                _fmt(int(report.n_valid[j]))]) + "\n")


def format_cv_report(results):
    """Text table mirroring the cross-validation summary, one block per method.

    ``results`` maps a method name to its :class:`CvResult`.
    """
    from .model_selection import METRICS

    lines = []
    for method, res in results.items():
        lines.append(f"[{method}]")
        lines.append(f"folds\t{res.folds}")
        lines.append(f"seed\t{res.seed}")
        lines.append(f"scale\t{res.scale}")
        lines.append(f"chosen_K\t{res.chosen_k}")
        lines.append(
            f"one_se_rule\tmin RMSE at K={res.best_k}; threshold {FLOAT_FMT % res.threshold}; "
            f"smallest K with mean RMSE <= threshold is {res.chosen_k}"
        )
        if res.excluded:
            lines.append("excluded_K\t" + ",".join(map(str, res.excluded)))
        cols = [f"{m}_{s}" for m in METRICS for s in ("mean", "se")]
        lines.append("\t".join(["K", "n_folds_ok"] + cols))
        for k in sorted(res.per_k):
            row = res.per_k[k]
            lines.append("\t".join([str(k), str(row["n_folds_ok"])] + [FLOAT_FMT % row[c] for c in cols]))
        lines.append("")
    return "\n".join(lines)


def save_report(report, path, labels=None):
    """Write a :class:`VipReport` or a mapping of method name to :class:`CvResult`."""
    from .inference import VipReport
    from .model_selection import CvResult

    if isinstance(report, VipReport):
        save_vip_report(report, path, labels)
    elif isinstance(report, CvResult):
        Path(path).write_text(format_cv_report({report.method or "model": report}))
    elif isinstance(report, dict):
        Path(path).write_text(format_cv_report(report))
    else:
        raise InvalidInput(f"cannot save report of type {type(report).__name__}")


def ensure_dir(path):
    os.makedirs(path, exist_ok=True)
    return Path(path)
