"""Text-format readers and writers.

Whitespace- or comma-delimited inputs: phenotype (one value per line),
covariates (n rows, optional header), genotypes (header row of SNP ids,
missing entries coded NA or -1, mean-imputed with a flag).  Outputs are TSV
with a one-line header; 'inf' and 'NA' are the literals for infinities and
absent values.
"""

from __future__ import annotations

import numpy as np

from .errors import DomainError
from .scores import GenotypeMatrix


class ParseError(DomainError):
    """Malformed input file; message carries the offending line number."""


def _split(line: str) -> list[str]:
    line = line.strip()
    if "," in line:
        return [f.strip() for f in line.split(",")]
    return line.split()


def _read_lines(path: str) -> list[str]:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return [ln.rstrip("\n") for ln in fh if ln.strip() != ""]
    except OSError as exc:
        raise ParseError(f"{path}: cannot read ({exc})") from exc


def read_phenotype(path: str) -> np.ndarray:
    lines = _read_lines(path)
    if not lines:
        raise ParseError(f"{path}: empty phenotype file")
    out = np.empty(len(lines))
    for i, ln in enumerate(lines, start=1):
        fields = _split(ln)
        if len(fields) != 1:
            raise ParseError(f"{path}:{i}: expected one value per line, got {len(fields)}")
        try:
            out[i - 1] = float(fields[0])
        except ValueError as exc:
            raise ParseError(f"{path}:{i}: not a number: {fields[0]!r}") from exc
    return out


def _is_numeric_row(fields: list[str]) -> bool:
    try:
        for f in fields:
            float(f)
        return True
    except ValueError:
        return False


def read_covariates(path: str) -> np.ndarray:
    """Covariate matrix; a non-numeric first row is treated as a header."""
    lines = _read_lines(path)
    if not lines:
        raise ParseError(f"{path}: empty covariate file")
    first = _split(lines[0])
    start = 0 if _is_numeric_row(first) else 1
    width = len(_split(lines[start])) if start < len(lines) else 0
    if width == 0:
        raise ParseError(f"{path}: no data rows")
    rows = []
    for i, ln in enumerate(lines[start:], start=start + 1):
        fields = _split(ln)
        if len(fields) != width:
            raise ParseError(f"{path}:{i}: expected {width} fields, got {len(fields)}")
        try:
            rows.append([float(f) for f in fields])
        except ValueError as exc:
            raise ParseError(f"{path}:{i}: non-numeric covariate value") from exc
    return np.array(rows)


def read_genotypes(path: str) -> GenotypeMatrix:
    """Genotype matrix with a mandatory header row of SNP identifiers.

    Missing entries ('NA' or -1) are mean-imputed per column; affected
    columns are reported in ``imputed``.
    """
    lines = _read_lines(path)
    if len(lines) < 2:
        raise ParseError(f"{path}: need a header row plus at least one subject row")
    ids = tuple(_split(lines[0]))
    if _is_numeric_row(list(ids)):
        raise ParseError(f"{path}:1: first row must be SNP identifiers, found numbers")
    d = len(ids)
    n = len(lines) - 1
    vals = np.empty((n, d))
    missing = np.zeros((n, d), dtype=bool)
    for i, ln in enumerate(lines[1:], start=2):
        fields = _split(ln)
        if len(fields) != d:
            raise ParseError(f"{path}:{i}: expected {d} fields, got {len(fields)}")
        for j, f in enumerate(fields):
            if f.upper() == "NA":
                missing[i - 2, j] = True
                vals[i - 2, j] = np.nan
                continue
            try:
                x = float(f)
            except ValueError as exc:
                raise ParseError(f"{path}:{i}: bad genotype value {f!r}") from exc
            if x == -1.0:
                missing[i - 2, j] = True
                vals[i - 2, j] = np.nan
            else:
                vals[i - 2, j] = x
    imputed = []
    for j in range(d):
        mj = missing[:, j]
        if np.any(mj):
            if np.all(mj):
                raise ParseError(f"{path}: column {ids[j]} entirely missing")
            vals[mj, j] = np.nanmean(vals[:, j])
            imputed.append(ids[j])
    return GenotypeMatrix(values=vals, ids=ids, imputed=tuple(imputed))


def read_zstats(path: str):
    """TSV of (snp_id, z) with header; returns (ids, z array)."""
    lines = _read_lines(path)
    if len(lines) < 2:
        raise ParseError(f"{path}: need header plus at least one statistic row")
    ids, zs = [], []
    for i, ln in enumerate(lines[1:], start=2):
        fields = _split(ln)
        if len(fields) != 2:
            raise ParseError(f"{path}:{i}: expected (snp_id, z), got {len(fields)} fields")
        try:
            zs.append(float(fields[1]))
        except ValueError as exc:
            raise ParseError(f"{path}:{i}: bad z value {fields[1]!r}") from exc
        ids.append(fields[0])
    return tuple(ids), np.array(zs)


def read_correlation(path: str) -> np.ndarray:
    lines = _read_lines(path)
    rows = []
    for i, ln in enumerate(lines, start=1):
        fields = _split(ln)
        try:
            rows.append([float(f) for f in fields])
        except ValueError as exc:
            raise ParseError(f"{path}:{i}: non-numeric correlation entry") from exc
    M = np.array(rows)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ParseError(f"{path}: correlation matrix must be square, got {M.shape}")
    return M


def write_zstats(path: str, ids, z: np.ndarray) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("snp_id\tz\n")
        for gid, zj in zip(ids, z):
            fh.write(f"{gid}\t{zj:.10g}\n")


def write_correlation(path: str, Sigma: np.ndarray) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for row in Sigma:
            fh.write("\t".join(f"{v:.10g}" for v in row) + "\n")


def format_float(v: float | None) -> str:
    if v is None:
        return "NA"
    if np.isinf(v):
        return "inf" if v > 0 else "-inf"
    return f"{v:.10g}"
