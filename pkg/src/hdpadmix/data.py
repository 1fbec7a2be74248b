"""Genotype dataset container and file IO.

File formats
------------
Genotype file: UTF-8 CSV, one row per individual, comma-separated
non-negative integer allele codes.  An optional first line of the form
``#alphabet:A_1,...,A_L`` declares the allele alphabet size per locus;
without it, ``A_l`` is inferred as (max observed code at locus l) + 1.
The code ``-1`` is reserved as a missing-data sentinel: it parses, but
``validate`` rejects it (missing data is unsupported).

Distance file: one non-negative decimal per line, exactly L-1 lines,
``.`` as the decimal separator.  Units are whatever the file carries
(morgans, or base pairs as a proxy); the split rate ``r`` inherits the
inverse of those units.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

MISSING_CODE = -1


class DataFormatError(ValueError):
    """A genotype or distance file violates the documented format."""


class DataWarning(UserWarning):
    """Non-fatal data issue (degenerate locus, coerced alphabet)."""


@dataclass(frozen=True)
class Finding:
    severity: str  # "error" | "warning"
    message: str

    def __str__(self):
        return f"{self.severity}: {self.message}"


@dataclass(frozen=True, eq=False)
class Dataset:
    """N haploid sequences at L loci plus L-1 inter-locus distances.

    genotypes[i, l] is the allele code of individual i at locus l, in
    {0, ..., alleles_per_locus[l]-1}.  distances[l] separates locus l
    from locus l+1.  Arrays are frozen after construction, so a Dataset
    is safe to share read-only across workers.
    """

    genotypes: np.ndarray
    alleles_per_locus: np.ndarray
    distances: np.ndarray | None = None

    def __post_init__(self):
        g = np.asarray(self.genotypes, dtype=np.int64)
        a = np.asarray(self.alleles_per_locus, dtype=np.int64)
        object.__setattr__(self, "genotypes", g)
        object.__setattr__(self, "alleles_per_locus", a)
        if g.ndim != 2:
            raise ValueError("genotypes must be a 2-D matrix")
        if a.shape != (g.shape[1],):
            raise ValueError("alleles_per_locus must have one entry per locus")
        if self.distances is not None:
            d = np.asarray(self.distances, dtype=np.float64)
            object.__setattr__(self, "distances", d)
            d.flags.writeable = False
        g.flags.writeable = False
        a.flags.writeable = False

    @property
    def n_individuals(self) -> int:
        return self.genotypes.shape[0]

    @property
    def n_loci(self) -> int:
        return self.genotypes.shape[1]

    @property
    def max_alleles(self) -> int:
        return int(self.alleles_per_locus.max())


def _parse_alphabet_header(line: str, path) -> np.ndarray:
    body = line[len("#alphabet:"):]
    try:
        counts = np.array([int(tok) for tok in body.split(",")], dtype=np.int64)
    except ValueError as exc:
        raise DataFormatError(f"{path}: malformed #alphabet header: {exc}") from None
    if np.any(counts < 2):
        raise DataFormatError(f"{path}: declared alphabet sizes must be >= 2")
    return counts


def load_genotypes(path) -> Dataset:
    """Read a genotype CSV.  Returns a Dataset with distances unset.

    Raises DataFormatError with the offending row/column for ragged
    rows, non-integer fields, or negative codes (other than the -1
    sentinel).  A locus whose inferred alphabet would be smaller than 2
    is kept with A_l coerced to 2 and a DataWarning is issued.
    """
    declared = None
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    start = 0
    if lines and lines[0].startswith("#alphabet:"):
        declared = _parse_alphabet_header(lines[0], path)
        start = 1
    for idx, line in enumerate(lines[start:], start=start + 1):
        if not line.strip():
            continue
        fields = line.split(",")
        row = []
        for col, tok in enumerate(fields, start=1):
            try:
                code = int(tok)
            except ValueError:
                raise DataFormatError(
                    f"{path}: row {idx}, column {col}: not an integer: {tok!r}"
                ) from None
            if code < 0 and code != MISSING_CODE:
                raise DataFormatError(
                    f"{path}: row {idx}, column {col}: negative allele code {code}"
                )
            row.append(code)
        rows.append((idx, row))
    if not rows:
        raise DataFormatError(f"{path}: no genotype rows")
    width = len(rows[0][1])
    for idx, row in rows[1:]:
        if len(row) != width:
            raise DataFormatError(
                f"{path}: ragged row {idx}: expected {width} fields, got {len(row)}"
            )
    geno = np.array([r for _, r in rows], dtype=np.int64)
    if declared is not None:
        if declared.shape[0] != width:
            raise DataFormatError(
                f"{path}: #alphabet declares {declared.shape[0]} loci, rows have {width}"
            )
        alphabet = declared
    else:
        observed = np.where(geno == MISSING_CODE, 0, geno)
        alphabet = observed.max(axis=0) + 1
        thin = alphabet < 2
        if np.any(thin):
            loci = [str(l + 1) for l in np.flatnonzero(thin)]
            warnings.warn(
                f"{path}: degenerate locus {', '.join(loci)}: single observed "
                "allele code, alphabet coerced to 2",
                DataWarning,
                stacklevel=2,
            )
            alphabet = np.maximum(alphabet, 2)
    return Dataset(genotypes=geno, alleles_per_locus=alphabet)


def load_distances(path, expected: int) -> np.ndarray:
    """Read L-1 inter-locus distances; ``expected`` is L."""
    values = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                val = float(line.strip())
            except ValueError:
                raise DataFormatError(
                    f"{path}: line {lineno}: not a number: {line.strip()!r}"
                ) from None
            if not np.isfinite(val):
                raise DataFormatError(f"{path}: line {lineno}: non-finite distance")
            if val < 0:
                raise DataFormatError(f"{path}: line {lineno}: negative distance {val}")
            values.append(val)
    if len(values) != expected - 1:
        raise DataFormatError(
            f"{path}: distance count mismatch: expected {expected - 1}, got {len(values)}"
        )
    return np.asarray(values, dtype=np.float64)


def with_distances(dataset: Dataset, distances) -> Dataset:
    return Dataset(
        genotypes=dataset.genotypes,
        alleles_per_locus=dataset.alleles_per_locus,
        distances=np.asarray(distances, dtype=np.float64),
    )


def save_genotypes(dataset: Dataset, path, header: bool = True) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        if header:
            fh.write("#alphabet:" + ",".join(str(int(a)) for a in dataset.alleles_per_locus) + "\n")
        for row in dataset.genotypes:
            fh.write(",".join(str(int(v)) for v in row) + "\n")


def save_distances(distances, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for d in np.asarray(distances, dtype=np.float64):
            fh.write(f"{float(d)!r}\n")


def validate(dataset: Dataset) -> list[Finding]:
    """Check Dataset invariants.  Returns findings; empty means valid.

    Errors: out-of-range or missing-sentinel codes, bad distance vector.
    Warnings: monomorphic loci (kept; the likelihood handles them).
    """
    findings = []
    geno = dataset.genotypes
    alphabet = dataset.alleles_per_locus
    n, L = geno.shape
    if n < 1 or L < 1:
        findings.append(Finding("error", "dataset has no individuals or no loci"))
        return findings
    if np.any(alphabet < 2):
        for l in np.flatnonzero(alphabet < 2):
            findings.append(Finding("error", f"locus {l + 1}: alphabet size {alphabet[l]} < 2"))
    missing = geno == MISSING_CODE
    if missing.any():
        i, l = np.argwhere(missing)[0]
        findings.append(
            Finding(
                "error",
                f"missing-data sentinel at individual {i + 1}, locus {l + 1} "
                "(missing genotypes are not supported)",
            )
        )
    bad = (geno < 0) | (geno >= alphabet[None, :])
    bad &= ~missing
    if bad.any():
        i, l = np.argwhere(bad)[0]
        findings.append(
            Finding(
                "error",
                f"allele code {geno[i, l]} out of range at individual {i + 1}, "
                f"locus {l + 1} (alphabet size {alphabet[l]})",
            )
        )
    if dataset.distances is not None:
        d = dataset.distances
        if d.shape != (L - 1,):
            findings.append(
                Finding("error", f"distance vector has {d.shape[0]} entries, expected {L - 1}")
            )
        else:
            for l in np.flatnonzero(~(d >= 0)):
                findings.append(Finding("error", f"distance {l + 1} is negative or NaN: {d[l]}"))
    if n > 1:
        mono = np.all(geno == geno[0], axis=0)
        for l in np.flatnonzero(mono):
            findings.append(Finding("warning", f"locus {l + 1} is monomorphic"))
    return findings
