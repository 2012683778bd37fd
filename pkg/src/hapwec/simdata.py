"""Synthetic haplotype data: rank-2 sign matrices, sampling, flip noise, fragment files.

Fragment file format (UTF-8, LF)::

    N l
    read_id k col:allele:Q col:allele:Q ...

Columns are 0-based; allele 0 encodes +1 and allele 1 encodes -1; Q is a
nonnegative integer Phred score.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .core import MaskedMatrix, numerical_rank
from .pipeline import HaplotypePair, Read, ReadSet
from .weights import QualityGrid, phred_to_prob

SAMPLING_MODES = ("entrywise-sampling", "read-based")
NOISE_MODES = ("fixed-fraction", "quality-driven")
DEFAULT_QUALITY_DISTRIBUTION = ((10.0, 0.25), (20.0, 0.25), (30.0, 0.25), (40.0, 0.25))
MAX_REDRAWS = 100

# independent random streams derived from one trial seed
_STREAM_MATRIX, _STREAM_SAMPLING, _STREAM_NOISE = 0, 1, 2


class FragmentFormatError(ValueError):
    pass


@dataclass(frozen=True)
class SimConfig:
    N: int = 40
    l: int = 40
    mode: str = "entrywise-sampling"
    sampling_rate: float = 1.0
    coverage: int = 6
    noise_mode: str = "fixed-fraction"
    noise_fraction: float = 0.0
    quality_distribution: tuple[tuple[float, float], ...] = DEFAULT_QUALITY_DISTRIBUTION
    low_quality: float = 10.0
    high_quality: float = 40.0
    mislabel_rate: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if self.mode not in SAMPLING_MODES:
            raise ValueError(f"unknown sampling mode {self.mode!r}")
        if self.noise_mode not in NOISE_MODES:
            raise ValueError(f"unknown noise mode {self.noise_mode!r}")
        if self.N < 2 or self.l < 2:
            raise ValueError("N and l must be at least 2")
        if not 0 < self.sampling_rate <= 1:
            raise ValueError("sampling rate must lie in (0, 1]")
        if self.coverage < 1:
            raise ValueError("coverage must be >= 1")
        if not 0 <= self.noise_fraction < 1:
            raise ValueError("noise fraction must lie in [0, 1)")
        if not 0 <= self.mislabel_rate < 1:
            raise ValueError("mislabel rate must lie in [0, 1)")
        probs = [w for _, w in self.quality_distribution]
        if any(w < 0 for w in probs) or abs(sum(probs) - 1.0) > 1e-9:
            raise ValueError("quality distribution probabilities must be nonnegative and sum to 1")
        if any(q < 0 for q, _ in self.quality_distribution) or min(self.low_quality, self.high_quality) < 0:
            raise ValueError("quality scores must be nonnegative")

    @property
    def expected_sampling_rate(self) -> float:
        if self.mode == "read-based":
            return self.coverage / self.N
        return self.sampling_rate


def _rng(seed: int, stream: int) -> np.random.Generator:
    return np.random.default_rng([int(seed), stream])


def gen_rank2_matrix(N: int, l: int, seed: int) -> tuple[np.ndarray, HaplotypePair, np.ndarray]:
    """Random sign matrix whose rows are copies of two independent haplotypes.

    Returns ``(M, pair, assignment)`` where ``assignment[i]`` is 0 for rows
    equal to ``h1`` and 1 for rows equal to ``h2``.
    """
    if N < 2 or l < 2:
        raise ValueError("N and l must be at least 2")
    rng = _rng(seed, _STREAM_MATRIX)
    for _ in range(MAX_REDRAWS):
        h = rng.choice(np.array([-1, 1]), size=(2, l))
        if not (np.array_equal(h[0], h[1]) or np.array_equal(h[0], -h[1])):
            break
    else:
        raise RuntimeError("could not draw two independent haplotypes")
    if N == 2:
        assign = np.array([0, 1])
    else:
        for _ in range(MAX_REDRAWS):
            assign = rng.integers(0, 2, size=N)
            if 0 < assign.sum() < N:
                break
        else:
            raise RuntimeError("could not draw a row assignment using both haplotypes")
    M = h[assign].astype(float)
    return M, HaplotypePair(h[0], h[1]), assign


def _layer_spans(l: int, k: int, rng: np.random.Generator) -> list[tuple[int, int]]:
    # k contiguous spans tiling [0, l); interior breakpoints shifted by a random phase
    width = l / k
    u = rng.uniform(0.0, width)
    cuts = [0] + [int(np.floor(u + (i - 0.5) * width)) for i in range(1, k)] + [l]
    if any(b <= a for a, b in zip(cuts, cuts[1:])):
        cuts = [int(round(i * width)) for i in range(k + 1)]
    return [(cuts[i], cuts[i + 1]) for i in range(k)]


def read_based_mask(N: int, l: int, coverage: int, rng: np.random.Generator) -> np.ndarray:
    """Contiguous reads, one per row, covering every column exactly ``coverage`` times.

    The reads are arranged in ``coverage`` layers; each layer tiles the
    columns with spans of about ``l * coverage / N`` columns whose
    breakpoints are shifted by a random phase, so spans in different layers
    overlap and link neighbouring blocks. Rows are then shuffled.
    """
    if coverage > N:
        raise ValueError(f"coverage {coverage} exceeds the number of reads {N}")
    if N > coverage * l:
        raise ValueError("too many reads for contiguous tiling at this coverage")
    per_layer = np.full(coverage, N // coverage)
    per_layer[rng.permutation(coverage)[: N % coverage]] += 1
    spans = []
    for k in per_layer:
        spans.extend(_layer_spans(l, int(k), rng))
    mask = np.zeros((N, l), dtype=bool)
    for row, (start, stop) in zip(rng.permutation(N), spans):
        mask[row, start:stop] = True
    return mask


def sample_observations(M: np.ndarray, cfg: SimConfig) -> MaskedMatrix:
    M = np.asarray(M, dtype=float)
    N, l = M.shape
    rng = _rng(cfg.seed, _STREAM_SAMPLING)
    if cfg.mode == "entrywise-sampling":
        count = int(round(cfg.sampling_rate * N * l))
        count = max(count, 1)
        flat = np.zeros(N * l, dtype=bool)
        flat[rng.choice(N * l, size=count, replace=False)] = True
        mask = flat.reshape(N, l)
    else:
        mask = read_based_mask(N, l, cfg.coverage, rng)
    return MaskedMatrix(np.where(mask, M, 0.0), mask)


def inject_noise(
    Y_clean: MaskedMatrix, cfg: SimConfig, seed: int | None = None
) -> tuple[MaskedMatrix, QualityGrid, np.ndarray]:
    """Flip observed signs and attach Phred scores.

    ``quality-driven``: each entry draws Q from the quality distribution and
    flips with probability ``10**(-Q/10)``. ``fixed-fraction``: exactly
    ``round(q * |Omega|)`` uniformly chosen entries flip; flipped entries get
    the low score and clean ones the high score, each label swapped with
    probability ``mislabel_rate``. Returns ``(Y, qualities, flip_mask)``.
    """
    seed = cfg.seed if seed is None else seed
    rng = _rng(seed, _STREAM_NOISE)
    mask = Y_clean.mask
    obs = Y_clean.values[mask]
    if not np.all(np.abs(obs) == 1):
        raise ValueError("clean observations must be +/-1")
    n = obs.size
    if cfg.noise_mode == "quality-driven":
        qs = np.array([q for q, _ in cfg.quality_distribution], dtype=float)
        ws = np.array([w for _, w in cfg.quality_distribution], dtype=float)
        scores = qs[rng.choice(qs.size, size=n, p=ws)]
        flips = rng.random(n) < phred_to_prob(scores)
    else:
        k = int(round(cfg.noise_fraction * n))
        if k >= n and n > 0:
            raise ValueError("noise fraction would flip every observed entry")
        flips = np.zeros(n, dtype=bool)
        flips[rng.choice(n, size=k, replace=False)] = True
        low = flips ^ (rng.random(n) < cfg.mislabel_rate)
        scores = np.where(low, cfg.low_quality, cfg.high_quality)
    values = np.zeros(mask.shape)
    values[mask] = np.where(flips, -obs, obs)
    dense_scores = np.zeros(mask.shape)
    dense_scores[mask] = scores
    flip_mask = np.zeros(mask.shape, dtype=bool)
    flip_mask[mask] = flips
    return MaskedMatrix(values, mask), QualityGrid(dense_scores, mask), flip_mask


def simulate(cfg: SimConfig, seed: int | None = None):
    """Truth, clean sample and noisy sample for one seed.

    Returns ``(M, pair, Y, qualities, flip_mask)``.
    """
    seed = cfg.seed if seed is None else seed
    if seed != cfg.seed:
        cfg = replace(cfg, seed=seed)
    M, pair, _ = gen_rank2_matrix(cfg.N, cfg.l, seed)
    Y_clean = sample_observations(M, cfg)
    Y, Q, flips = inject_noise(Y_clean, cfg, seed)
    return M, pair, Y, Q, flips


def is_rank2(M: np.ndarray) -> bool:
    return numerical_rank(M) == 2


def write_fragments(reads: ReadSet, path) -> None:
    lines = [f"{reads.rows} {reads.num_columns}"]
    for read in reads.reads:
        parts = [str(read.row_id), str(len(read.entries))]
        for c, v, q in read.entries:
            if float(q) != int(q):
                raise FragmentFormatError(f"read {read.row_id}: quality {q} is not an integer")
            parts.append(f"{c}:{0 if v == 1 else 1}:{int(q)}")
        lines.append(" ".join(parts))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def _int(token: str, lineno: int, what: str) -> int:
    try:
        return int(token)
    except ValueError:
        raise FragmentFormatError(f"line {lineno}: {what} {token!r} is not an integer") from None


def read_fragments(path) -> ReadSet:
    text = Path(path).read_text(encoding="utf-8")
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines:
        raise FragmentFormatError("line 1: missing header")
    header = lines[0].split(" ")
    if len(header) != 2:
        raise FragmentFormatError("line 1: header must be 'N l'")
    N, l = _int(header[0], 1, "N"), _int(header[1], 1, "l")
    reads = []
    for lineno, line in enumerate(lines[1:], start=2):
        tokens = line.split(" ")
        if len(tokens) < 2:
            raise FragmentFormatError(f"line {lineno}: truncated read line")
        rid, k = _int(tokens[0], lineno, "read id"), _int(tokens[1], lineno, "entry count")
        if len(tokens) != k + 2:
            raise FragmentFormatError(f"line {lineno}: expected {k} entries, found {len(tokens) - 2}")
        entries = []
        for tok in tokens[2:]:
            fields = tok.split(":")
            if len(fields) != 3:
                raise FragmentFormatError(f"line {lineno}: malformed entry {tok!r}")
            c = _int(fields[0], lineno, "column")
            allele = _int(fields[1], lineno, "allele")
            q = _int(fields[2], lineno, "quality")
            if allele not in (0, 1):
                raise FragmentFormatError(f"line {lineno}: allele {allele} not in {{0,1}}")
            if q < 0:
                raise FragmentFormatError(f"line {lineno}: negative quality {q}")
            if not 0 <= c < l:
                raise FragmentFormatError(f"line {lineno}: column {c} out of range")
            entries.append((c, 1 if allele == 0 else -1, q))
        try:
            reads.append(Read(rid, tuple(entries)))
        except ValueError as err:
            raise FragmentFormatError(f"line {lineno}: {err}") from None
    try:
        return ReadSet(tuple(reads), l, N)
    except ValueError as err:
        raise FragmentFormatError(str(err)) from None


def write_haplotypes(pair: HaplotypePair, path) -> None:
    rows = [" ".join(str(int(v)) for v in h) for h in (pair.h1, pair.h2)]
    Path(path).write_text("\n".join(rows) + "\n", encoding="utf-8")


def read_haplotypes(path) -> HaplotypePair:
    rows = [r for r in Path(path).read_text(encoding="utf-8").split("\n") if r]
    if len(rows) != 2:
        raise ValueError("haplotype file must hold exactly two lines")
    return HaplotypePair(*(np.array([int(t) for t in r.split(" ")]) for r in rows))
