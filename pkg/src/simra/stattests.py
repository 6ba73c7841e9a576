"""A subset of the NIST SP 800-22 statistical tests.

Every test takes a 0/1 array and returns a p-value computed the way the
NIST reference implementation does it (erfc and the regularized upper
incomplete gamma function). A test raises ``InapplicableTestError`` when the
sequence is too short for its statistic to be defined; ``evaluate`` applies
the stricter recommended minimum lengths and records such tests as
inapplicable instead of failed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import erfc, gammaincc
from scipy.stats import norm

from .errors import InapplicableTestError

NOT_IMPLEMENTED = (
    "discrete_fourier_transform",
    "non_overlapping_template",
    "overlapping_template",
    "universal",
    "linear_complexity",
    "random_excursions",
    "random_excursions_variant",
)


def _bits(bits) -> np.ndarray:
    arr = np.asarray(bits, dtype=np.uint8).ravel()
    if arr.size and arr.max() > 1:
        raise ValueError("bit sequences must contain only 0 and 1")
    return arr


def as_bits(text: str) -> np.ndarray:
    """'0101' -> array([0, 1, 0, 1])."""
    return np.frombuffer(text.strip().encode(), dtype=np.uint8) - ord("0")


def frequency(bits) -> float:
    x = _bits(bits)
    n = x.size
    if n == 0:
        raise InapplicableTestError("frequency: empty sequence")
    s = 2 * int(x.sum()) - n
    return float(erfc(abs(s) / math.sqrt(n) / math.sqrt(2)))


def block_frequency(bits, M: int = 128) -> float:
    x = _bits(bits)
    N = x.size // M
    if M < 1 or N < 1:
        raise InapplicableTestError(f"block_frequency: need at least one block of {M} bits")
    pi = x[: N * M].reshape(N, M).mean(axis=1)
    chi2 = 4.0 * M * float(((pi - 0.5) ** 2).sum())
    return float(gammaincc(N / 2.0, chi2 / 2.0))


def runs(bits) -> float:
    x = _bits(bits)
    n = x.size
    if n < 2:
        raise InapplicableTestError("runs: need at least 2 bits")
    pi = x.mean()
    if abs(pi - 0.5) >= 2.0 / math.sqrt(n):
        return 0.0  # frequency prerequisite failed
    v = 1 + int(np.count_nonzero(x[1:] != x[:-1]))
    num = abs(v - 2.0 * n * pi * (1 - pi))
    den = 2.0 * math.sqrt(2.0 * n) * pi * (1 - pi)
    return float(erfc(num / den))


# (block length M, category lower/upper run lengths, class probabilities)
_LONGEST_RUN = (
    (8, 1, 4, (0.21484375, 0.3671875, 0.23046875, 0.1875)),
    (128, 4, 9, (0.1174035788, 0.242955959, 0.249363483, 0.17517706, 0.102701071, 0.112398847)),
    (10000, 10, 16, (0.0882, 0.2092, 0.2483, 0.1933, 0.1208, 0.0675, 0.0727)),
)


def _longest_run_table(n: int):
    if n < 128:
        raise InapplicableTestError("longest_run: need at least 128 bits")
    if n < 6272:
        return _LONGEST_RUN[0]
    if n < 750000:
        return _LONGEST_RUN[1]
    return _LONGEST_RUN[2]


def _longest_ones(blocks: np.ndarray) -> np.ndarray:
    """Length of the longest run of ones in each row."""
    best = np.zeros(blocks.shape[0], dtype=np.int64)
    cur = np.zeros_like(best)
    for col in blocks.T:
        cur = (cur + 1) * col
        np.maximum(best, cur, out=best)
    return best


def longest_run(bits) -> float:
    x = _bits(bits)
    M, lo, hi, pi = _longest_run_table(x.size)
    N = x.size // M
    longest = _longest_ones(x[: N * M].reshape(N, M).astype(np.int64))
    v = np.bincount(np.clip(longest, lo, hi) - lo, minlength=len(pi)).astype(float)
    expected = N * np.asarray(pi)
    chi2 = float(((v - expected) ** 2 / expected).sum())
    return float(gammaincc((len(pi) - 1) / 2.0, chi2 / 2.0))


def cumulative_sums(bits, mode: str = "forward") -> float:
    x = _bits(bits)
    n = x.size
    if n == 0:
        raise InapplicableTestError("cumulative_sums: empty sequence")
    if mode not in ("forward", "backward"):
        raise ValueError("mode must be 'forward' or 'backward'")
    steps = 2 * x.astype(np.int64) - 1
    if mode == "backward":
        steps = steps[::-1]
    z = int(np.abs(np.cumsum(steps)).max())
    sn = math.sqrt(n)
    total = 1.0
    for k in range(int((-n / z + 1) / 4), int((n / z - 1) / 4) + 1):
        total -= norm.cdf((4 * k + 1) * z / sn) - norm.cdf((4 * k - 1) * z / sn)
    for k in range(int((-n / z - 3) / 4), int((n / z - 1) / 4) + 1):
        total += norm.cdf((4 * k + 3) * z / sn) - norm.cdf((4 * k + 1) * z / sn)
    return float(min(max(total, 0.0), 1.0))


def pattern_counts(x: np.ndarray, m: int) -> np.ndarray:
    """Counts of every overlapping m-bit pattern, wrapping around the end."""
    n = x.size
    if m == 0:
        return np.array([n], dtype=np.int64)
    ext = np.concatenate([x, x[: m - 1]]).astype(np.int64)
    idx = np.zeros(n, dtype=np.int64)
    for j in range(m):
        idx = (idx << 1) | ext[j:j + n]
    return np.bincount(idx, minlength=2 ** m)


def approximate_entropy(bits, m: int = 10) -> float:
    x = _bits(bits)
    n = x.size
    if m < 1 or n < m + 1:
        raise InapplicableTestError(f"approximate_entropy: need more than {m} bits")

    def phi(mm):
        c = pattern_counts(x, mm)
        c = c[c > 0] / n
        return float((c * np.log(c)).sum())

    apen = phi(m) - phi(m + 1)
    chi2 = 2.0 * n * (math.log(2) - apen)
    return float(gammaincc(2 ** (m - 1), chi2 / 2.0))


def serial(bits, m: int = 2) -> tuple[float, float]:
    x = _bits(bits)
    n = x.size
    if m < 2 or n < m:
        raise InapplicableTestError(f"serial: need m >= 2 and at least {m} bits")

    def psi2(mm):
        if mm <= 0:
            return 0.0
        c = pattern_counts(x, mm).astype(float)
        return float((c * c).sum()) * 2 ** mm / n - n

    p0, p1, p2 = psi2(m), psi2(m - 1), psi2(m - 2)
    d1 = p0 - p1
    d2 = p0 - 2 * p1 + p2
    return float(gammaincc(2 ** (m - 2), d1 / 2.0)), float(gammaincc(2 ** (m - 3), d2 / 2.0))


# -- batch evaluation ------------------------------------------------------------

TEST_NAMES = (
    "frequency",
    "block_frequency",
    "runs",
    "longest_run",
    "cumulative_sums_forward",
    "cumulative_sums_backward",
    "approximate_entropy",
    "serial_1",
    "serial_2",
)

# recommended minimum sequence lengths (bits) for the statistic's approximation
MIN_LENGTH = {"frequency": 100, "block_frequency": 100, "runs": 100, "longest_run": 128,
              "cumulative_sums": 100, "serial": 100}


def run_all(bits, block_M: int = 128, apen_m: int = 10, serial_m: int = 2) -> dict[str, float]:
    """p-values of every implemented test; NaN marks an inapplicable test."""
    x = _bits(bits)
    n = x.size
    out: dict[str, float] = {}

    def attempt(names, fn, minimum):
        try:
            if n < minimum:
                raise InapplicableTestError("below recommended length")
            vals = fn()
        except InapplicableTestError:
            vals = (math.nan,) * len(names)
        if not isinstance(vals, tuple):
            vals = (vals,)
        out.update(zip(names, vals))

    attempt(["frequency"], lambda: frequency(x), MIN_LENGTH["frequency"])
    attempt(["block_frequency"], lambda: block_frequency(x, block_M), max(MIN_LENGTH["block_frequency"], block_M))
    attempt(["runs"], lambda: runs(x), MIN_LENGTH["runs"])
    attempt(["longest_run"], lambda: longest_run(x), MIN_LENGTH["longest_run"])
    attempt(["cumulative_sums_forward"], lambda: cumulative_sums(x, "forward"), MIN_LENGTH["cumulative_sums"])
    attempt(["cumulative_sums_backward"], lambda: cumulative_sums(x, "backward"), MIN_LENGTH["cumulative_sums"])
    # approximate entropy needs m < floor(log2 n) - 5
    apen_min = 2 ** (apen_m + 6)
    attempt(["approximate_entropy"], lambda: approximate_entropy(x, apen_m), apen_min)
    attempt(["serial_1", "serial_2"], lambda: serial(x, serial_m), max(MIN_LENGTH["serial"], 2 ** (serial_m + 2)))
    return out


def proportion_interval(n_sequences: int, alpha: float = 0.01) -> tuple[float, float]:
    """Acceptable range of pass proportions: p +- 3 sqrt(p (1 - p) / m)."""
    p = 1.0 - alpha
    half = 3.0 * math.sqrt(p * alpha / n_sequences)
    return p - half, p + half


def uniformity_pvalue(pvalues: np.ndarray) -> float:
    """Chi-square test of p-value uniformity over ten bins."""
    pv = pvalues[~np.isnan(pvalues)]
    if pv.size == 0:
        return math.nan
    counts = np.histogram(pv, bins=10, range=(0.0, 1.0))[0]
    expected = pv.size / 10.0
    chi2 = float(((counts - expected) ** 2 / expected).sum())
    return float(gammaincc(4.5, chi2 / 2.0))


@dataclass
class TestReport:
    __test__ = False  # not a pytest class

    pvalues: np.ndarray  # (sequences, tests); NaN = inapplicable
    tests: tuple[str, ...] = TEST_NAMES
    alpha: float = 0.01
    sequence_len: int = 1_000_000
    not_implemented: tuple[str, ...] = field(default=NOT_IMPLEMENTED)

    @property
    def n_sequences(self) -> int:
        return self.pvalues.shape[0]

    @property
    def interval(self) -> tuple[float, float]:
        return proportion_interval(self.n_sequences, self.alpha)

    def applicable(self, test: str) -> bool:
        return bool(np.any(~np.isnan(self.pvalues[:, self.tests.index(test)])))

    def proportion(self, test: str) -> float:
        col = self.pvalues[:, self.tests.index(test)]
        col = col[~np.isnan(col)]
        return float(np.mean(col >= self.alpha)) if col.size else math.nan

    def uniformity(self, test: str) -> float:
        return uniformity_pvalue(self.pvalues[:, self.tests.index(test)])

    def passed(self, test: str) -> bool | None:
        """None for inapplicable tests."""
        if not self.applicable(test):
            return None
        lo, hi = self.interval
        return lo <= self.proportion(test) <= hi

    @property
    def verdict(self) -> bool:
        """True when every applicable implemented test passes."""
        results = [self.passed(t) for t in self.tests]
        applied = [r for r in results if r is not None]
        return bool(applied) and all(applied)

    def rows(self) -> list[tuple]:
        out = []
        for t in self.tests:
            status = {None: "inapplicable", True: "pass", False: "fail"}[self.passed(t)]
            out.append((t, self.proportion(t), self.uniformity(t), status))
        out += [(t, math.nan, math.nan, "not implemented") for t in self.not_implemented]
        return out

    def summary(self) -> str:
        lo, hi = self.interval
        lines = [f"sequences={self.n_sequences} length={self.sequence_len} alpha={self.alpha} "
                 f"interval=[{lo:.4f}, {hi:.4f}]"]
        for t, prop, unif, status in self.rows():
            lines.append(f"{t:28s} {prop:8.4f} {unif:8.4f}  {status}")
        lines.append(f"verdict: {'PASS' if self.verdict else 'FAIL'}")
        return "\n".join(lines)


def evaluate(bits, sequence_len: int = 1_000_000, alpha: float = 0.01, **params) -> TestReport:
    """Split into ``sequence_len``-bit sequences and run every implemented test on each."""
    x = _bits(bits)
    if sequence_len < 1 or x.size < sequence_len:
        raise ValueError("bitstream is shorter than one sequence")
    n_seq = x.size // sequence_len
    pv = np.empty((n_seq, len(TEST_NAMES)))
    for i in range(n_seq):
        res = run_all(x[i * sequence_len:(i + 1) * sequence_len], **params)
        pv[i] = [res[t] for t in TEST_NAMES]
    return TestReport(pv, TEST_NAMES, alpha, sequence_len)


def bytes_to_bits(data: bytes) -> np.ndarray:
    return np.unpackbits(np.frombuffer(data, dtype=np.uint8))
