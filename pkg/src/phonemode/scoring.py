"""Evaluation metrics: phone error rate from a minimum-edit-distance
alignment, normalized correlation between contours, the within/between-mode
correlation report, and grouped accuracy tables.

Error rate is (S + D + I) / N where N is the reference length.  When several
alignments reach the minimum cost, the backtrace prefers substitution over
insertion over deletion so the individual counts are reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import EmptyReferenceError, UndefinedCorrelationError

WM_BM_UTTERANCE_CAP = 50  # utterances per cell entering the correlation means


@dataclass(frozen=True)
class AlignmentCounts:
    substitutions: int
    deletions: int
    insertions: int
    ref_length: int

    @property
    def error_rate(self) -> float:
        return (self.substitutions + self.deletions + self.insertions) / self.ref_length


def phone_error_rate(ref, hyp) -> tuple[float, AlignmentCounts]:
    """Minimum-edit-distance phone error rate with deterministic counts.

    Accepts any two sequences of comparable symbols (phone indices or labels).
    """
    ref = list(ref)
    hyp = list(hyp)
    if not ref:
        raise EmptyReferenceError("reference transcript is empty")
    n, m = len(ref), len(hyp)
    cost = np.zeros((n + 1, m + 1), dtype=np.int64)
    cost[:, 0] = np.arange(n + 1)  # all deletions
    cost[0, :] = np.arange(m + 1)  # all insertions
    for i in range(1, n + 1):
        for j in range(1, m + 1):
            sub = cost[i - 1, j - 1] + (ref[i - 1] != hyp[j - 1])
            ins = cost[i, j - 1] + 1
            dele = cost[i - 1, j] + 1
            cost[i, j] = min(sub, ins, dele)

    s = d = ins_count = 0
    i, j = n, m
    while i > 0 or j > 0:
        here = cost[i, j]
        if i > 0 and j > 0 and here == cost[i - 1, j - 1] + (ref[i - 1] != hyp[j - 1]):
            if ref[i - 1] != hyp[j - 1]:
                s += 1
            i -= 1
            j -= 1
        elif j > 0 and here == cost[i, j - 1] + 1:
            ins_count += 1
            j -= 1
        else:
            d += 1
            i -= 1
    counts = AlignmentCounts(s, d, ins_count, n)
    return counts.error_rate, counts


def correlation_coefficient(r_values, q_values) -> float:
    """Mean product of the standardized signals (population std, 1/L factor)."""
    r = np.asarray(getattr(r_values, "values", r_values), dtype=np.float64)
    q = np.asarray(getattr(q_values, "values", q_values), dtype=np.float64)
    if r.shape != q.shape or r.ndim != 1 or len(r) < 2:
        raise ValueError("inputs must be equal-length 1-D sequences, length >= 2")
    sr = float(np.std(r))
    sq = float(np.std(q))
    if sr == 0.0 or sq == 0.0:
        raise UndefinedCorrelationError("correlation undefined for zero-variance input")
    return float(np.mean(((r - r.mean()) / sr) * ((q - q.mean()) / sq)))


@dataclass
class CorrelationReport:
    feature_kind: str  # "pitch" | "epoch_strength"
    within_mode: dict   # (language, mode) -> float | None
    between_mode: dict  # (language, (mode_a, mode_b)) -> float | None
    skipped_pairs: int = 0


def _mean_cross_correlation(group_a: list[np.ndarray], group_b: list[np.ndarray]):
    total = 0.0
    count = 0
    skipped = 0
    for a in group_a:
        for b in group_b:
            if a is b:
                continue
            try:
                total += correlation_coefficient(a, b)
                count += 1
            except UndefinedCorrelationError:
                skipped += 1
    return (total / count if count else None), skipped


def mode_correlation_report(contours_by_key: dict, feature_kind: str) -> CorrelationReport:
    """Within-mode vs between-mode mean correlation per language.

    `contours_by_key` maps (language, mode, speaker_id) to a list of 1-D
    contour arrays.  The language's mean contour (over every speaker and
    mode) is subtracted from each contour first, normalizing what all
    speakers of the language share.  Within-mode cells need at least two
    speakers, else the cell is reported as unavailable (None).
    """
    capped: dict[tuple, list[np.ndarray]] = {}
    for key, contours in contours_by_key.items():
        stack = [np.asarray(getattr(c, "values", c), dtype=np.float64) for c in contours]
        capped[key] = stack[:WM_BM_UTTERANCE_CAP]
    lang_means: dict[str, np.ndarray] = {}
    for lang in {k[0] for k in capped}:
        rows = [c for k, cs in capped.items() if k[0] == lang for c in cs]
        lang_means[lang] = np.mean(rows, axis=0)
    centered = {k: [c - lang_means[k[0]] for c in cs] for k, cs in capped.items()}

    languages = sorted({k[0] for k in centered})
    within: dict = {}
    between: dict = {}
    skipped = 0
    for lang in languages:
        modes = sorted({k[1] for k in centered if k[0] == lang})
        for mode in modes:
            speakers = sorted(k[2] for k in centered if k[:2] == (lang, mode))
            if len(speakers) < 2:
                within[(lang, mode)] = None
                continue
            pair_values = []
            for ia in range(len(speakers)):
                for ib in range(ia + 1, len(speakers)):
                    value, sk = _mean_cross_correlation(
                        centered[(lang, mode, speakers[ia])],
                        centered[(lang, mode, speakers[ib])])
                    skipped += sk
                    if value is not None:
                        pair_values.append(value)
            within[(lang, mode)] = float(np.mean(pair_values)) if pair_values else None
        for ia in range(len(modes)):
            for ib in range(ia + 1, len(modes)):
                group_a = [c for k, cs in centered.items()
                           if k[0] == lang and k[1] == modes[ia] for c in cs]
                group_b = [c for k, cs in centered.items()
                           if k[0] == lang and k[1] == modes[ib] for c in cs]
                value, sk = _mean_cross_correlation(group_a, group_b)
                skipped += sk
                between[(lang, (modes[ia], modes[ib]))] = value
    return CorrelationReport(feature_kind, within, between, skipped)


@dataclass
class AccuracyReport:
    rows: list  # (group key tuple, n_items, n_correct, accuracy)
    overall_n: int
    overall_correct: int

    @property
    def overall_accuracy(self) -> float:
        return self.overall_correct / self.overall_n if self.overall_n else float("nan")


def accuracy_table(predictions, labels, group_keys) -> AccuracyReport:
    """Per-group accuracy plus the overall figure.

    `group_keys` holds one hashable key (e.g. (language, mode)) per item;
    groups appear sorted by key.  Empty inputs yield an empty report.
    """
    predictions = list(predictions)
    labels = list(labels)
    group_keys = list(group_keys)
    if not (len(predictions) == len(labels) == len(group_keys)):
        raise ValueError("predictions, labels and group_keys must have equal length")
    stats: dict = {}
    for p, y, k in zip(predictions, labels, group_keys):
        n, c = stats.get(k, (0, 0))
        stats[k] = (n + 1, c + (1 if p == y else 0))
    rows = [(k, n, c, c / n) for k, (n, c) in sorted(stats.items())]
    total_n = sum(n for _, n, _, _ in rows)
    total_c = sum(c for _, _, c, _ in rows)
    return AccuracyReport(rows, total_n, total_c)
