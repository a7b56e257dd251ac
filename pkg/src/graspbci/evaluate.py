"""Repeated stratified cross-validation and conventional-vs-proposed reports."""
from __future__ import annotations

import csv
import io
import json
import statistics
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .emg_gating import (apply_segments, choose_length_prepared, compute_envelopes,
                         decide_segments, fit_thresholds, onsets_from_envelopes)
from .errors import GraspBCIError, PipelineError, TooFewTrials
from .io_formats import Recording
from .pipeline import DatasetTrials, PipelineConfig, prepare_dataset

__all__ = ["FoldPlan", "CvReport", "ComparisonReport", "SubjectResult",
           "stratified_folds", "run_cv", "compare_pipelines", "render_report"]

N_CLASSES = 5


@dataclass(frozen=True)
class FoldPlan:
    """Fold index of every trial, one row per repetition."""

    repetitions: int
    folds_per_rep: int
    assignments: np.ndarray  # (repetitions, n_trials)
    seed: int

    def test_index(self, rep: int, fold: int) -> np.ndarray:
        return np.flatnonzero(self.assignments[rep] == fold)

    def train_index(self, rep: int, fold: int) -> np.ndarray:
        return np.flatnonzero(self.assignments[rep] != fold)

    @property
    def n_trials(self) -> int:
        return self.assignments.shape[1]


def stratified_folds(labels: Sequence[int], k: int = 10, reps: int = 10,
                     seed: int = 0) -> FoldPlan:
    """Shuffle each class with a seeded generator and deal trials round-robin.

    The dealing position carries over from one class to the next so that
    fold sizes stay balanced when class counts are not multiples of k.
    """
    labels = np.asarray(labels)
    if k < 2:
        raise TooFewTrials(f"need at least 2 folds, got {k}")
    classes, counts = np.unique(labels, return_counts=True)
    short = [int(c) for c, n in zip(classes, counts) if n < k]
    if short or len(labels) == 0:
        raise TooFewTrials(f"class(es) {short} have fewer than {k} trials", classes=short)
    assignments = np.empty((reps, len(labels)), dtype=int)
    for rep in range(reps):
        rng = np.random.default_rng([seed, rep])
        pos = 0
        for c in classes:
            members = rng.permutation(np.flatnonzero(labels == c))
            assignments[rep, members] = (pos + np.arange(len(members))) % k
            pos = (pos + len(members)) % k
    return FoldPlan(reps, k, assignments, seed)


@dataclass(frozen=True)
class CvReport:
    pipeline: str
    per_cell: np.ndarray  # (repetitions, folds) accuracies
    gating_fallback_rate: float = 0.0
    chosen_segment_length_s: list = field(default_factory=list)  # per repetition, per fold
    confusion: np.ndarray = field(default_factory=lambda: np.zeros((N_CLASSES, N_CLASSES), int))

    @property
    def mean(self) -> float:
        return float(np.mean(self.per_cell))

    @property
    def std(self) -> float:
        cells = np.ravel(self.per_cell)
        return float(np.std(cells, ddof=1)) if cells.size > 1 else 0.0

    def to_dict(self) -> dict:
        return {
            "pipeline": self.pipeline,
            "mean": self.mean,
            "std": self.std,
            "per_cell": np.asarray(self.per_cell).tolist(),
            "gating_fallback_rate": self.gating_fallback_rate,
            "chosen_segment_length_s": self.chosen_segment_length_s,
            "confusion": np.asarray(self.confusion).tolist(),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


@dataclass(frozen=True)
class ComparisonReport:
    conventional: CvReport
    proposed: CvReport

    @property
    def delta_mean(self) -> float:
        return self.proposed.mean - self.conventional.mean

    def to_dict(self) -> dict:
        return {"conventional": self.conventional.to_dict(),
                "proposed": self.proposed.to_dict(), "delta_mean": self.delta_mean}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


# ---------------------------------------------------------------------------
# cross-validation

class _SegmentCache:
    """Decoder representations of gated segments, keyed by (trial, start sample)."""

    def __init__(self, eeg, decoder):
        self.eeg = eeg
        self.decoder = decoder
        self._store = {}

    def stack(self, trial_idx, decisions, length_s):
        fs = self.eeg.fs_hz
        n = int(round(length_s * fs))
        missing = []
        keys = []
        for i in trial_idx:
            i0 = int(round((decisions[i].segment[0] - self.eeg.t0_offset_s) * fs))
            key = (int(i), i0, n)
            keys.append(key)
            if key not in self._store:
                missing.append((key, i))
        if missing:
            sub = self.eeg.subset([i for _, i in missing])
            gated = apply_segments(sub, [decisions[i] for _, i in missing], modality=None)
            prepared = self.decoder.prepare(gated.data)
            for j, (key, _) in enumerate(missing):
                self._store[key] = prepared[j:j + 1]
        return _concat([self._store[k] for k in keys])


def _concat(parts):
    first = parts[0]
    cls = type(first)
    if hasattr(first, "norm"):
        return cls(np.concatenate([p.norm for p in parts]),
                   np.concatenate([p.sample for p in parts]))
    return np.concatenate(parts)


def _accuracy(pred, truth) -> float:
    return float(np.mean(np.asarray(pred) == np.asarray(truth)))


def run_cv(dataset: Recording | DatasetTrials, pipeline: PipelineConfig,
           plan: FoldPlan) -> CvReport:
    """Evaluate one pipeline on every (repetition, fold) cell of `plan`.

    For the proposed pipeline the EMG threshold and the segment length are
    learned from the training trials of each cell only.
    """
    trials = dataset if isinstance(dataset, DatasetTrials) else prepare_dataset(dataset, pipeline)
    labels = trials.labels
    if len(labels) != plan.n_trials:
        raise ValueError(f"fold plan covers {plan.n_trials} trials, dataset has {len(labels)}")
    decoder = pipeline.decoder.build()
    span = pipeline.trial_span
    cells = np.zeros((plan.repetitions, plan.folds_per_rep))
    confusion = np.zeros((N_CLASSES, N_CLASSES), dtype=int)
    chosen: list[list[float]] = []
    fallbacks = 0
    decided = 0

    if pipeline.mode == "conventional":
        fixed = decoder.prepare(trials.eeg.crop(*span).data)
    else:
        gcfg = pipeline.gating
        cache = _SegmentCache(trials.eeg, decoder)
        envs = None
        if gcfg.fixed_onset_s is None:
            if trials.emg is None:
                raise PipelineError("proposed pipeline needs an EMG channel")
            envs = compute_envelopes(trials.emg, gcfg)
        lengths = sorted(set(float(x) for x in gcfg.segment_lengths))

    for rep in range(plan.repetitions):
        chosen.append([])
        for fold in range(plan.folds_per_rep):
            train, test = plan.train_index(rep, fold), plan.test_index(rep, fold)
            try:
                if pipeline.mode == "conventional":
                    model = decoder.fit(fixed[train], labels[train])
                    pred = decoder.predict(model, fixed[test])
                else:
                    if envs is None:
                        onsets = [float(gcfg.fixed_onset_s)] * len(labels)
                    else:
                        onsets = onsets_from_envelopes(
                            envs, fit_thresholds(envs, gcfg, train), gcfg)
                    by_len = {L: decide_segments(onsets, L, span) for L in lengths}
                    if len(lengths) > 1:
                        inner_seed = int(np.random.SeedSequence(
                            [plan.seed, rep, fold]).generate_state(1)[0])
                        prepared = {L: cache.stack(train, by_len[L], L) for L in lengths}
                        best, _ = choose_length_prepared(prepared, labels[train], decoder,
                                                         gcfg.inner_folds, inner_seed)
                        train_rep = prepared[best]
                    else:
                        best = lengths[0]
                        train_rep = cache.stack(train, by_len[best], best)
                    model = decoder.fit(train_rep, labels[train])
                    pred = decoder.predict(model, cache.stack(test, by_len[best], best))
                    chosen[-1].append(best)
                    fallbacks += sum(by_len[best][i].fallback_used for i in test)
                    decided += len(test)
            except GraspBCIError as exc:
                raise PipelineError(f"rep {rep}, fold {fold}: {type(exc).__name__}: {exc}",
                                    rep=rep, fold=fold) from exc
            cells[rep, fold] = _accuracy(pred, labels[test])
            np.add.at(confusion, (labels[test], np.asarray(pred)), 1)

    name = pipeline.mode
    rate = fallbacks / decided if decided else 0.0
    return CvReport(name, cells, float(rate), chosen if pipeline.mode == "proposed" else [],
                    confusion)


def compare_pipelines(dataset: Recording | DatasetTrials, conventional_cfg: PipelineConfig,
                      proposed_cfg: PipelineConfig, plan: FoldPlan) -> ComparisonReport:
    """Run both pipelines on the same fold plan.

    Preprocessing is shared when both configs agree on it.
    """
    if isinstance(dataset, Recording):
        conv_trials = prepare_dataset(dataset, conventional_cfg)
        if (proposed_cfg.preprocess == conventional_cfg.preprocess
                and proposed_cfg.gating.threshold.baseline_window_s
                == conventional_cfg.gating.threshold.baseline_window_s):
            prop_trials = conv_trials
        else:
            prop_trials = prepare_dataset(dataset, proposed_cfg)
    else:
        conv_trials = prop_trials = dataset
    return ComparisonReport(run_cv(conv_trials, conventional_cfg.as_conventional(), plan),
                            run_cv(prop_trials, proposed_cfg, plan))


# ---------------------------------------------------------------------------
# reporting

@dataclass(frozen=True)
class SubjectResult:
    subject_id: str
    paradigm: str
    comparison: ComparisonReport


def _cell(mean: float, std: float) -> str:
    return f"{mean:.4f} (±{std:.4f})"


def _paradigms(results: Sequence[SubjectResult]) -> list[str]:
    seen = []
    for r in results:
        if r.paradigm not in seen:
            seen.append(r.paradigm)
    order = {"ME": 0, "MI": 1}
    return sorted(seen, key=lambda p: (order.get(p, 2), seen.index(p)))


def _markdown(results: Sequence[SubjectResult]) -> str:
    paradigms = _paradigms(results)
    subjects = list(dict.fromkeys(r.subject_id for r in results))
    lookup = {(r.subject_id, r.paradigm): r.comparison for r in results}
    header = ["Subject"] + [f"{p} {side}" for p in paradigms
                            for side in ("Conventional", "Proposed")]
    lines = ["| " + " | ".join(header) + " |", "|" + "---|" * len(header)]
    columns: dict[tuple[str, str], list[float]] = {}
    for sub in subjects:
        row = [sub]
        for p in paradigms:
            comp = lookup.get((sub, p))
            for side in ("conventional", "proposed"):
                if comp is None:
                    row.append("n/a")
                    continue
                rep = getattr(comp, side)
                row.append(_cell(rep.mean, rep.std))
                columns.setdefault((p, side), []).append(round(rep.mean, 4))
        lines.append("| " + " | ".join(row) + " |")
    avg = ["Average (±Std.)"]
    for p in paradigms:
        for side in ("conventional", "proposed"):
            vals = columns.get((p, side), [])
            if not vals:
                avg.append("n/a")
                continue
            sd = statistics.stdev(vals) if len(vals) > 1 else 0.0
            avg.append(_cell(statistics.fmean(vals), sd))
    lines.append("| " + " | ".join(avg) + " |")
    return "\n".join(lines) + "\n"


def _rows(results: Sequence[SubjectResult]):
    for r in results:
        for side in ("conventional", "proposed"):
            rep = getattr(r.comparison, side)
            lengths = [x for row in rep.chosen_segment_length_s for x in row]
            yield {
                "subject": r.subject_id, "paradigm": r.paradigm, "pipeline": side,
                "mean": round(rep.mean, 4), "std": round(rep.std, 4),
                "n_cells": int(np.size(rep.per_cell)),
                "fallback_rate": round(rep.gating_fallback_rate, 4),
                "median_segment_length_s": float(np.median(lengths)) if lengths else None,
                "delta_mean": round(r.comparison.delta_mean, 4),
            }


def render_report(results: SubjectResult | Sequence[SubjectResult], fmt: str = "markdown") -> str:
    """Render results as a per-subject markdown table, CSV or JSON lines.

    Cells are ``mean (±std)`` rounded to 4 decimals; the markdown average
    row is the mean (±sample std) of the rounded per-subject means.
    """
    if isinstance(results, SubjectResult):
        results = [results]
    fmt = {"md": "markdown", "jsonl": "json-lines"}.get(fmt, fmt)
    if fmt == "markdown":
        return _markdown(results)
    rows = list(_rows(results))
    if fmt == "csv":
        buf = io.StringIO()
        writer = csv.DictWriter(buf, fieldnames=list(rows[0]) if rows else ["subject"],
                                lineterminator="\n")
        writer.writeheader()
        writer.writerows(rows)
        return buf.getvalue()
    if fmt == "json-lines":
        return "".join(json.dumps(row, sort_keys=True) + "\n" for row in rows)
    raise ValueError(f"unknown report format {fmt!r}")
