import csv
import io
import json
import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from graspbci.classify_lda import CspOvrLda
from graspbci.errors import PipelineError, TooFewTrials
from graspbci.evaluate import (ComparisonReport, CvReport, SubjectResult, compare_pipelines,
                               render_report, run_cv, stratified_folds)
from graspbci.pipeline import DecoderConfig, PipelineConfig, prepare_dataset

# published per-subject accuracies, mean and std per column
# (ME conventional, ME proposed, MI conventional, MI proposed), used as layout fixtures
PUBLISHED = {
    "Sub 1": [(0.6770, 0.0294), (0.8338, 0.1021), (0.5125, 0.0350), (0.5552, 0.0433)],
    "Sub 2": [(0.5140, 0.0503), (0.7787, 0.0935), (0.4601, 0.1305), (0.4117, 0.0637)],
    "Sub 3": [(0.5380, 0.1113), (0.6227, 0.1208), (0.3475, 0.0751), (0.3933, 0.0116)],
    "Sub 4": [(0.4875, 0.0891), (0.6873, 0.0813), (0.3525, 0.0385), (0.4930, 0.0181)],
    "Sub 5": [(0.5558, 0.0699), (0.7250, 0.0732), (0.4709, 0.0407), (0.4655, 0.0974)],
    "Sub 6": [(0.6740, 0.0871), (0.6912, 0.0942), (0.3254, 0.0547), (0.3845, 0.0612)],
    "Sub 7": [(0.6832, 0.1064), (0.7312, 0.0371), (0.4003, 0.1009), (0.5439, 0.1179)],
    "Sub 8": [(0.4593, 0.1064), (0.5885, 0.0371), (0.4494, 0.1009), (0.5890, 0.1179)],
}


def cells_with(mean, std, shape=(10, 10)):
    """Cells whose mean and sample std (ddof=1) equal the given values."""
    n = shape[0] * shape[1]
    d = std * math.sqrt((n - 1) / n)
    return (mean + d * np.resize([1.0, -1.0], n)).reshape(shape)


def comparison(conv, prop):
    return ComparisonReport(CvReport("conventional", cells_with(*conv)),
                            CvReport("proposed", cells_with(*prop)))


# ---------------------------------------------------------------------------
# fold plans

def test_balanced_folds():
    labels = np.repeat(np.arange(5), 50)
    plan = stratified_folds(labels, 10, 10, seed=4)
    for rep in range(10):
        for fold in range(10):
            assert np.bincount(labels[plan.test_index(rep, fold)], minlength=5).tolist() == [5] * 5
    again = stratified_folds(labels, 10, 10, seed=4)
    np.testing.assert_array_equal(plan.assignments, again.assignments)
    assert not np.array_equal(plan.assignments, stratified_folds(labels, 10, 10, 5).assignments)


def test_too_few_trials():
    labels = np.r_[np.repeat(np.arange(4), 10), np.full(7, 4)]
    with pytest.raises(TooFewTrials):
        stratified_folds(labels, 10)


def check_plan(labels, plan):
    n, k = len(labels), plan.folds_per_rep
    classes, counts = np.unique(labels, return_counts=True)
    for rep in range(plan.repetitions):
        tests = [plan.test_index(rep, f) for f in range(k)]
        joined = np.sort(np.concatenate(tests))
        np.testing.assert_array_equal(joined, np.arange(n))  # disjoint and covering
        for f, t in enumerate(tests):
            np.testing.assert_array_equal(plan.train_index(rep, f), np.setdiff1d(np.arange(n), t))
            for c, n_c in zip(classes, counts):
                assert abs(np.sum(labels[t] == c) - n_c / k) < 1.0 + 1e-12


@st.composite
def label_sets(draw):
    k = draw(st.integers(2, 10))
    counts = draw(st.lists(st.integers(k, 4 * k), min_size=2, max_size=5))
    labels = np.repeat(np.arange(len(counts)), counts)
    perm = np.random.default_rng(draw(st.integers(0, 2**31))).permutation(len(labels))
    return labels[perm], k


@settings(max_examples=150, deadline=None)
@given(label_sets(), st.integers(0, 2**31), st.integers(1, 3))
def test_partition_and_stratification(ls, seed, reps):
    labels, k = ls
    check_plan(labels, stratified_folds(labels, k, reps, seed))


# ---------------------------------------------------------------------------
# cross-validation

CONV = PipelineConfig()
PROP = CONV.as_proposed(segment_lengths=(1.0, 2.0))


@pytest.fixture(scope="module")
def dataset(small_session):
    rec, _ = small_session
    return prepare_dataset(rec, CONV)


def test_run_cv_is_deterministic(dataset):
    plan = stratified_folds(dataset.labels, 5, 2, seed=3)
    a = compare_pipelines(dataset, CONV, PROP, plan)
    b = compare_pipelines(dataset, CONV, PROP, plan)
    assert a.to_json() == b.to_json()
    assert a.conventional.per_cell.shape == (2, 5)
    assert all(L in (1.0, 2.0) for row in a.proposed.chosen_segment_length_s for L in row)
    assert a.proposed.confusion.sum() == 2 * len(dataset)
    assert np.trace(a.proposed.confusion) == round(a.proposed.mean * 2 * len(dataset))


def test_degenerate_proposed_equals_conventional(dataset):
    plan = stratified_folds(dataset.labels, 5, 2, seed=0)
    degenerate = CONV.as_proposed(fixed_onset_s=0.0, segment_lengths=(4.0,))
    comp = compare_pipelines(dataset, CONV, degenerate, plan)
    assert comp.delta_mean == 0.0
    np.testing.assert_array_equal(comp.proposed.per_cell, comp.conventional.per_cell)


class _Recorder(CspOvrLda):
    """Decoder that keeps the serialized model of every fit call."""

    log: list = []

    def fit(self, prepared, labels):
        model = super().fit(prepared, labels)
        self.log.append(model.to_json())
        return model


@pytest.mark.parametrize("cfg", [CONV, PROP], ids=["conventional", "proposed"])
def test_no_leakage(dataset, cfg, monkeypatch):
    """Changing a test-fold trial never changes the model fitted for that cell."""
    monkeypatch.setattr(DecoderConfig, "build", lambda self: _Recorder())
    plan = stratified_folds(dataset.labels, 5, 1, seed=9)
    victim = int(plan.test_index(0, 2)[0])

    def models(ds):
        _Recorder.log = []
        run_cv(ds, cfg, plan)
        # the last fit of each cell is the final model (earlier ones are inner CV)
        per_cell = len(_Recorder.log) // plan.folds_per_rep
        return _Recorder.log[per_cell - 1::per_cell]

    base = models(dataset)
    eeg, emg = dataset.eeg.data.copy(), dataset.emg.data.copy()
    rng = np.random.default_rng(1)
    eeg[victim] = rng.standard_normal(eeg[victim].shape) * 50
    emg[victim] = rng.standard_normal(emg[victim].shape) * 500
    changed = replace(dataset, eeg=replace(dataset.eeg, data=eeg),
                      emg=replace(dataset.emg, data=emg))
    other = models(changed)
    assert other[2] == base[2]
    assert sum(a != b for a, b in zip(base, other)) == plan.folds_per_rep - 1


def test_errors_are_annotated(dataset):
    plan = stratified_folds(dataset.labels, 5, 1, seed=0)
    eeg = dataset.eeg.data.copy()
    eeg[:, 1] = eeg[:, 0]  # rank-deficient, and no shrinkage to rescue it
    ds = replace(dataset, eeg=replace(dataset.eeg, data=eeg))
    bad = replace(CONV, decoder=DecoderConfig(csp_shrinkage=0.0))
    with pytest.raises(PipelineError) as err:
        run_cv(ds, bad, plan)
    assert err.value.context == {"rep": 0, "fold": 0}
    assert "SingularComposite" in str(err.value)


# ---------------------------------------------------------------------------
# reports

def test_cells_helper_oracle():
    c = cells_with(0.6770, 0.0294)
    assert np.mean(c) == pytest.approx(0.6770, abs=1e-12)
    assert np.std(c, ddof=1) == pytest.approx(0.0294, abs=1e-12)


def test_published_rows_and_average():
    results = []
    for sub, cols in PUBLISHED.items():
        results.append(SubjectResult(sub, "ME", comparison(cols[0], cols[1])))
        results.append(SubjectResult(sub, "MI", comparison(cols[2], cols[3])))
    md = render_report(results, "markdown").splitlines()
    assert md[0] == ("| Subject | ME Conventional | ME Proposed | MI Conventional "
                     "| MI Proposed |")
    assert md[2] == ("| Sub 1 | 0.6770 (±0.0294) | 0.8338 (±0.1021) | 0.5125 (±0.0350) "
                     "| 0.5552 (±0.0433) |")
    assert md[-1] == ("| Average (±Std.) | 0.5736 (±0.0913) | 0.7073 (±0.0792) "
                      "| 0.4148 (±0.0682) | 0.4795 (±0.0786) |")
    assert len(md) == 2 + 8 + 1


def test_csv_and_jsonl_rows():
    res = [SubjectResult("Sub 1", "ME", comparison((0.6770, 0.0294), (0.8338, 0.1021)))]
    rows = list(csv.DictReader(io.StringIO(render_report(res, "csv"))))
    assert [(r["pipeline"], r["mean"], r["std"]) for r in rows] == [
        ("conventional", "0.677", "0.0294"), ("proposed", "0.8338", "0.1021")]
    assert rows[0]["delta_mean"] == "0.1568"
    lines = render_report(res, "jsonl").splitlines()
    assert [json.loads(x)["pipeline"] for x in lines] == ["conventional", "proposed"]
    assert render_report(res[0], "md") == render_report(res, "markdown")
