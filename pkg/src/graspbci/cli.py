"""Command-line front end.

    graspbci synth      --config run.toml [--out DIR] [--seed N]
    graspbci inspect    PATH [--config run.toml]
    graspbci preprocess --config run.toml [--out DIR]
    graspbci gate       --config run.toml [--out DIR]
    graspbci compare    --config run.toml [--out DIR] [--seed N] [--format md|csv|jsonl]

The config file is TOML with one table per stage (input, output,
preprocess, gating, decoder, eval, synth); flags only override keys.
Failures print a JSON error record on stderr and exit nonzero.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import shutil
import sys
from dataclasses import dataclass, replace
from pathlib import Path
from statistics import median

import numpy as np

from .errors import ConfigError, GraspBCIError, InvalidSpec
from .io_formats import Modality, load_recording, save_session_bundle
from .pipeline import pipeline_from_mapping, prepare_dataset

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

log = logging.getLogger("graspbci")

EXIT_RUNTIME = 1
EXIT_CONFIG = 2


# ---------------------------------------------------------------------------
# config

@dataclass
class RunConfig:
    raw: dict
    path: Path | None
    out_dir: Path | None
    seed: int | None
    fmt: str

    def section(self, name) -> dict:
        value = self.raw.get(name, {})
        if not isinstance(value, dict):
            raise ConfigError(f"[{name}] must be a table", key=name)
        return dict(value)

    def resolve(self, p) -> Path:
        p = Path(p)
        if not p.is_absolute() and self.path is not None:
            p = self.path.parent / p
        return p


def load_config(args) -> RunConfig:
    raw, path = {}, None
    if args.config:
        path = Path(args.config)
        if not path.is_file():
            raise ConfigError(f"config file not found: {path}", key="config")
        try:
            raw = tomllib.loads(path.read_text(encoding="utf-8"))
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"{path}: {exc}", key="config") from None
    out = getattr(args, "out", None) or raw.get("output", {}).get("dir")
    cfg = RunConfig(raw, path, None, getattr(args, "seed", None),
                    getattr(args, "format", None) or raw.get("report", {}).get("format", "md"))
    if out is not None:
        cfg.out_dir = Path(out) if getattr(args, "out", None) else cfg.resolve(out)
    return cfg


def _sessions(cfg: RunConfig) -> list[dict]:
    inp = cfg.section("input")
    sessions = inp.pop("sessions", None)
    if sessions is None:
        if "path" not in inp:
            raise ConfigError("[input] needs 'path' or [[input.sessions]]", key="input.path")
        sessions = [{"path": inp.pop("path"), "subject": inp.pop("subject", "Sub 1"),
                     "paradigm": inp.pop("paradigm", "ME")}]
    shared = {k: inp[k] for k in ("class_map", "rest_descriptions", "emg_labels") if k in inp}
    out = []
    for i, s in enumerate(sessions):
        if "path" not in s:
            raise ConfigError(f"input session {i} lacks 'path'", key="input.sessions.path")
        s = {**shared, **s}
        s["path"] = cfg.resolve(s["path"])
        if not s["path"].is_file():
            raise ConfigError(f"input not found: {s['path']}", key="input.path",
                              path=str(s["path"]))
        s.setdefault("subject", f"Sub {i + 1}")
        s.setdefault("paradigm", "ME")
        out.append(s)
    return out


def _load(session: dict):
    class_map = {str(k): int(v) for k, v in session.get("class_map", {}).items()}
    if not class_map:
        class_map = {f"S  {k + 1}": k for k in range(5)}
    return load_recording(session["path"], class_map, session.get("rest_descriptions", ()),
                          session.get("emg_labels"))


def _eval_settings(cfg: RunConfig) -> tuple[int, int, int]:
    ev = cfg.section("eval")
    unknown = sorted(set(ev) - {"k", "reps", "seed"})
    if unknown:
        raise ConfigError(f"unknown key(s) in [eval]: {', '.join(unknown)}", key=unknown[0])
    seed = cfg.seed if cfg.seed is not None else ev.get("seed")
    if seed is None:
        raise ConfigError("eval.seed is required (or pass --seed)", key="eval.seed")
    return int(ev.get("k", 10)), int(ev.get("reps", 10)), int(seed)


def _require_out(cfg: RunConfig) -> Path:
    if cfg.out_dir is None:
        raise ConfigError("no output directory: set [output] dir or pass --out", key="output.dir")
    return cfg.out_dir


class Staging:
    """Collect outputs in a hidden directory inside `out`, then move them in.

    On error the staging directory (and `out`, if this run created it) is
    removed, so a failed command leaves no partial outputs.
    """

    def __init__(self, out: Path):
        self.out = out
        self.created = False

    def __enter__(self):
        if not self.out.exists():
            self.out.mkdir(parents=True)
            self.created = True
        self.dir = self.out / f".staging-{os.getpid()}"
        shutil.rmtree(self.dir, ignore_errors=True)
        self.dir.mkdir()
        return self

    def path(self, name: str) -> Path:
        return self.dir / name

    def __exit__(self, exc_type, exc, tb):
        if exc_type is None:
            for f in sorted(self.dir.iterdir()):
                os.replace(f, self.out / f.name)
            self.dir.rmdir()
        else:
            shutil.rmtree(self.dir, ignore_errors=True)
            if self.created:
                shutil.rmtree(self.out, ignore_errors=True)
        return False


def _copy_config(cfg: RunConfig, stage: Staging):
    if cfg.path is not None:
        shutil.copyfile(cfg.path, stage.path("config.toml"))


# ---------------------------------------------------------------------------
# commands

def cmd_synth(cfg: RunConfig) -> int:
    from .synthgen import spec_from_mapping, gen_session

    section = cfg.section("synth")
    if cfg.seed is not None:
        section["seed"] = cfg.seed
    if section.get("seed") is None:
        raise ConfigError("synth.seed is required (or pass --seed)", key="synth.seed")
    try:
        spec = spec_from_mapping(section)
        spec.validate()
    except (TypeError, ValueError, InvalidSpec) as exc:
        raise ConfigError(f"invalid [synth]: {exc}", key="synth") from None
    out = _require_out(cfg)
    rec, truth = gen_session(spec)
    with Staging(out) as stage:
        save_session_bundle(rec, stage.path("session.json"))
        stage.path("ground_truth.json").write_text(truth.to_json() + "\n", encoding="utf-8")
        _copy_config(cfg, stage)
    print(f"wrote {out / 'session.json'}: {rec.n_channels} channels, "
          f"{len(rec.cue_markers())} trials, {rec.duration_s:.1f} s")
    return 0


def summarize(rec, path) -> str:
    n_eeg = len(rec.channels_of(Modality.EEG))
    n_emg = len(rec.channels_of(Modality.EMG))
    hist = rec.class_histogram()
    lines = [
        f"file:      {path}",
        f"channels:  {rec.n_channels} ({n_eeg} EEG, {n_emg} EMG)",
        f"labels:    {', '.join(rec.labels)}",
        f"fs:        {rec.fs_hz:g} Hz",
        f"duration:  {rec.duration_s:.3f} s ({rec.n_samples} samples)",
        f"markers:   {len(rec.markers)} ({len(rec.cue_markers())} cues)",
        "classes:   " + (", ".join(f"{k}: {n}" for k, n in hist.items()) or "none"),
    ]
    return "\n".join(lines)


def cmd_inspect(cfg: RunConfig, path: str) -> int:
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"input not found: {p}", key="path", path=str(p))
    inp = cfg.section("input") if cfg.raw else {}
    try:
        rec = _load({"path": p, **{k: inp[k] for k in ("class_map", "rest_descriptions",
                                                       "emg_labels") if k in inp}})
    except GraspBCIError as exc:
        exc.context.setdefault("file", str(p))
        raise
    print(summarize(rec, p))
    return 0


def cmd_preprocess(cfg: RunConfig) -> int:
    from .preprocess import bandpass, downsample, notch, select_channels

    pipe = pipeline_from_mapping(cfg.raw)
    sessions = _sessions(cfg)
    out = _require_out(cfg)
    pre = pipe.preprocess
    with Staging(out) as stage:
        for i, s in enumerate(sessions):
            rec = _load(s)
            if pre.notch_hz:
                rec = notch(rec, pre.notch_hz, pre.notch_bw_hz)
            rec = bandpass(rec, pre.band_lo_hz, pre.band_hi_hz, pre.filter_order,
                           only=Modality.EEG)
            if pre.channels is not None:
                emg = [rec.labels[j] for j in rec.channels_of(Modality.EMG)]
                rec = select_channels(rec, list(pre.channels) + emg)
            rec = downsample(rec, pre.downsample_factor)
            name = "preprocessed.json" if len(sessions) == 1 else f"preprocessed_{i + 1}.json"
            save_session_bundle(rec, stage.path(name))
            print(f"{s['path']} -> {out / name}")
        _copy_config(cfg, stage)
    return 0


def cmd_gate(cfg: RunConfig) -> int:
    from .emg_gating import compute_envelopes, decide_segments, fit_thresholds, onsets_from_envelopes
    from .plotting import plot_onsets

    pipe = pipeline_from_mapping(cfg.raw, mode="proposed")
    sessions = _sessions(cfg)
    out = _require_out(cfg)
    g = pipe.gating
    with Staging(out) as stage:
        rows = []
        for i, s in enumerate(sessions):
            trials = prepare_dataset(_load(s), pipe)
            if trials.emg is None:
                raise ConfigError(f"{s['path']} has no EMG channel", key="gating.emg_channel")
            envs = compute_envelopes(trials.emg, g)
            onsets = onsets_from_envelopes(envs, fit_thresholds(envs, g), g)
            for length in g.segment_lengths:
                for t, (d, y) in enumerate(zip(decide_segments(onsets, length, pipe.trial_span),
                                               trials.labels)):
                    rows.append({"subject": s["subject"], "paradigm": s["paradigm"],
                                 "trial": t, "class_id": int(y), **d.to_dict()})
            tag = f"{s['subject']}_{s['paradigm']}".replace(" ", "")
            plot_onsets(onsets, stage.path(f"onsets_{tag}.png"), g.segment_lengths,
                        title=f"{s['subject']} {s['paradigm']}")
            found = [t for t in onsets if t is not None]
            print(f"{s['subject']} {s['paradigm']}: {len(found)}/{len(onsets)} onsets detected"
                  + (f", median {median(found):.3f} s" if found else ""))
        stage.path("gating.jsonl").write_text(
            "".join(json.dumps(r, sort_keys=True) + "\n" for r in rows), encoding="utf-8")
        _copy_config(cfg, stage)
    return 0


def cmd_compare(cfg: RunConfig) -> int:
    from .emg_gating import detect_trial_onsets
    from .evaluate import SubjectResult, compare_pipelines, render_report, stratified_folds
    from .plotting import plot_cells, plot_comparison

    conventional = pipeline_from_mapping(cfg.raw, mode="conventional")
    proposed = pipeline_from_mapping(cfg.raw, mode="proposed")
    k, reps, seed = _eval_settings(cfg)
    sessions = _sessions(cfg)
    out = _require_out(cfg)
    fmt = {"md": "markdown", "markdown": "markdown", "csv": "csv", "jsonl": "json-lines",
           "json-lines": "json-lines"}.get(cfg.fmt)
    if fmt is None:
        raise ConfigError(f"unknown format {cfg.fmt!r}", key="format")

    seen = set()
    for s in sessions:
        ref = s.get("onset_from")
        if ref is not None and (s["subject"], ref) not in seen:
            raise ConfigError(f"{s['subject']}: onset_from={ref!r} needs that subject's "
                              f"{ref} session listed earlier", key="onset_from")
        seen.add((s["subject"], s["paradigm"]))

    results = []
    ref_onsets: dict[tuple, float] = {}
    with Staging(out) as stage:
        for s in sessions:
            rec = _load(s)
            prop = proposed
            ref = s.get("onset_from")
            if ref is not None:
                onset = ref_onsets.get((s["subject"], ref))
                if onset is None:
                    raise GraspBCIError(f"{s['subject']}: no onsets detected in the {ref} "
                                        f"session to reuse")
                prop = replace(proposed, gating=replace(proposed.gating, fixed_onset_s=onset))
            trials = prepare_dataset(rec, conventional)
            if trials.emg is not None and prop.gating.fixed_onset_s is None:
                found = [t for t in detect_trial_onsets(trials.emg, prop.gating) if t is not None]
                if found:
                    ref_onsets[(s["subject"], s["paradigm"])] = float(median(found))
            plan = stratified_folds(trials.labels, k, reps, seed)
            log.info("%s %s: %d trials, %dx%d CV", s["subject"], s["paradigm"],
                     len(trials), reps, k)
            comp = compare_pipelines(trials, conventional, prop, plan)
            results.append(SubjectResult(str(s["subject"]), str(s["paradigm"]), comp))
            tag = f"{s['subject']}_{s['paradigm']}".replace(" ", "")
            plot_cells(comp, stage.path(f"cells_{tag}.png"), f"{s['subject']} {s['paradigm']}")

        stage.path("results.csv").write_text(render_report(results, "csv"), encoding="utf-8")
        stage.path("report.md").write_text(render_report(results, "markdown"), encoding="utf-8")
        with open(stage.path("confusions.jsonl"), "w", encoding="utf-8") as fh:
            for r in results:
                for side in ("conventional", "proposed"):
                    rep = getattr(r.comparison, side)
                    fh.write(json.dumps({
                        "subject": r.subject_id, "paradigm": r.paradigm, "pipeline": side,
                        "confusion": np.asarray(rep.confusion).tolist(),
                        "chosen_segment_length_s": rep.chosen_segment_length_s,
                        "gating_fallback_rate": rep.gating_fallback_rate,
                    }, sort_keys=True) + "\n")
        plot_comparison(results, stage.path("comparison.png"))
        _copy_config(cfg, stage)
    sys.stdout.write(render_report(results, fmt))
    for r in results:
        print(f"{r.subject_id} {r.paradigm}: delta_mean = {r.comparison.delta_mean:+.4f}")
    return 0


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="TOML run configuration")
    common.add_argument("--out", metavar="DIR", help="output directory (overrides [output] dir)")
    common.add_argument("--seed", type=int, metavar="N", help="override the configured seed")
    common.add_argument("--format", choices=["csv", "md", "jsonl"],
                        help="report format printed to stdout")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="graspbci", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("synth", parents=[common], help="write a synthetic session bundle")
    p = sub.add_parser("inspect", parents=[common], help="summarize a recording")
    p.add_argument("path")
    sub.add_parser("preprocess", parents=[common], help="filter and write bundles")
    sub.add_parser("gate", parents=[common], help="EMG onset detection and segment decisions")
    sub.add_parser("compare", parents=[common], help="conventional vs proposed 10x10 CV")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args)
        if args.command == "synth":
            return cmd_synth(cfg)
        if args.command == "inspect":
            return cmd_inspect(cfg, args.path)
        if args.command == "preprocess":
            return cmd_preprocess(cfg)
        if args.command == "gate":
            return cmd_gate(cfg)
        return cmd_compare(cfg)
    except ConfigError as exc:
        sys.stderr.write(json.dumps(exc.record(), default=str) + "\n")
        return EXIT_CONFIG
    except GraspBCIError as exc:
        sys.stderr.write(json.dumps(exc.record(), default=str) + "\n")
        return EXIT_RUNTIME
    except OSError as exc:
        sys.stderr.write(json.dumps({"error": type(exc).__name__, "message": str(exc)}) + "\n")
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
