"""Run-directory persistence: metrics table, final report, checkpoints.

Every file is written whole and renamed into place, so a crash never leaves
a partially overwritten file. Decimal values are emitted with 9 significant
digits. A run directory is self-describing: resolved config + metrics +
report are enough to rerun the experiment exactly.
"""

from __future__ import annotations

import os
from pathlib import Path

import yaml

from .harness import AttackReport, EvalResult, IterationRecord
from .nets import save_checkpoint

__all__ = ["METRICS_COLUMNS", "atomic_write_text", "format_value", "RunWriter", "eval_report_dict"]

METRICS_COLUMNS = (
    "iteration",
    "samples",
    "mean_ext_return",
    "mean_int_return",
    "asr_eval",
    "tau",
    "lagrange_multiplier",
    "entropy_proxy",
    "wall_seconds",
)


def atomic_write_text(path, text: str) -> None:
    tmp = str(path) + ".tmp"
    with open(tmp, "w") as fh:
        fh.write(text)
    os.replace(tmp, path)


def format_value(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return str(value).lower()
    if isinstance(value, int):
        return str(value)
    return f"{value:.9g}"


def _metrics_line(rec: IterationRecord) -> str:
    fields = (
        rec.iteration,
        rec.samples,
        rec.mean_ext_return,
        rec.mean_int_return,
        rec.asr_eval,
        rec.tau,
        rec.multiplier,
        rec.entropy_proxy,
        rec.wall_seconds,
    )
    return ",".join(format_value(v) for v in fields)


def _round9(value: float) -> float:
    return float(f"{value:.9g}")


def eval_report_dict(result: EvalResult) -> dict:
    return {
        "episodes": result.episodes,
        "successes": result.successes,
        "mean_victim_reward": _round9(result.mean_victim_reward),
        "std_victim_reward": _round9(result.std_victim_reward),
        "mean_adv_return": _round9(result.mean_adv_return),
        "asr": _round9(result.asr),
    }


class RunWriter:
    """Single writer for one run directory."""

    def __init__(self, out_dir):
        self.out_dir = Path(out_dir)
        self.out_dir.mkdir(parents=True, exist_ok=True)
        self._rows: list[str] = []

    def write_resolved_config(self, config_dict: dict) -> None:
        atomic_write_text(self.out_dir / "config.yaml", yaml.safe_dump(config_dict, sort_keys=False))

    def append_metrics(self, record: IterationRecord) -> None:
        self._rows.append(_metrics_line(record))
        self._write_metrics()

    def _write_metrics(self) -> None:
        text = ",".join(METRICS_COLUMNS) + "\n" + "\n".join(self._rows)
        atomic_write_text(self.out_dir / "metrics.csv", text + "\n" if self._rows else text)

    def write_report(self, report: AttackReport) -> None:
        doc: dict = {
            "iterations": report.iterations,
            "samples": report.samples,
            "aborted": report.aborted,
            "victim_checksum": report.victim_checksum,
        }
        if report.final is not None:
            doc["final"] = eval_report_dict(report.final)
        atomic_write_text(self.out_dir / "report.yaml", yaml.safe_dump(doc, sort_keys=False))

    def write_eval_report(self, result: EvalResult, label: str) -> None:
        doc = {"kind": label, "final": eval_report_dict(result)}
        atomic_write_text(self.out_dir / "report.yaml", yaml.safe_dump(doc, sort_keys=False))

    def write_policy(self, net, params, name: str) -> Path:
        path = self.out_dir / name
        save_checkpoint(path, net, params)
        return path

    def flush_partial(self, report: AttackReport) -> None:
        self._write_metrics()
        self.write_report(report)

    def finish(self, report: AttackReport, net, params) -> None:
        self._write_metrics()
        self.write_report(report)
        self.write_policy(net, params, "adversary.ckpt")
