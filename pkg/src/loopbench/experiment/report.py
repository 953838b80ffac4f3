"""Per-environment metric tables and pairwise significance matrices."""
from __future__ import annotations

import csv
import itertools
import logging
from collections import defaultdict
from pathlib import Path
from typing import Iterable

from ..metrics import ScenarioStats, TrialMetrics, aggregate, two_prop_z
from .runner import read_records

COLUMNS = ("Model/Agent", "Planner Type", "GAR", "TCR", "CFP", "PCR", "NCR", "# of Valid Trials")
METRICS = ("gar", "tcr", "cfp", "pcr", "ncr")
SIGNIFICANCE_COLUMNS = (
    "metric", "scenario_a", "scenario_b", "p_a", "n_a", "p_b", "n_b", "z", "p_value", "significant",
)
ABSENT = "–"

log = logging.getLogger(__name__)


class EmptyResults(ValueError):
    pass


def fmt(value: float | None) -> str:
    return ABSENT if value is None else f"{value:.3f}"


def scenario_stats(records: Iterable[dict]) -> dict[str, dict[tuple[str, str], ScenarioStats]]:
    """env -> (agent, variant) -> stats, from records that carry metrics."""
    grouped: dict[str, dict[tuple[str, str], list[TrialMetrics]]] = defaultdict(lambda: defaultdict(list))
    skipped = 0
    for rec in records:
        if rec.get("metrics") is None:
            skipped += 1
            continue
        grouped[rec["env"]][(rec["agent"], rec["variant"])].append(TrialMetrics(**rec["metrics"]))
    if skipped:
        log.warning("%d record(s) without metrics left out of the report", skipped)
    return {env: {key: aggregate(ms) for key, ms in cells.items()} for env, cells in grouped.items()}


def sample_size(stats: ScenarioStats, metric: str) -> int:
    c = stats.counts
    return {
        "gar": stats.n_trials,
        "tcr": stats.n_trials,
        "cfp": stats.n_total,
        "pcr": c["pos_opp"],
        "ncr": c["neg_opp"],
    }[metric]


def table_rows(cells: dict[tuple[str, str], ScenarioStats]) -> list[list[str]]:
    rows = []
    for agent, variant in sorted(cells):
        s = cells[(agent, variant)]
        rows.append([agent, variant, fmt(s.gar), fmt(s.tcr), fmt(s.cfp), fmt(s.pcr), fmt(s.ncr), str(s.n_trials)])
    return rows


def significance_rows(cells: dict[tuple[str, str], ScenarioStats]) -> list[list[str]]:
    rows = []
    keys = sorted(cells)
    for metric in METRICS:
        for a, b in itertools.permutations(keys, 2):
            sa, sb = cells[a], cells[b]
            pa, pb = getattr(sa, metric), getattr(sb, metric)
            na, nb = sample_size(sa, metric), sample_size(sb, metric)
            label_a, label_b = "/".join(a), "/".join(b)
            if pa is None or pb is None or na < 1 or nb < 1:
                rows.append([metric, label_a, label_b, fmt(pa), str(na), fmt(pb), str(nb), ABSENT, ABSENT, ABSENT])
                continue
            r = two_prop_z(pa, na, pb, nb)
            rows.append([
                metric, label_a, label_b, fmt(pa), str(na), fmt(pb), str(nb),
                f"{r.z:.4f}", f"{r.p_value:.6f}", "yes" if r.significant else "no",
            ])
    return rows


def z_matrix(cells: dict[tuple[str, str], ScenarioStats], metric: str) -> list[list[str]]:
    """Square matrix of z(row vs column); ``*`` marks p < 0.05."""
    keys = sorted(cells)
    out = [["Scenario", *("/".join(k) for k in keys)]]
    for a in keys:
        row = ["/".join(a)]
        for b in keys:
            pa, pb = getattr(cells[a], metric), getattr(cells[b], metric)
            na, nb = sample_size(cells[a], metric), sample_size(cells[b], metric)
            if pa is None or pb is None or na < 1 or nb < 1:
                row.append(ABSENT)
                continue
            r = two_prop_z(pa, na, pb, nb)
            row.append(f"{r.z:.3f}" + ("*" if r.significant else ""))
        out.append(row)
    return out


def _write(path: Path, header: Iterable[str] | None, rows: list[list[str]]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        if header is not None:
            w.writerow(header)
        w.writerows(rows)


def generate_report(results: str | Path, out: str | Path | None = None, records: list[dict] | None = None) -> Path:
    """Write ``<env>.csv``, ``<env>_significance.csv`` and ``<env>_z_<metric>.csv``."""
    results = Path(results)
    recs = records if records is not None else read_records(results)
    stats = scenario_stats(recs)
    if not stats:
        raise EmptyResults(f"no records with metrics in {results}")
    out_dir = Path(out) if out is not None else (results if results.is_dir() else results.parent) / "report"
    out_dir.mkdir(parents=True, exist_ok=True)
    for env, cells in sorted(stats.items()):
        _write(out_dir / f"{env}.csv", COLUMNS, table_rows(cells))
        _write(out_dir / f"{env}_significance.csv", SIGNIFICANCE_COLUMNS, significance_rows(cells))
        for metric in METRICS:
            _write(out_dir / f"{env}_z_{metric}.csv", None, z_matrix(cells, metric))
    return out_dir


def read_table(path: str | Path) -> list[dict[str, str]]:
    with open(path, encoding="utf-8", newline="") as fh:
        return list(csv.DictReader(fh))
