"""Scenario harness: end-to-end case study reproductions over a fresh
three-node federation, with golden report output."""
from __future__ import annotations

from datetime import datetime
from pathlib import Path
from typing import Callable, Dict, List, Optional

from .agrochem import run_agrochem_scenario
from .beef import run_beef_scenario
from .coffee import run_coffee_scenario
from .ecosystem import Ecosystem
from .report import Assertion, ScenarioReport
from .soy import run_soy_scenario

SCENARIOS: Dict[str, Callable[[Ecosystem], ScenarioReport]] = {
    "coffee": run_coffee_scenario,
    "soy": run_soy_scenario,
    "agrochem": run_agrochem_scenario,
    "beef": run_beef_scenario,
}


def run_scenario(name: str, seed: int = 0, start: Optional[datetime] = None) -> ScenarioReport:
    """Each scenario runs over its own fresh ecosystem so reports are
    deterministic and order-independent."""
    if name not in SCENARIOS:
        raise KeyError(f"unknown scenario {name!r}; choose from {sorted(SCENARIOS)}")
    eco = Ecosystem(seed=seed, start=start)
    return SCENARIOS[name](eco)


def run_all(
    seed: int = 0,
    start: Optional[datetime] = None,
    report_dir: Optional[Path] = None,
) -> List[ScenarioReport]:
    reports = [run_scenario(name, seed=seed, start=start) for name in SCENARIOS]
    if report_dir is not None:
        report_dir = Path(report_dir)
        report_dir.mkdir(parents=True, exist_ok=True)
        summary_lines: List[str] = []
        for report in reports:
            report.write(report_dir)
            summary_lines.extend(report.summary_lines())
        (report_dir / "summary.tsv").write_text("\n".join(summary_lines) + "\n", encoding="utf-8")
    return reports


__all__ = [
    "Assertion",
    "Ecosystem",
    "SCENARIOS",
    "ScenarioReport",
    "run_all",
    "run_scenario",
]
