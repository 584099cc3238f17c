"""Scenario reports: per-step assertions, emitted artifacts, and golden
text/machine-readable renderings."""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List


@dataclass
class Assertion:
    step: str
    name: str
    expected: str
    actual: str

    @property
    def passed(self) -> bool:
        return self.expected == self.actual


@dataclass
class ScenarioReport:
    scenario: str
    steps: List[str] = field(default_factory=list)
    assertions: List[Assertion] = field(default_factory=list)
    artifacts: Dict[str, str] = field(default_factory=dict)
    errata: List[str] = field(default_factory=list)

    def step(self, description: str) -> None:
        self.steps.append(description)

    def check(self, name: str, expected, actual) -> Assertion:
        step = self.steps[-1] if self.steps else "-"
        assertion = Assertion(step=step, name=name, expected=str(expected), actual=str(actual))
        self.assertions.append(assertion)
        return assertion

    def artifact(self, name: str, value) -> None:
        self.artifacts[name] = str(value)

    def erratum(self, note: str) -> None:
        self.errata.append(note)

    @property
    def passed(self) -> bool:
        return all(a.passed for a in self.assertions)

    def summary_lines(self) -> List[str]:
        """One line per assertion: scenario step name expected actual verdict."""
        out = []
        for a in self.assertions:
            verdict = "PASS" if a.passed else "FAIL"
            out.append(
                f"{self.scenario}\t{a.step}\t{a.name}\t{a.expected}\t{a.actual}\t{verdict}"
            )
        return out

    def text(self) -> str:
        lines = [f"scenario: {self.scenario}", ""]
        lines.append("steps:")
        lines.extend(f"  {i + 1}. {s}" for i, s in enumerate(self.steps))
        lines.append("")
        lines.append("assertions:")
        for a in self.assertions:
            verdict = "PASS" if a.passed else "FAIL"
            lines.append(f"  [{verdict}] {a.step} :: {a.name}: expected {a.expected}, got {a.actual}")
        if self.artifacts:
            lines.append("")
            lines.append("artifacts:")
            lines.extend(f"  {k} = {v}" for k, v in sorted(self.artifacts.items()))
        if self.errata:
            lines.append("")
            lines.append("errata (source-material inconsistencies handled):")
            lines.extend(f"  - {e}" for e in self.errata)
        lines.append("")
        lines.append(f"result: {'PASS' if self.passed else 'FAIL'}")
        return "\n".join(lines) + "\n"

    def write(self, directory: Path) -> Path:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        path = directory / f"{self.scenario}.txt"
        path.write_text(self.text(), encoding="utf-8")
        return path
