"""Residual reports shared by the library checks and the command line."""
from __future__ import annotations

import json
from dataclasses import dataclass, field


@dataclass
class CheckResult:
    """One named check.

    ``bound="upper"`` passes when value <= threshold (residuals);
    ``bound="lower"`` passes when value > threshold (singular values, dets).
    """

    name: str
    value: float
    threshold: float
    bound: str = "upper"
    witness: dict = None
    detail: str = ""

    @property
    def passed(self):
        if self.bound == "upper":
            return self.value <= self.threshold
        return self.value > self.threshold

    def to_dict(self):
        return {
            "name": self.name,
            "value": float(self.value),
            "threshold": float(self.threshold),
            "bound": self.bound,
            "passed": self.passed,
            "witness": None if self.witness is None else {k: float(v) for k, v in self.witness.items()},
            "detail": self.detail,
        }

    def line(self):
        status = "PASS" if self.passed else "FAIL"
        rel = "<=" if self.bound == "upper" else ">"
        text = f"[{status}] {self.name}: {self.value:.3e} (need {rel} {self.threshold:.1e})"
        if self.witness:
            where = ", ".join(f"{k}={v:.6g}" for k, v in self.witness.items())
            text += f" at ({where})"
        if self.detail:
            text += f" -- {self.detail}"
        return text


@dataclass
class CheckReport:
    checks: list = field(default_factory=list)
    info: dict = field(default_factory=dict)

    def add(self, check):
        self.checks.append(check)
        return check

    def extend(self, other):
        self.checks.extend(other.checks)
        self.info.update(other.info)

    @property
    def passed(self):
        return all(c.passed for c in self.checks)

    def __getitem__(self, name):
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def to_dict(self):
        return {
            "status": "pass" if self.passed else "fail",
            "checks": [c.to_dict() for c in self.checks],
            "info": self.info,
        }

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def to_text(self):
        lines = [c.line() for c in self.checks]
        for k in sorted(self.info):
            lines.append(f"{k}: {self.info[k]}")
        lines.append("overall: " + ("PASS" if self.passed else "FAIL"))
        return "\n".join(lines) + "\n"
