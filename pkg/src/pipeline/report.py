"""
Evaluation report and its key=value text format.

Floats are written with repr so that a report read back compares equal to
the one written.
"""

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Union

from src.errors import FormatError, ValidationError
from src.storage import atomic_write_text

logger = logging.getLogger(__name__)

METRIC_KEYS = ("tvd_t", "tvd_g", "exact_tvd_g", "losses", "lr_trace", "vq_error")
COUNT_KEYS = ("train_records", "dropped_records", "empty_k_bins", "empty_l_bins")


@dataclass
class EvalReport:
    """
    Attributes:
        tvd_t: TVD between the synthesized PMF and the test-set estimate
        tvd_g: TVD between the synthesized PMF and the exact target
        losses: Mean training loss per epoch
        lr_trace: Learning rate in effect during each epoch
        vq_errors: Mean quantization error per epoch
        exact_tvd_g: TVD_G of the exactly enumerated synthesized PMF, when affordable
        counts: Record and empty-bin counts from the data stages
        config: Echoed configuration keys
    """

    tvd_t: float
    tvd_g: float
    losses: List[float] = field(default_factory=list)
    lr_trace: List[float] = field(default_factory=list)
    vq_errors: List[float] = field(default_factory=list)
    exact_tvd_g: Optional[float] = None
    counts: Dict[str, int] = field(default_factory=dict)
    config: Dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        for name in ("tvd_t", "tvd_g", "exact_tvd_g"):
            value = getattr(self, name)
            if value is not None and not 0.0 <= value <= 1.0:
                raise ValidationError(f"{name} must lie in [0, 1], got {value}")
        if len(self.lr_trace) != len(self.losses):
            raise ValidationError("lr trace and loss trace differ in length")
        epochs = self.config.get("epochs")
        if epochs is not None and self.losses and int(epochs) != len(self.losses):
            raise ValidationError(f"loss trace has {len(self.losses)} entries for {epochs} epochs")

    def to_text(self) -> str:
        lines = [
            f"tvd_t={self.tvd_t!r}",
            f"tvd_g={self.tvd_g!r}",
            f"exact_tvd_g={'-' if self.exact_tvd_g is None else repr(self.exact_tvd_g)}",
            f"losses={_join(self.losses)}",
            f"lr_trace={_join(self.lr_trace)}",
            f"vq_error={_join(self.vq_errors)}",
        ]
        lines += [f"{key}={self.counts[key]}" for key in COUNT_KEYS if key in self.counts]
        lines += [f"{key}={value}" for key, value in self.config.items()]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "EvalReport":
        values: Dict[str, str] = {}
        for number, line in enumerate(text.splitlines(), start=1):
            if not line.strip():
                continue
            if "=" not in line:
                raise FormatError(f"report line {number} is not key=value: {line!r}")
            key, value = line.split("=", 1)
            if key in values:
                raise FormatError(f"duplicate report key '{key}'")
            values[key] = value

        missing = [k for k in METRIC_KEYS if k not in values]
        if missing:
            raise FormatError(f"report is missing keys: {', '.join(missing)}")
        try:
            return cls(
                tvd_t=float(values["tvd_t"]),
                tvd_g=float(values["tvd_g"]),
                exact_tvd_g=None if values["exact_tvd_g"] == "-" else float(values["exact_tvd_g"]),
                losses=_split(values["losses"]),
                lr_trace=_split(values["lr_trace"]),
                vq_errors=_split(values["vq_error"]),
                counts={k: int(values[k]) for k in COUNT_KEYS if k in values},
                config={k: v for k, v in values.items() if k not in METRIC_KEYS and k not in COUNT_KEYS},
            )
        except ValueError as e:
            raise FormatError(f"unparsable report value: {e}") from e

    def summary(self) -> Dict[str, str]:
        """Headline numbers for console output."""
        out = {"TVD_T": f"{self.tvd_t:.6f}", "TVD_G": f"{self.tvd_g:.6f}"}
        if self.exact_tvd_g is not None:
            out["TVD_G (exact)"] = f"{self.exact_tvd_g:.6f}"
        if self.losses:
            out["final loss"] = f"{self.losses[-1]:.6f}"
            out["final lr"] = f"{self.lr_trace[-1]:.3g}"
        return out


def _join(values: List[float]) -> str:
    return ",".join(repr(float(v)) for v in values)


def _split(text: str) -> List[float]:
    values = [float(v) for v in text.split(",")] if text else []
    if any(not math.isfinite(v) for v in values):
        raise ValueError(f"non-finite value in {text!r}")
    return values


def save_report(report: EvalReport, path: Union[str, Path]) -> Path:
    path = atomic_write_text(path, report.to_text())
    logger.info(f"Saved report to {path}")
    return path


def load_report(path: Union[str, Path]) -> EvalReport:
    return EvalReport.from_text(Path(path).read_text(encoding="utf-8"))
