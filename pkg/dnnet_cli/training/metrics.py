"""
Metrics collected while training a nested model
"""

from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

import numpy as np
import pandas as pd

from ..core.errors import DataError

CSV_COLUMNS = ["step", "l", "c", "loss", "accuracy"]


@dataclass
class EvalRecord:
    """Accuracy and loss of every head at one evaluation step"""
    step: int
    accuracy: np.ndarray
    loss: np.ndarray
    aggregate: float
    learning_rate: float = 0.0

    def to_dict(self) -> Dict[str, Any]:
        data = asdict(self)
        data['accuracy'] = self.accuracy.tolist()
        data['loss'] = self.loss.tolist()
        return data


@dataclass
class MetricsLog:
    """Evaluation history of one training run"""
    weights: str = "flat"
    records: List[EvalRecord] = field(default_factory=list)
    train_losses: List[float] = field(default_factory=list)

    def add(self, record: EvalRecord) -> None:
        self.records.append(record)

    @property
    def final(self) -> Optional[EvalRecord]:
        return self.records[-1] if self.records else None

    @property
    def steps(self) -> List[int]:
        return [r.step for r in self.records]

    def to_frame(self) -> pd.DataFrame:
        """Long format: one row per (step, head)"""
        rows = []
        for record in self.records:
            L, C = record.accuracy.shape
            for l in range(L):
                for c in range(C):
                    rows.append((record.step, l + 1, c + 1, float(record.loss[l, c]), float(record.accuracy[l, c])))
        return pd.DataFrame(rows, columns=CSV_COLUMNS)

    def to_csv(self, path: Union[str, Path]) -> Path:
        """CSV with a leading '# lambda: ...' line naming the loss weights"""
        path = Path(path).expanduser()
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="", encoding="utf-8") as f:
            f.write(f"# lambda: {self.weights}\n")
            self.to_frame().to_csv(f, index=False)
        return path

    @classmethod
    def from_csv(cls, path: Union[str, Path]) -> "MetricsLog":
        path = Path(path).expanduser()
        try:
            with open(path, "r", encoding="utf-8") as f:
                first = f.readline().strip()
            frame = pd.read_csv(path, comment="#")
        except (OSError, pd.errors.ParserError) as e:
            raise DataError(f"Cannot read metrics file {path}: {e}")
        if list(frame.columns) != CSV_COLUMNS:
            raise DataError(f"Metrics file {path} must have columns {CSV_COLUMNS}")
        weights = first.split(":", 1)[1].strip() if first.startswith("# lambda:") else "unknown"
        log = cls(weights=weights)
        for step, rows in frame.groupby("step", sort=True):
            L, C = int(rows["l"].max()), int(rows["c"].max())
            accuracy = np.zeros((L, C))
            loss = np.zeros((L, C))
            accuracy[rows["l"] - 1, rows["c"] - 1] = rows["accuracy"].to_numpy()
            loss[rows["l"] - 1, rows["c"] - 1] = rows["loss"].to_numpy()
            log.add(EvalRecord(int(step), accuracy, loss, float("nan")))
        return log

    def to_dict(self) -> Dict[str, Any]:
        return {
            'weights': self.weights,
            'records': [r.to_dict() for r in self.records],
            'train_losses': list(self.train_losses),
        }
