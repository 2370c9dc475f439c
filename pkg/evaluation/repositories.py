"""
Metrics CSV and JSON summary files
"""
import json
import math
from pathlib import Path

import pandas as pd

from core.exceptions import DatasetError
from core.logger import logger
from evaluation.entities import EvalResult, VolumeMetrics

METRICS_NAME = "metrics.csv"
SUMMARY_NAME = "summary.json"
CSV_COLUMNS = ["experiment", "volume_id", "dice", "assd"]


class ReportRepository:
    """
    One directory holding per-volume metrics of any number of experiments

    `metrics.csv` has exactly the columns experiment, volume_id, dice, assd
    (assd empty when undefined); `summary.json` maps each experiment to its
    aggregates, metadata and the ids of volumes where both masks are empty.
    """

    def __init__(self, root: Path):
        self.root = Path(root)

    @property
    def metrics_path(self) -> Path:
        return self.root / METRICS_NAME

    @property
    def summary_path(self) -> Path:
        return self.root / SUMMARY_NAME

    def save(self, results: list[EvalResult]) -> tuple[Path, Path]:
        self.root.mkdir(parents=True, exist_ok=True)
        rows = [
            {"experiment": r.experiment, "volume_id": m.volume_id, "dice": m.dice, "assd": m.assd}
            for r in results for m in r.per_volume
        ]
        pd.DataFrame(rows, columns=CSV_COLUMNS).to_csv(self.metrics_path, index=False)

        summary = {
            r.experiment: {
                **r.summary(),
                "both_empty_ids": [m.volume_id for m in r.per_volume if m.both_empty],
            }
            for r in results
        }
        self.summary_path.write_text(json.dumps(summary, indent=2, sort_keys=True))
        logger.info(f"🗂️ Wrote metrics of {len(results)} experiments to {self.root}")
        return self.metrics_path, self.summary_path

    def load(self) -> list[EvalResult]:
        if not self.metrics_path.exists():
            raise DatasetError(f"no {METRICS_NAME} in {self.root}")
        frame = pd.read_csv(self.metrics_path)
        summary = json.loads(self.summary_path.read_text()) if self.summary_path.exists() else {}

        results = []
        for experiment, group in frame.groupby("experiment", sort=False):
            info = summary.get(experiment, {})
            both_empty = set(info.get("both_empty_ids", []))
            per_volume = [
                VolumeMetrics(
                    volume_id=row.volume_id,
                    dice=float(row.dice),
                    assd=None if math.isnan(row.assd) else float(row.assd),
                    both_empty=row.volume_id in both_empty,
                )
                for row in group.itertuples(index=False)
            ]
            results.append(EvalResult(experiment=experiment, per_volume=per_volume, metadata=info.get("metadata", {})))
        return results
