"""
Report handler for writing run artifacts and formatting summaries.
"""
import csv
import json
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Union

import numpy as np

from config.formats import FormatTemplates


def _plain(value: Any) -> Any:
    """Convert numpy scalars and arrays to JSON-friendly values."""
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, dict):
        return {str(k): _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    return value


class ReportHandler:
    """Writes CSV/JSON artifacts and formats console summaries."""

    def __init__(self, output_dir: Optional[Union[str, Path]] = None):
        self.output_dir = Path(output_dir) if output_dir is not None else None

    def resolve(self, name: Union[str, Path]) -> Path:
        """Place a relative name under the output directory."""
        path = Path(name)
        if self.output_dir is not None and not path.is_absolute():
            path = self.output_dir / path
        return path

    def write_csv(
        self,
        name: Union[str, Path],
        fields: List[str],
        rows: Iterable[Dict[str, Any]],
        preamble: str = ''
    ) -> Path:
        """
        Write rows as CSV with a fixed column order.

        Args:
            name: File name, relative to the output directory
            fields: Column order
            rows: Dicts keyed by field name
            preamble: Text written before the header (e.g. a comment line)

        Returns:
            Path of the written file
        """
        path = self.resolve(name)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, 'w', newline='', encoding='utf-8') as f:
            f.write(preamble)
            writer = csv.DictWriter(f, fieldnames=fields, lineterminator='\n')
            writer.writeheader()
            for row in rows:
                writer.writerow({k: _plain(row.get(k, '')) for k in fields})
        return path

    def read_csv(self, name: Union[str, Path]) -> List[Dict[str, str]]:
        """Read a CSV written by write_csv, skipping '#' preamble lines."""
        path = self.resolve(name)
        if not path.exists():
            raise FileNotFoundError(f"CSV file not found: {path}")
        with open(path, newline='', encoding='utf-8') as f:
            lines = [line for line in f if not line.startswith('#')]
        return list(csv.DictReader(lines))

    def write_json(self, name: Union[str, Path], data: Dict[str, Any]) -> Path:
        path = self.resolve(name)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(_plain(data), indent=2), encoding='utf-8')
        return path

    def write_metrics(self, name: Union[str, Path], rows: List[Dict[str, Any]]) -> Path:
        return self.write_csv(name, FormatTemplates.METRICS_FIELDS, rows)

    def write_trajectory(self, name: Union[str, Path], rows: List[Dict[str, Any]]) -> Path:
        return self.write_csv(name, FormatTemplates.TRAJECTORY_FIELDS, rows)

    def write_plot(self, name: Union[str, Path], rows: List[Dict[str, Any]], window: int) -> Path:
        return self.write_csv(
            name, FormatTemplates.PLOT_FIELDS, rows,
            preamble=FormatTemplates.format_plot_preamble(window)
        )

    def format_success_table(self, rates: Dict[str, float],
                             reference: Optional[Dict[str, float]] = None) -> str:
        """
        Format success rates per mode, with reference values when known.

        Returns:
            Multi-line table string
        """
        if not rates:
            return "No evaluation results."
        formatted = "📊 Success rates:\n"
        for mode, rate in rates.items():
            formatted += f"  - {mode}: {rate * 100:.1f}%"
            if reference and mode in reference:
                formatted += f" (reference {reference[mode] * 100:.1f}%)"
            formatted += "\n"
        return formatted

    def format_oracle_summary(self, satisfied: int, reachable: int, total: int, mismatches: int) -> str:
        status = "✅" if mismatches == 0 else "❌"
        return (f"{status} Greedy policy satisfies {satisfied}/{total} (cell, q) pairs; "
                f"ground truth {reachable}/{total}; mismatches {mismatches}")
