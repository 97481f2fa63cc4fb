from __future__ import annotations

import json
import platform
from pathlib import Path

import numpy as np
import scipy

from .. import __version__
from .config import ExperimentConfig
from .metrics import rows_to_csv


def manifest(config: ExperimentConfig, command: str, outputs: list[str], extra: dict | None = None) -> dict:
    out = {
        "command": command,
        "seed": config.seed,
        "config_sha256": config.digest(),
        "config": config.to_text().splitlines(),
        "versions": {
            "amastego": __version__,
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "python": platform.python_version(),
        },
        "outputs": sorted(outputs),
    }
    if extra:
        out.update(extra)
    return out


def write_outputs(out_dir: Path, files: dict[str, str], config: ExperimentConfig, command: str,
                  figures: list[Path] = (), extra: dict | None = None) -> Path:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    for name, text in files.items():
        (out_dir / name).write_text(text, encoding="utf-8")
    names = list(files) + [Path(f).name for f in figures]
    m = manifest(config, command, names, extra)
    path = out_dir / f"{command}_manifest.json"
    path.write_text(json.dumps(m, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def report_files(command: str, rows) -> dict[str, str]:
    return {f"{command}.csv": rows_to_csv(rows)}
