"""
Write result tables and run manifests.

CSV bodies are rendered by pandas with 17 significant digits. Header lines
start with '#' and carry the tool version and the manifest hash; the hash
covers everything that determines the output (config content, command,
flags, seed, version) and leaves out the timestamp, so identical runs
produce byte-identical files.
"""

import hashlib
import json
import logging
from dataclasses import asdict
from pathlib import Path
from typing import Any, Dict, Iterable, List, Mapping, Optional, Sequence

import pandas as pd

from ..models.reports import RunManifest

logger = logging.getLogger(__name__)

FLOAT_FORMAT = "%.17g"


def manifest_hash(manifest: RunManifest) -> str:
    payload = {
        "config_hash": manifest.config_hash,
        "command": manifest.command,
        "flags": manifest.flags,
        "seed": manifest.seed,
        "version": manifest.version,
    }
    blob = json.dumps(payload, sort_keys=True, default=str).encode("utf-8")
    return hashlib.sha256(blob).hexdigest()


def render_csv(
    rows: Sequence[Mapping[str, Any]],
    manifest: RunManifest,
    columns: Optional[Sequence[str]] = None,
    extra_header: Iterable[str] = (),
) -> str:
    """CSV text with '#' header lines."""
    df = pd.DataFrame(list(rows), columns=list(columns) if columns is not None else None)
    header = [
        f"# carpetq {manifest.version}",
        f"# command: {manifest.command}",
        f"# manifest: {manifest_hash(manifest)}",
    ]
    header.extend(f"# {line}" for line in extra_header)
    body = df.to_csv(index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
    return "\n".join(header) + "\n" + body


def write_csv(
    path: Path,
    rows: Sequence[Mapping[str, Any]],
    manifest: RunManifest,
    columns: Optional[Sequence[str]] = None,
    extra_header: Iterable[str] = (),
) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(render_csv(rows, manifest, columns, extra_header), encoding="utf-8")
    manifest.outputs.append(str(path))
    logger.info("wrote %d rows to %s", len(rows), path)
    return path


def read_csv(path: Path) -> pd.DataFrame:
    """Read a CSV written by ``write_csv`` back into a DataFrame."""
    return pd.read_csv(path, comment="#")


def write_manifest(out_dir: Path, manifest: RunManifest) -> Path:
    path = Path(out_dir) / "manifest.json"
    path.parent.mkdir(parents=True, exist_ok=True)
    data: Dict[str, Any] = asdict(manifest)
    data["hash"] = manifest_hash(manifest)
    path.write_text(json.dumps(data, indent=2, sort_keys=True, default=str) + "\n", encoding="utf-8")
    return path


def markdown_table(rows: List[Mapping[str, Any]], floatfmt: str = ".10g") -> str:
    if not rows:
        return "_(no rows)_"
    return pd.DataFrame(rows).to_markdown(index=False, floatfmt=floatfmt)
