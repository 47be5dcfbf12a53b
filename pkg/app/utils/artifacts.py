"""Self-describing columnar text files shared by every stage

Layout: a block of `# key=value` header lines, the first of which names the
artifact kind and schema version, followed by a CSV table with a header row.
"""

import io
import json
from pathlib import Path
from typing import Any, Optional

import pandas as pd

from app.config import Settings, config_hash, config_json
from app.core.exceptions import ArtifactFormatException

SCHEMA_VERSION = "1"
FLOAT_FORMAT = "%.17g"


def run_header(config: Optional[Settings]) -> dict[str, str]:
    """Header entries echoing the effective configuration"""
    if config is None:
        return {}
    return {"config_hash": config_hash(config), "config": config_json(config)}


def write_table(
    path: Path,
    kind: str,
    frame: pd.DataFrame,
    header: Optional[dict[str, Any]] = None,
) -> Path:
    """
    Write a table with its header block

    Args:
        path: Destination file
        kind: Artifact kind, checked when reading back
        frame: Table body
        header: Extra key/value pairs; non-string values are JSON encoded

    Returns:
        The written path
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [f"# drivecode:{kind} schema_version={SCHEMA_VERSION}"]
    for key, value in (header or {}).items():
        text = value if isinstance(value, str) else json.dumps(value, sort_keys=True)
        lines.append(f"# {key}={text}")

    body = frame.to_csv(index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
    path.write_text("\n".join(lines) + "\n" + body, encoding="utf-8")
    return path


def read_table(path: Path, kind: str) -> tuple[dict[str, str], pd.DataFrame]:
    """
    Read a table written by write_table

    Raises:
        ArtifactFormatException: Wrong kind, unsupported version or unreadable body
    """
    path = Path(path)
    if not path.is_file():
        raise ArtifactFormatException(f"Artifact not found: {path}", path=str(path))

    text = path.read_text(encoding="utf-8")
    lines = text.splitlines()
    if not lines or not lines[0].startswith(f"# drivecode:{kind} "):
        raise ArtifactFormatException(f"Not a {kind} artifact", path=str(path))

    version = lines[0].rsplit("schema_version=", 1)[-1].strip()
    if version != SCHEMA_VERSION:
        raise ArtifactFormatException(
            "Unsupported schema version", path=str(path), schema_version=version
        )

    header: dict[str, str] = {}
    n_header = 1
    for line in lines[1:]:
        if not line.startswith("# "):
            break
        key, _, value = line[2:].partition("=")
        header[key] = value
        n_header += 1

    body = "\n".join(lines[n_header:])
    try:
        frame = pd.read_csv(io.StringIO(body), float_precision="round_trip")
    except (pd.errors.ParserError, pd.errors.EmptyDataError) as e:
        raise ArtifactFormatException(
            "Unreadable artifact body", path=str(path), details={"parser_error": str(e)}
        )
    return header, frame
