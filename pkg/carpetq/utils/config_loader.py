"""Load carpet configs from JSON files."""
import hashlib
import json
import logging
from pathlib import Path
from typing import Optional, Tuple, Union

from pydantic import ValidationError

from ..errors import ConfigError
from ..models.carpet import CarpetSpec, DerivedQuantities
from ..services.carpet_service import validate_spec

logger = logging.getLogger(__name__)


def _field_path(loc) -> str:
    return ".".join(str(part) for part in loc)


def parse_config(text: str, source: str = "<string>") -> CarpetSpec:
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(
            f"{source}: invalid JSON: {e.msg}", {"line": e.lineno, "column": e.colno}
        ) from e
    try:
        return CarpetSpec.model_validate(raw)
    except ValidationError as e:
        first = e.errors()[0]
        raise ConfigError(
            f"{source}: {first['msg']} at {_field_path(first['loc']) or '<root>'}",
            {"field": _field_path(first["loc"]), "errors": len(e.errors())},
        ) from e


def config_hash(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def load_config(
    path: Union[str, Path], separation_gap: Optional[int] = None
) -> Tuple[DerivedQuantities, str]:
    """Read, parse and validate a config; returns (carpet, sha256 of the file)."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e.strerror}", {"path": str(path)}) from e
    spec = parse_config(text, str(path))
    carpet = validate_spec(spec, separation_gap)
    logger.info("loaded %s: n=%d m=%d N=%d separated=%s", path.name, carpet.n, carpet.m, carpet.N, carpet.separated)
    return carpet, config_hash(text)
